#include "e2s/nn/layers.hpp"

#include <cmath>
#include <numbers>

namespace e2s::nn {

torch::Tensor sequence_mask(const torch::Tensor& lengths, int64_t max_len,
                            torch::Dtype dtype) {
  auto range = torch::arange(max_len, lengths.options().dtype(torch::kLong));
  auto mask = range.unsqueeze(0) < lengths.to(torch::kLong).unsqueeze(1);
  return mask.unsqueeze(1).to(dtype);
}

ChannelLayerNormImpl::ChannelLayerNormImpl(int64_t channels, double eps)
    : channels_(channels), eps_(eps) {
  gamma_ = register_parameter("gamma", torch::ones({channels}));
  beta_ = register_parameter("beta", torch::zeros({channels}));
}

torch::Tensor ChannelLayerNormImpl::forward(const torch::Tensor& x) {
  auto y = torch::layer_norm(x.transpose(1, 2), {channels_}, gamma_, beta_, eps_);
  return y.transpose(1, 2);
}

WaveNetImpl::WaveNetImpl(int64_t hidden, int64_t kernel_size, int64_t dilation_rate,
                         int64_t n_layers, double dropout)
    : hidden_(hidden), dropout_(dropout) {
  int64_t dilation = 1;
  for (int64_t i = 0; i < n_layers; ++i) {
    const int64_t padding = (kernel_size * dilation - dilation) / 2;
    in_layers_->push_back(torch::nn::Conv1d(
        torch::nn::Conv1dOptions(hidden, 2 * hidden, kernel_size)
            .dilation(dilation)
            .padding(padding)));
    const int64_t res_skip = i < n_layers - 1 ? 2 * hidden : hidden;
    res_skip_layers_->push_back(
        torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, res_skip, 1)));
    dilation *= dilation_rate;
  }
  register_module("in_layers", in_layers_);
  register_module("res_skip_layers", res_skip_layers_);
  register_module("dropout", dropout_);
}

torch::Tensor WaveNetImpl::forward(torch::Tensor x, const torch::Tensor& mask) {
  auto output = torch::zeros_like(x);
  const auto n = in_layers_->size();
  for (size_t i = 0; i < n; ++i) {
    auto x_in = in_layers_[i]->as<torch::nn::Conv1d>()->forward(x);
    auto acts = torch::tanh(x_in.narrow(1, 0, hidden_)) *
                torch::sigmoid(x_in.narrow(1, hidden_, hidden_));
    acts = dropout_(acts);
    auto rs = res_skip_layers_[i]->as<torch::nn::Conv1d>()->forward(acts);
    if (i + 1 < n) {
      x = (x + rs.narrow(1, 0, hidden_)) * mask;
      output = output + rs.narrow(1, hidden_, hidden_);
    } else {
      output = output + rs;
    }
  }
  return output * mask;
}

torch::Tensor gaussian_log_prob(const torch::Tensor& z, const torch::Tensor& mean,
                                const torch::Tensor& log_scale) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  auto standardized = (z - mean) * torch::exp(-log_scale);
  return -log_scale - half_log_2pi - 0.5 * standardized * standardized;
}

int64_t parameter_count(torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace e2s::nn
