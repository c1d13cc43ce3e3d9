#pragma once

#include <torch/torch.h>

namespace e2s::nn {

// [B] integer lengths -> [B, 1, max_len] mask of the given floating dtype.
torch::Tensor sequence_mask(const torch::Tensor& lengths, int64_t max_len,
                            torch::Dtype dtype = torch::kFloat);

// Layer norm over the channel axis of a [B, C, T] tensor.
class ChannelLayerNormImpl : public torch::nn::Module {
 public:
  explicit ChannelLayerNormImpl(int64_t channels, double eps = 1e-5);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t channels_;
  double eps_;
  torch::Tensor gamma_, beta_;
};
TORCH_MODULE(ChannelLayerNorm);

// Non-causal WaveNet stack: dilated convolutions with gated tanh/sigmoid
// units, residual and skip paths. Output is the sum of the skip paths.
class WaveNetImpl : public torch::nn::Module {
 public:
  WaveNetImpl(int64_t hidden, int64_t kernel_size, int64_t dilation_rate,
              int64_t n_layers, double dropout = 0.0);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& mask);

 private:
  int64_t hidden_;
  torch::nn::ModuleList in_layers_;
  torch::nn::ModuleList res_skip_layers_;
  torch::nn::Dropout dropout_;
};
TORCH_MODULE(WaveNet);

// Element-wise log N(z; mean, exp(log_scale)^2).
torch::Tensor gaussian_log_prob(const torch::Tensor& z, const torch::Tensor& mean,
                                const torch::Tensor& log_scale);

// Number of scalar parameters.
int64_t parameter_count(torch::nn::Module& module);

}  // namespace e2s::nn
