#include "e2s/nn/eeg_module.hpp"

#include <cmath>
#include <string>

#include "e2s/error.hpp"

namespace e2s::nn {

int64_t EegEncoderConfig::downsample_factor() const {
  int64_t f = 1;
  for (int64_t s : conv_strides) f *= s;
  return f;
}

void EegEncoderConfig::validate() const {
  if (n_channels_in < 1) throw ConfigError("eeg.n_channels_in must be >= 1");
  if (hidden_dim < 1 || embed_dim < 1) throw ConfigError("eeg dims must be >= 1");
  if (n_conv_blocks < 1 || static_cast<int64_t>(conv_strides.size()) != n_conv_blocks) {
    throw ConfigError("eeg.conv_strides must list one stride per conv block");
  }
  for (int64_t s : conv_strides) {
    if (s < 1) throw ConfigError("eeg.conv_strides entries must be >= 1");
  }
  if (s4_state_dim < 2 || s4_state_dim % 2 != 0) {
    throw ConfigError("eeg.s4_state_dim must be even and >= 2");
  }
  if (!(dt_min > 0.0 && dt_min <= dt_max)) throw ConfigError("eeg dt range invalid");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("eeg.dropout must be in [0, 1)");
}

ConvBlockImpl::ConvBlockImpl(int64_t in, int64_t out, int64_t stride, double dropout)
    : stride_(stride) {
  // kernel = stride + 2 with padding 1 maps a length divisible by the stride
  // to exactly length / stride.
  conv_ = register_module(
      "conv",
      torch::nn::Conv1d(torch::nn::Conv1dOptions(in, out, stride + 2).stride(stride).padding(1)));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
  norm_ = register_module("norm", ChannelLayerNorm(out));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  return torch::gelu(norm_(dropout_(conv_(x))));
}

DeconvBlockImpl::DeconvBlockImpl(int64_t in, int64_t out, int64_t stride, double dropout)
    : stride_(stride) {
  conv_ = register_module(
      "conv", torch::nn::ConvTranspose1d(
                  torch::nn::ConvTranspose1dOptions(in, out, stride + 2).stride(stride).padding(1)));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
  norm_ = register_module("norm", ChannelLayerNorm(out));
}

torch::Tensor DeconvBlockImpl::forward(const torch::Tensor& x) {
  return torch::gelu(norm_(dropout_(conv_(x))));
}

EegAutoencoderImpl::EegAutoencoderImpl(const EegEncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (int64_t i = 0; i < cfg_.n_conv_blocks; ++i) {
    const int64_t in = i == 0 ? cfg_.n_channels_in : cfg_.hidden_dim;
    conv_blocks_->push_back(ConvBlock(in, cfg_.hidden_dim, cfg_.conv_strides[i], cfg_.dropout));
  }
  for (int64_t i = 0; i < cfg_.n_s4_layers; ++i) {
    s4_layers_->push_back(
        S4Block(cfg_.hidden_dim, cfg_.s4_state_dim, cfg_.dt_min, cfg_.dt_max, cfg_.dropout));
  }
  to_embedding_ = torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg_.hidden_dim, cfg_.embed_dim, 1));
  from_embedding_ =
      torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg_.embed_dim, cfg_.hidden_dim, 1));
  for (int64_t i = cfg_.n_conv_blocks - 1; i >= 0; --i) {
    deconv_blocks_->push_back(
        DeconvBlock(cfg_.hidden_dim, cfg_.hidden_dim, cfg_.conv_strides[i], cfg_.dropout));
  }
  to_channels_ = torch::nn::Conv1d(
      torch::nn::Conv1dOptions(cfg_.hidden_dim, cfg_.n_channels_in, 3).padding(1));

  register_module("conv_blocks", conv_blocks_);
  register_module("s4_layers", s4_layers_);
  register_module("to_embedding", to_embedding_);
  register_module("from_embedding", from_embedding_);
  register_module("deconv_blocks", deconv_blocks_);
  register_module("to_channels", to_channels_);
}

EegEncoding EegAutoencoderImpl::encode(const torch::Tensor& x, const torch::Tensor& lengths) {
  if (x.dim() != 3 || x.size(1) != cfg_.n_channels_in) {
    throw ConfigError("EEG input has " + std::to_string(x.dim() == 3 ? x.size(1) : -1) +
                      " channels, encoder expects " + std::to_string(cfg_.n_channels_in));
  }
  const int64_t factor = cfg_.downsample_factor();
  const int64_t t = x.size(2);
  const int64_t padded = (t + factor - 1) / factor * factor;
  auto h = padded > t ? torch::constant_pad_nd(x, {0, padded - t}) : x;

  auto lens = lengths.to(torch::kLong);
  h = h * sequence_mask(lens, padded, x.scalar_type());
  for (const auto& m : *conv_blocks_) {
    auto block = m->as<ConvBlock>();
    lens = (lens + block->stride() - 1).div(block->stride(), "floor");
    h = block->forward(h) * sequence_mask(lens, h.size(2) / block->stride(), x.scalar_type());
  }
  auto mask = sequence_mask(lens, h.size(2), x.scalar_type());
  for (const auto& m : *s4_layers_) h = m->as<S4Block>()->forward(h, mask);
  return {to_embedding_(h) * mask, lens, mask};
}

torch::Tensor EegAutoencoderImpl::decode(const torch::Tensor& embedding,
                                         const torch::Tensor& frame_mask) {
  if (embedding.dim() != 3 || embedding.size(1) != cfg_.embed_dim) {
    throw ConfigError("EEG embedding dimension does not match decoder config");
  }
  auto h = from_embedding_(embedding) * frame_mask;
  auto mask = frame_mask;
  for (const auto& m : *deconv_blocks_) {
    auto block = m->as<DeconvBlock>();
    h = block->forward(h);
    mask = mask.repeat_interleave(block->stride(), 2);
    h = h * mask;
  }
  return to_channels_(h) * mask;
}

std::vector<torch::Tensor> EegAutoencoderImpl::encoder_parameters() const {
  std::vector<torch::Tensor> out;
  for (auto* m : {static_cast<const torch::nn::Module*>(conv_blocks_.get()),
                  static_cast<const torch::nn::Module*>(s4_layers_.get()),
                  static_cast<const torch::nn::Module*>(to_embedding_.get())}) {
    auto ps = m->parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

torch::Tensor eeg_cosine_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                              const torch::Tensor& lengths) {
  const int64_t t = std::min(x.size(2), x_hat.size(2));
  const auto mask = sequence_mask(lengths, t, x.scalar_type());
  const auto a = x.narrow(2, 0, t) * mask;
  const auto b = x_hat.narrow(2, 0, t) * mask;
  const auto dot = (a * b).sum(2);
  const auto denom = torch::sqrt((a * a).sum(2)) * torch::sqrt((b * b).sum(2));
  // exact zeros only, a NaN norm has to stay NaN
  const auto zero = denom == 0;
  const auto cos = torch::where(zero, torch::zeros_like(denom),
                                dot / torch::where(zero, torch::ones_like(denom), denom));
  return (1.0 - cos.mean(1)).mean();
}

double eeg_reconstruction_loss(const EegRecording& x, const EegRecording& x_hat) {
  if (x.n_channels() != x_hat.n_channels() || x.n_timesteps() != x_hat.n_timesteps()) {
    throw InvalidInput("reconstruction loss needs recordings of identical shape");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < x.n_channels(); ++c) {
    const auto a = x.samples.row(c);
    const auto b = x_hat.samples.row(c);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    total += denom != 0.0 ? dot / denom : 0.0;
  }
  return 1.0 - total / static_cast<double>(x.n_channels());
}

torch::Tensor recording_to_tensor(const EegRecording& x) {
  auto t = torch::empty({1, static_cast<int64_t>(x.n_channels()),
                         static_cast<int64_t>(x.n_timesteps())},
                        torch::kDouble);
  std::copy(x.samples.data().begin(), x.samples.data().end(), t.data_ptr<double>());
  return t.to(torch::kFloat);
}

EegEmbeddingSequence eeg_encode(EegAutoencoder& model, const EegRecording& x,
                                double expected_fs) {
  if (x.fs != expected_fs) {
    throw InvalidInput("EEG must be preprocessed to " + std::to_string(expected_fs) +
                       " Hz before encoding, got " + std::to_string(x.fs) + " Hz");
  }
  if (static_cast<int64_t>(x.n_channels()) != model->config().n_channels_in) {
    throw ConfigError("EEG has " + std::to_string(x.n_channels()) +
                      " channels, encoder expects " +
                      std::to_string(model->config().n_channels_in));
  }
  torch::NoGradGuard no_grad;
  const auto dtype = model->parameters().front().scalar_type();
  auto input = recording_to_tensor(x).to(dtype);
  auto lengths = torch::full({1}, static_cast<int64_t>(x.n_timesteps()), torch::kLong);
  auto enc = model->encode(input, lengths);
  auto values = enc.embedding[0].to(torch::kDouble).contiguous();
  EegEmbeddingSequence out;
  out.values = Matrix(static_cast<std::size_t>(values.size(0)),
                      static_cast<std::size_t>(values.size(1)));
  std::copy(values.data_ptr<double>(), values.data_ptr<double>() + values.numel(),
            out.values.data().begin());
  out.frame_rate = x.fs / static_cast<double>(model->config().downsample_factor());
  return out;
}

EegRecording eeg_decode(EegAutoencoder& model, const EegEmbeddingSequence& e,
                        const EegRecording& like) {
  if (static_cast<int64_t>(e.values.rows()) != model->config().embed_dim) {
    throw ConfigError("embedding dimension does not match decoder config");
  }
  torch::NoGradGuard no_grad;
  const auto dtype = model->parameters().front().scalar_type();
  auto emb = torch::empty({1, static_cast<int64_t>(e.values.rows()),
                           static_cast<int64_t>(e.values.cols())},
                          torch::kDouble);
  std::copy(e.values.data().begin(), e.values.data().end(), emb.data_ptr<double>());
  auto mask = torch::ones({1, 1, emb.size(2)}, torch::TensorOptions().dtype(dtype));
  auto out = model->decode(emb.to(dtype), mask)[0].to(torch::kDouble).contiguous();
  EegRecording rec;
  rec.fs = like.fs;
  rec.channel_labels = like.channel_labels;
  rec.subject_id = like.subject_id;
  rec.stimulus_id = like.stimulus_id;
  rec.samples = Matrix(static_cast<std::size_t>(out.size(0)),
                       static_cast<std::size_t>(out.size(1)));
  std::copy(out.data_ptr<double>(), out.data_ptr<double>() + out.numel(),
            rec.samples.data().begin());
  return rec;
}

}  // namespace e2s::nn
