#include "e2s/nn/connector.hpp"

#include <cmath>
#include <string>

#include "e2s/error.hpp"

namespace e2s::nn {

namespace F = torch::nn::functional;

void ConnectorConfig::validate() const {
  if (latent_dim < 2 || latent_dim % 2 != 0) {
    throw ConfigError("connector.latent_dim must be even and >= 2");
  }
  if (embed_dim < 1) throw ConfigError("connector.embed_dim must be >= 1");
  if (prenet_hidden % prenet_heads != 0) {
    throw ConfigError("connector.prenet_hidden must be divisible by prenet_heads");
  }
  if (prenet_ffn_kernel % 2 != 1) throw ConfigError("connector.prenet_ffn_kernel must be odd");
  if (flow_layers < 1) throw ConfigError("connector.flow_layers must be >= 1");
}

torch::Tensor sinusoidal_positions(int64_t length, int64_t channels) {
  auto pos = torch::arange(length, torch::kDouble).unsqueeze(1);
  auto i = torch::arange(channels, torch::kDouble).unsqueeze(0);
  auto pair = torch::floor(i / 2.0) * 2.0;
  auto angle = pos / torch::pow(10000.0, pair / static_cast<double>(channels));
  auto even = (torch::arange(channels) % 2 == 0).unsqueeze(0);
  return torch::where(even, torch::sin(angle), torch::cos(angle)).to(torch::kFloat);
}

// ---- prenet -----------------------------------------------------------------

TransformerLayerImpl::TransformerLayerImpl(int64_t hidden, int64_t heads, int64_t ffn,
                                           int64_t ffn_kernel, double dropout)
    : ffn_kernel_(ffn_kernel) {
  attention_ = register_module(
      "attention",
      torch::nn::MultiheadAttention(torch::nn::MultiheadAttentionOptions(hidden, heads)
                                        .dropout(dropout)));
  norm1_ = register_module("norm1", ChannelLayerNorm(hidden));
  ffn_in_ = register_module(
      "ffn_in", torch::nn::Conv1d(
                    torch::nn::Conv1dOptions(hidden, ffn, ffn_kernel).padding(ffn_kernel / 2)));
  ffn_out_ = register_module(
      "ffn_out", torch::nn::Conv1d(
                     torch::nn::Conv1dOptions(ffn, hidden, ffn_kernel).padding(ffn_kernel / 2)));
  norm2_ = register_module("norm2", ChannelLayerNorm(hidden));
  dropout_ = register_module("dropout", torch::nn::Dropout(dropout));
}

torch::Tensor TransformerLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const auto padding = (mask.squeeze(1) < 0.5);  // [B, T], true = ignore
  const auto seq = x.permute({2, 0, 1});         // [T, B, H]
  auto attn = std::get<0>(attention_->forward(seq, seq, seq, padding,
                                              /*need_weights=*/false));
  auto h = norm1_(x + dropout_(attn.permute({1, 2, 0}))) * mask;
  auto f = ffn_in_(h * mask);
  f = dropout_(torch::relu(f));
  f = ffn_out_(f * mask);
  return norm2_(h + dropout_(f)) * mask;
}

PrenetImpl::PrenetImpl(const ConnectorConfig& cfg)
    : embed_dim_(cfg.embed_dim), latent_dim_(cfg.latent_dim) {
  cfg.validate();
  input_ = register_module(
      "input", torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg.embed_dim, cfg.prenet_hidden, 1)));
  for (int64_t i = 0; i < cfg.prenet_layers; ++i) {
    layers_->push_back(TransformerLayer(cfg.prenet_hidden, cfg.prenet_heads, cfg.prenet_ffn,
                                        cfg.prenet_ffn_kernel, cfg.prenet_dropout));
  }
  register_module("layers", layers_);
  proj_ = register_module(
      "proj",
      torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg.prenet_hidden, 2 * cfg.latent_dim, 1)));
}

PriorSequence PrenetImpl::forward(const torch::Tensor& e, const torch::Tensor& mask) {
  if (e.dim() != 3 || e.size(1) != embed_dim_) {
    throw ConfigError("prenet expects embeddings of width " + std::to_string(embed_dim_) +
                      ", got " + std::to_string(e.dim() == 3 ? e.size(1) : -1));
  }
  auto h = input_(e.detach()) * mask;
  const auto pe = sinusoidal_positions(h.size(2), h.size(1)).to(h.dtype());
  h = (h + pe.t().unsqueeze(0)) * mask;
  for (const auto& m : *layers_) h = m->as<TransformerLayer>()->forward(h, mask);
  const auto stats = proj_(h) * mask;
  return {stats.narrow(1, 0, latent_dim_), stats.narrow(1, latent_dim_, latent_dim_), mask};
}

// ---- flow -------------------------------------------------------------------

AffineCouplingImpl::AffineCouplingImpl(int64_t channels, int64_t hidden, int64_t kernel,
                                       int64_t dilation_rate, int64_t wavenet_layers)
    : half_(channels / 2) {
  pre_ = register_module("pre", torch::nn::Conv1d(torch::nn::Conv1dOptions(half_, hidden, 1)));
  wavenet_ = register_module("wavenet", WaveNet(hidden, kernel, dilation_rate, wavenet_layers));
  post = register_module("post",
                         torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, 2 * half_, 1)));
  torch::NoGradGuard no_grad;
  post->weight.zero_();
  post->bias.zero_();
}

std::pair<torch::Tensor, torch::Tensor> AffineCouplingImpl::statistics(
    const torch::Tensor& x_a, const torch::Tensor& mask) {
  auto h = pre_(x_a) * mask;
  h = wavenet_(h, mask);
  const auto stats = post(h) * mask;
  return {stats.narrow(1, 0, half_), stats.narrow(1, half_, half_)};
}

std::pair<torch::Tensor, torch::Tensor> AffineCouplingImpl::forward(const torch::Tensor& x,
                                                                    const torch::Tensor& mask) {
  const auto x_a = x.narrow(1, 0, half_);
  const auto x_b = x.narrow(1, half_, half_);
  auto [shift, log_scale] = statistics(x_a, mask);
  const auto y_b = (shift + x_b * torch::exp(log_scale)) * mask;
  return {torch::cat({x_a, y_b}, 1), (log_scale * mask).sum(1)};
}

torch::Tensor AffineCouplingImpl::inverse(const torch::Tensor& y, const torch::Tensor& mask) {
  const auto y_a = y.narrow(1, 0, half_);
  const auto y_b = y.narrow(1, half_, half_);
  auto [shift, log_scale] = statistics(y_a, mask);
  const auto x_b = (y_b - shift) * torch::exp(-log_scale) * mask;
  return torch::cat({y_a, x_b}, 1);
}

FlowImpl::FlowImpl(const ConnectorConfig& cfg) {
  cfg.validate();
  for (int64_t i = 0; i < cfg.flow_layers; ++i) {
    couplings_->push_back(AffineCoupling(cfg.latent_dim, cfg.flow_hidden, cfg.flow_kernel,
                                         cfg.flow_dilation_rate, cfg.flow_wavenet_layers));
  }
  register_module("couplings", couplings_);
}

AffineCoupling FlowImpl::coupling(std::size_t i) {
  return AffineCoupling(couplings_->ptr<AffineCouplingImpl>(i));
}

std::pair<torch::Tensor, torch::Tensor> FlowImpl::forward(const torch::Tensor& z,
                                                          const torch::Tensor& mask,
                                                          const torch::Tensor& cond) {
  if (cond.defined()) throw InvalidParameter("flow conditioning is not supported");
  auto x = z;
  torch::Tensor logdet = torch::zeros({z.size(0), z.size(2)}, z.options());
  for (const auto& m : *couplings_) {
    x = x.flip(1);
    auto [y, ld] = m->as<AffineCoupling>()->forward(x, mask);
    x = y;
    logdet = logdet + ld;
  }
  return {x, logdet};
}

torch::Tensor FlowImpl::inverse(const torch::Tensor& w, const torch::Tensor& mask,
                                const torch::Tensor& cond) {
  if (cond.defined()) throw InvalidParameter("flow conditioning is not supported");
  auto x = w;
  for (std::size_t i = couplings_->size(); i-- > 0;) {
    x = couplings_[i]->as<AffineCoupling>()->inverse(x, mask);
    x = x.flip(1);
  }
  return x;
}

ConnectorImpl::ConnectorImpl(const ConnectorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  prenet = register_module("prenet", Prenet(cfg_));
  flow = register_module("flow", Flow(cfg_));
}

// ---- losses and helpers -----------------------------------------------------

KlTerms kl_terms(const GaussianLatent& q, const PriorSequence& prior, Flow& flow) {
  if (q.mean.sizes() != prior.mean.sizes()) {
    throw AlignmentError("posterior has " + std::to_string(q.mean.size(-1)) +
                         " frames but prior has " + std::to_string(prior.mean.size(-1)));
  }
  KlTerms t;
  t.mask = q.mask;
  auto [w, logdet] = flow->forward(q.sample, q.mask);
  t.log_q = gaussian_log_prob(q.sample, q.mean, q.log_scale) * q.mask;
  t.log_p = gaussian_log_prob(w, prior.mean, prior.log_scale) * q.mask;
  t.logdet = logdet * q.mask.squeeze(1);
  return t;
}

torch::Tensor kl_loss(const GaussianLatent& q, const PriorSequence& prior, Flow& flow) {
  const auto t = kl_terms(q, prior, flow);
  const auto frames = t.mask.sum({1, 2});
  const auto per_item =
      ((t.log_q - t.log_p).sum({1, 2}) - t.logdet.sum(1)) / (frames * q.mean.size(1));
  return per_item.mean();
}

torch::Tensor align_to_frames(const torch::Tensor& x, const torch::Tensor& src_lengths,
                              const torch::Tensor& dst_lengths, int64_t out_frames) {
  const auto src = src_lengths.to(torch::kLong).contiguous();
  const auto dst = dst_lengths.to(torch::kLong).contiguous();
  std::vector<torch::Tensor> items;
  for (int64_t b = 0; b < x.size(0); ++b) {
    const int64_t ls = src[b].item<int64_t>();
    const int64_t ld = dst[b].item<int64_t>();
    if (ls < 1 || ld < 1 || ld > out_frames) {
      throw AlignmentError("cannot align " + std::to_string(ls) + " frames onto " +
                           std::to_string(ld));
    }
    auto item = x[b].narrow(1, 0, ls).unsqueeze(0);
    if (ls != ld) {
      item = ls == 1 ? item.expand({1, x.size(1), ld})
                     : F::interpolate(item, F::InterpolateFuncOptions()
                                                .size(std::vector<int64_t>{ld})
                                                .mode(torch::kLinear)
                                                .align_corners(true));
    }
    items.push_back(torch::constant_pad_nd(item, {0, out_frames - ld}));
  }
  return torch::cat(items, 0);
}

torch::Tensor sample_prior(const PriorSequence& prior, double temperature) {
  const auto eps = torch::randn_like(prior.mean);
  return (prior.mean + torch::exp(prior.log_scale) * eps * temperature) * prior.mask;
}

}  // namespace e2s::nn
