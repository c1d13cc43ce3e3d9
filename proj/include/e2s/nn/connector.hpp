#pragma once

// Connector between the EEG embedding space and the speech latent space.
// The prenet maps (detached) EEG embeddings to a per-frame Gaussian prior,
// and an affine-coupling flow relates posterior samples to that prior.

#include <torch/torch.h>

#include <optional>
#include <utility>

#include "e2s/nn/layers.hpp"
#include "e2s/nn/speech_module.hpp"

namespace e2s::nn {

struct ConnectorConfig {
  int64_t embed_dim = 192;   // EEG embedding width
  int64_t latent_dim = 192;  // speech latent width, must be even

  int64_t prenet_hidden = 192;
  int64_t prenet_layers = 3;
  int64_t prenet_heads = 2;
  int64_t prenet_ffn = 768;
  int64_t prenet_ffn_kernel = 3;
  double prenet_dropout = 0.1;

  int64_t flow_layers = 4;
  int64_t flow_hidden = 192;
  int64_t flow_kernel = 5;
  int64_t flow_dilation_rate = 1;
  int64_t flow_wavenet_layers = 4;

  void validate() const;
};

struct PriorSequence {
  torch::Tensor mean;       // [B, D, T]
  torch::Tensor log_scale;  // [B, D, T]
  torch::Tensor mask;       // [B, 1, T]
};

// Sinusoidal absolute position table, [length, channels].
torch::Tensor sinusoidal_positions(int64_t length, int64_t channels);

class TransformerLayerImpl : public torch::nn::Module {
 public:
  TransformerLayerImpl(int64_t hidden, int64_t heads, int64_t ffn, int64_t ffn_kernel,
                       double dropout);
  // x: [B, H, T]; mask: [B, 1, T].
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

 private:
  torch::nn::MultiheadAttention attention_{nullptr};
  ChannelLayerNorm norm1_{nullptr};
  torch::nn::Conv1d ffn_in_{nullptr};
  torch::nn::Conv1d ffn_out_{nullptr};
  ChannelLayerNorm norm2_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  int64_t ffn_kernel_;
};
TORCH_MODULE(TransformerLayer);

// Transformer encoder plus linear projection to prior statistics. The input
// is detached, so no gradient reaches whatever produced it.
class PrenetImpl : public torch::nn::Module {
 public:
  explicit PrenetImpl(const ConnectorConfig& cfg);
  // e: [B, embed_dim, T]; mask: [B, 1, T]. Throws ConfigError on a width
  // mismatch.
  PriorSequence forward(const torch::Tensor& e, const torch::Tensor& mask);

 private:
  int64_t embed_dim_;
  int64_t latent_dim_;
  torch::nn::Conv1d input_{nullptr};
  torch::nn::ModuleList layers_;
  torch::nn::Conv1d proj_{nullptr};
};
TORCH_MODULE(Prenet);

// y_a = x_a, y_b = shift(x_a) + x_b * exp(log_scale(x_a)), where (a, b) are
// the lower and upper halves of the channel axis.
class AffineCouplingImpl : public torch::nn::Module {
 public:
  AffineCouplingImpl(int64_t channels, int64_t hidden, int64_t kernel, int64_t dilation_rate,
                     int64_t wavenet_layers);

  // Returns (y, log|det J| per frame [B, T]).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x,
                                                  const torch::Tensor& mask);
  torch::Tensor inverse(const torch::Tensor& y, const torch::Tensor& mask);

  // Shift and log-scale for the transformed half, each [B, C/2, T].
  std::pair<torch::Tensor, torch::Tensor> statistics(const torch::Tensor& x_a,
                                                     const torch::Tensor& mask);

  torch::nn::Conv1d post{nullptr};  // zero-initialised

 private:
  int64_t half_;
  torch::nn::Conv1d pre_{nullptr};
  WaveNet wavenet_{nullptr};
};
TORCH_MODULE(AffineCoupling);

// K couplings, each preceded by a reversal of the channel axis.
class FlowImpl : public torch::nn::Module {
 public:
  explicit FlowImpl(const ConnectorConfig& cfg);

  // z: [B, D, T]. cond is reserved and must be undefined. Returns (f(z),
  // summed log|det J| per frame [B, T]).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& z,
                                                  const torch::Tensor& mask,
                                                  const torch::Tensor& cond = {});
  torch::Tensor inverse(const torch::Tensor& w, const torch::Tensor& mask,
                        const torch::Tensor& cond = {});

  std::size_t n_layers() const { return couplings_->size(); }
  AffineCoupling coupling(std::size_t i);

 private:
  torch::nn::ModuleList couplings_;
};
TORCH_MODULE(Flow);

class ConnectorImpl : public torch::nn::Module {
 public:
  explicit ConnectorImpl(const ConnectorConfig& cfg);
  const ConnectorConfig& config() const { return cfg_; }

  Prenet prenet{nullptr};
  Flow flow{nullptr};

 private:
  ConnectorConfig cfg_;
};
TORCH_MODULE(Connector);

// Elementwise pieces of the KL estimate at z = posterior sample.
struct KlTerms {
  torch::Tensor log_q;   // [B, D, T] log q(z | y)
  torch::Tensor log_p;   // [B, D, T] log N(f(z); prior)
  torch::Tensor logdet;  // [B, T]
  torch::Tensor mask;    // [B, 1, T]
};

KlTerms kl_terms(const GaussianLatent& q, const PriorSequence& prior, Flow& flow);

// Per item: sum over valid frames and dims of (log q - log p) minus the
// summed log-determinant, divided by valid frames * dims; then averaged over
// the batch. Throws AlignmentError when frame counts differ.
torch::Tensor kl_loss(const GaussianLatent& q, const PriorSequence& prior, Flow& flow);

// Per-item linear interpolation of the first src_lengths[b] frames of x
// onto dst_lengths[b] frames; the result is zero-padded to out_frames.
torch::Tensor align_to_frames(const torch::Tensor& x, const torch::Tensor& src_lengths,
                              const torch::Tensor& dst_lengths, int64_t out_frames);

// w = mean + exp(log_scale) * eps * temperature, masked.
torch::Tensor sample_prior(const PriorSequence& prior, double temperature);

}  // namespace e2s::nn
