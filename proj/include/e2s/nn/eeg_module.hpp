#pragma once

// Self-supervised EEG autoencoder. The encoder (strided conv blocks followed
// by S4 layers) yields the intermediate EEG embedding consumed by the
// connector; the decoder (transposed-conv blocks) reconstructs the input and
// is trained with the channel-wise cosine loss.

#include <torch/torch.h>

#include <vector>

#include "e2s/nn/layers.hpp"
#include "e2s/nn/s4.hpp"
#include "e2s/types.hpp"

namespace e2s::nn {

struct EegEncoderConfig {
  int64_t n_channels_in = 16;
  int64_t hidden_dim = 192;
  int64_t n_conv_blocks = 4;
  std::vector<int64_t> conv_strides{1, 3, 1, 1};
  int64_t n_s4_layers = 2;
  int64_t s4_state_dim = 64;
  double dropout = 0.1;
  int64_t embed_dim = 192;
  double dt_min = 1e-3;
  double dt_max = 1e-1;

  int64_t downsample_factor() const;
  // Throws ConfigError.
  void validate() const;
};

struct EegEncoding {
  torch::Tensor embedding;      // [B, embed_dim, frames]
  torch::Tensor frame_lengths;  // [B] int64
  torch::Tensor frame_mask;     // [B, 1, frames]
};

// One row of the embedding per frame, used outside of the training graph.
struct EegEmbeddingSequence {
  Matrix values;  // [embed_dim x frames]
  double frame_rate = 0.0;
};

class EegAutoencoderImpl : public torch::nn::Module {
 public:
  explicit EegAutoencoderImpl(const EegEncoderConfig& cfg);

  // x: [B, C, T]; lengths: [B] valid samples per item. Output frames are
  // ceil(T / downsample_factor).
  EegEncoding encode(const torch::Tensor& x, const torch::Tensor& lengths);

  // Output is [B, C, frames * downsample_factor].
  torch::Tensor decode(const torch::Tensor& embedding, const torch::Tensor& frame_mask);

  const EegEncoderConfig& config() const { return cfg_; }

  std::vector<torch::Tensor> encoder_parameters() const;

 private:
  EegEncoderConfig cfg_;
  torch::nn::ModuleList conv_blocks_;
  torch::nn::ModuleList s4_layers_;
  torch::nn::Conv1d to_embedding_{nullptr};
  torch::nn::Conv1d from_embedding_{nullptr};
  torch::nn::ModuleList deconv_blocks_;
  torch::nn::Conv1d to_channels_{nullptr};
};
TORCH_MODULE(EegAutoencoder);

// Conv1d -> dropout -> layer norm -> GELU, length divided by stride.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in, int64_t out, int64_t stride, double dropout);
  torch::Tensor forward(const torch::Tensor& x);
  int64_t stride() const { return stride_; }

 private:
  int64_t stride_;
  torch::nn::Conv1d conv_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  ChannelLayerNorm norm_{nullptr};
};
TORCH_MODULE(ConvBlock);

// ConvTranspose1d -> dropout -> layer norm -> GELU, length times stride.
class DeconvBlockImpl : public torch::nn::Module {
 public:
  DeconvBlockImpl(int64_t in, int64_t out, int64_t stride, double dropout);
  torch::Tensor forward(const torch::Tensor& x);
  int64_t stride() const { return stride_; }

 private:
  int64_t stride_;
  torch::nn::ConvTranspose1d conv_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
  ChannelLayerNorm norm_{nullptr};
};
TORCH_MODULE(DeconvBlock);

// 1 - mean over channels of cos(x_c, x_hat_c), computed over the first
// lengths[b] samples of each item and averaged over the batch. A channel
// with zero norm on either side contributes cosine 0.
torch::Tensor eeg_cosine_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                              const torch::Tensor& lengths);

// Same loss on two recordings of identical shape, in double precision.
double eeg_reconstruction_loss(const EegRecording& x, const EegRecording& x_hat);

// Single-recording helpers running the module in its current mode.
// Throw InvalidInput for a sampling-rate mismatch and ConfigError for a
// channel-count mismatch.
EegEmbeddingSequence eeg_encode(EegAutoencoder& model, const EegRecording& x,
                                double expected_fs);
EegRecording eeg_decode(EegAutoencoder& model, const EegEmbeddingSequence& e,
                        const EegRecording& like);

torch::Tensor recording_to_tensor(const EegRecording& x);

}  // namespace e2s::nn
