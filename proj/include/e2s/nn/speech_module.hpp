#pragma once

// Speech module: posterior encoder (linear spectrogram -> diagonal Gaussian
// latent), GAN waveform generator (latent -> 22.05 kHz audio), and the
// multi-period / multi-scale discriminator ensemble.

#include <torch/torch.h>

#include <vector>

#include "e2s/dsp/frontend.hpp"
#include "e2s/nn/layers.hpp"

namespace e2s::nn {

struct SpeechConfig {
  int64_t spec_bins = 513;
  int64_t latent_dim = 192;

  int64_t posterior_hidden = 192;
  int64_t posterior_kernel = 5;
  int64_t posterior_dilation_rate = 1;
  int64_t posterior_layers = 8;

  int64_t generator_channels = 128;
  std::vector<int64_t> upsample_rates{8, 8, 2, 2};
  std::vector<int64_t> upsample_kernels{16, 16, 4, 4};
  std::vector<int64_t> resblock_kernels{3, 7, 11};
  std::vector<std::vector<int64_t>> resblock_dilations{{1, 3, 5}, {1, 3, 5}, {1, 3, 5}};

  std::vector<int64_t> mpd_periods{2, 3, 5, 7, 11};
  std::vector<int64_t> mpd_channels{16, 64, 256, 256};
  int64_t msd_scales = 1;
  std::vector<int64_t> msd_channels{16, 64, 256, 256};

  int64_t segment_frames = 32;  // 8192 samples at hop 256

  int64_t hop() const;
  void validate() const;
};

struct GaussianLatent {
  torch::Tensor mean;       // [B, D, T]
  torch::Tensor log_scale;  // [B, D, T]
  torch::Tensor sample;     // mean + exp(log_scale) * eps
  torch::Tensor eps;
  torch::Tensor mask;       // [B, 1, T]
};

class PosteriorEncoderImpl : public torch::nn::Module {
 public:
  explicit PosteriorEncoderImpl(const SpeechConfig& cfg);

  // spec: [B, spec_bins, T]. noise_scale multiplies eps (0 gives the mean).
  GaussianLatent forward(const torch::Tensor& spec, const torch::Tensor& lengths,
                         double noise_scale = 1.0);

 private:
  int64_t spec_bins_;
  int64_t latent_dim_;
  torch::nn::Conv1d pre_{nullptr};
  WaveNet wavenet_{nullptr};
  torch::nn::Conv1d proj_{nullptr};
};
TORCH_MODULE(PosteriorEncoder);

// Multi-receptive-field residual block (three dilated conv pairs).
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int64_t channels, int64_t kernel, const std::vector<int64_t>& dilations);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::ModuleList dilated_;
  torch::nn::ModuleList plain_;
};
TORCH_MODULE(ResBlock);

// Transposed-convolution upsampler with multi-receptive-field fusion; total
// upsampling equals the STFT hop so T latent frames give T * hop samples.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const SpeechConfig& cfg);
  torch::Tensor forward(const torch::Tensor& z);  // [B, D, T] -> [B, 1, T * hop]

 private:
  int64_t n_kernels_;
  torch::nn::Conv1d pre_{nullptr};
  torch::nn::ModuleList ups_;
  torch::nn::ModuleList resblocks_;
  torch::nn::Conv1d post_{nullptr};
};
TORCH_MODULE(Generator);

struct DiscriminatorOutput {
  std::vector<torch::Tensor> scores;                 // one per sub-discriminator
  std::vector<std::vector<torch::Tensor>> features;  // per sub-discriminator, per layer
};

class PeriodDiscriminatorImpl : public torch::nn::Module {
 public:
  PeriodDiscriminatorImpl(int64_t period, const std::vector<int64_t>& channels);
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& x);

 private:
  int64_t period_;
  torch::nn::ModuleList convs_;
  torch::nn::Conv2d post_{nullptr};
};
TORCH_MODULE(PeriodDiscriminator);

class ScaleDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit ScaleDiscriminatorImpl(const std::vector<int64_t>& channels);
  std::pair<torch::Tensor, std::vector<torch::Tensor>> forward(const torch::Tensor& x);

 private:
  torch::nn::ModuleList convs_;
  torch::nn::Conv1d post_{nullptr};
};
TORCH_MODULE(ScaleDiscriminator);

class DiscriminatorEnsembleImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorEnsembleImpl(const SpeechConfig& cfg);
  DiscriminatorOutput forward(const torch::Tensor& wave);  // [B, 1, T]

 private:
  torch::nn::ModuleList periods_;
  torch::nn::ModuleList scales_;
};
TORCH_MODULE(DiscriminatorEnsemble);

// Differentiable log-mel matching dsp::mel_spectrogram (reflect-padded
// periodic-Hann STFT, Slaney filterbank, log floor).
class MelTransformImpl : public torch::nn::Module {
 public:
  MelTransformImpl(const dsp::StftParams& stft, const dsp::MelParams& mel);
  torch::Tensor forward(const torch::Tensor& wave);  // [B, T] or [B, 1, T]

 private:
  dsp::StftParams stft_;
  double log_floor_;
  torch::Tensor window_;
  torch::Tensor filterbank_;
};
TORCH_MODULE(MelTransform);

// ---- losses ---------------------------------------------------------------

// Least-squares GAN: sum over sub-discriminators of
// mean((1 - D(real))^2) + mean(D(fake)^2).
torch::Tensor discriminator_loss(const DiscriminatorOutput& real,
                                 const DiscriminatorOutput& fake);
// sum over sub-discriminators of mean((1 - D(fake))^2).
torch::Tensor generator_adversarial_loss(const DiscriminatorOutput& fake);
// Mean over all paired feature maps of mean |real - fake|. Real features are
// treated as constants.
torch::Tensor feature_matching_loss(const DiscriminatorOutput& real,
                                    const DiscriminatorOutput& fake);

struct AdversarialLosses {
  torch::Tensor disc_loss;
  torch::Tensor gen_loss;
  torch::Tensor feat_match_loss;
};

// Crops both waveforms to the shorter length. Throws InvalidInput when the
// lengths differ by more than crop_tolerance samples.
AdversarialLosses adversarial_losses(DiscriminatorEnsemble& disc, torch::Tensor real,
                                     torch::Tensor fake, int64_t crop_tolerance = 256);

// Mean absolute difference between log-mel spectrograms.
torch::Tensor mel_reconstruction_loss(MelTransform& mel, const torch::Tensor& y,
                                      const torch::Tensor& y_hat);

// log q(z | y) summed over latent dims and valid frames, per batch item.
torch::Tensor posterior_log_density(const GaussianLatent& q, const torch::Tensor& z);

}  // namespace e2s::nn
