#include "e2s/nn/speech_module.hpp"

#include <numeric>
#include <string>

#include "e2s/error.hpp"

namespace e2s::nn {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.1;

torch::Tensor leaky(const torch::Tensor& x, double slope = kLeakySlope) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(slope));
}

void init_normal(torch::nn::Module& m, double std) {
  torch::NoGradGuard no_grad;
  for (auto& p : m.named_parameters()) {
    if (p.key().ends_with("weight")) p.value().normal_(0.0, std);
  }
}

int64_t dilated_padding(int64_t kernel, int64_t dilation) {
  return (kernel * dilation - dilation) / 2;
}

}  // namespace

int64_t SpeechConfig::hop() const {
  int64_t h = 1;
  for (int64_t r : upsample_rates) h *= r;
  return h;
}

void SpeechConfig::validate() const {
  if (latent_dim < 2 || latent_dim % 2 != 0) {
    throw ConfigError("speech.latent_dim must be even and >= 2");
  }
  if (upsample_rates.size() != upsample_kernels.size() || upsample_rates.empty()) {
    throw ConfigError("speech.upsample_rates and upsample_kernels must match in length");
  }
  for (std::size_t i = 0; i < upsample_rates.size(); ++i) {
    if ((upsample_kernels[i] - upsample_rates[i]) % 2 != 0 ||
        upsample_kernels[i] < upsample_rates[i]) {
      throw ConfigError("speech.upsample_kernels[i] - upsample_rates[i] must be even and >= 0");
    }
  }
  if ((generator_channels >> upsample_rates.size()) < 1) {
    throw ConfigError("speech.generator_channels too small for the number of upsample stages");
  }
  if (resblock_kernels.size() != resblock_dilations.size() || resblock_kernels.empty()) {
    throw ConfigError("speech.resblock_kernels and resblock_dilations must match in length");
  }
  if (mpd_channels.empty() || msd_channels.empty()) {
    throw ConfigError("discriminator channel lists must be non-empty");
  }
  if (segment_frames < 1) throw ConfigError("speech.segment_frames must be >= 1");
}

// ---- posterior encoder ------------------------------------------------------

PosteriorEncoderImpl::PosteriorEncoderImpl(const SpeechConfig& cfg)
    : spec_bins_(cfg.spec_bins), latent_dim_(cfg.latent_dim) {
  pre_ = register_module(
      "pre", torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg.spec_bins, cfg.posterior_hidden, 1)));
  wavenet_ = register_module(
      "wavenet", WaveNet(cfg.posterior_hidden, cfg.posterior_kernel,
                         cfg.posterior_dilation_rate, cfg.posterior_layers));
  proj_ = register_module(
      "proj",
      torch::nn::Conv1d(torch::nn::Conv1dOptions(cfg.posterior_hidden, 2 * cfg.latent_dim, 1)));
}

GaussianLatent PosteriorEncoderImpl::forward(const torch::Tensor& spec,
                                             const torch::Tensor& lengths,
                                             double noise_scale) {
  if (spec.dim() != 3 || spec.size(1) != spec_bins_) {
    throw ConfigError("posterior encoder expects " + std::to_string(spec_bins_) +
                      " spectrogram bins, got " +
                      std::to_string(spec.dim() == 3 ? spec.size(1) : -1));
  }
  const auto mask = sequence_mask(lengths, spec.size(2), spec.scalar_type());
  auto h = pre_(spec) * mask;
  h = wavenet_(h, mask);
  const auto stats = proj_(h) * mask;
  GaussianLatent q;
  q.mean = stats.narrow(1, 0, latent_dim_);
  q.log_scale = stats.narrow(1, latent_dim_, latent_dim_);
  q.eps = torch::randn_like(q.mean) * noise_scale;
  q.sample = (q.mean + q.eps * torch::exp(q.log_scale)) * mask;
  q.mask = mask;
  return q;
}

// ---- generator --------------------------------------------------------------

ResBlockImpl::ResBlockImpl(int64_t channels, int64_t kernel,
                           const std::vector<int64_t>& dilations) {
  for (int64_t d : dilations) {
    dilated_->push_back(torch::nn::Conv1d(torch::nn::Conv1dOptions(channels, channels, kernel)
                                              .dilation(d)
                                              .padding(dilated_padding(kernel, d))));
    plain_->push_back(torch::nn::Conv1d(
        torch::nn::Conv1dOptions(channels, channels, kernel).padding(dilated_padding(kernel, 1))));
  }
  register_module("dilated", dilated_);
  register_module("plain", plain_);
  init_normal(*this, 0.01);
}

torch::Tensor ResBlockImpl::forward(torch::Tensor x) {
  for (std::size_t i = 0; i < dilated_->size(); ++i) {
    auto xt = dilated_[i]->as<torch::nn::Conv1d>()->forward(leaky(x));
    xt = plain_[i]->as<torch::nn::Conv1d>()->forward(leaky(xt));
    x = xt + x;
  }
  return x;
}

GeneratorImpl::GeneratorImpl(const SpeechConfig& cfg)
    : n_kernels_(static_cast<int64_t>(cfg.resblock_kernels.size())) {
  cfg.validate();
  pre_ = register_module(
      "pre", torch::nn::Conv1d(
                 torch::nn::Conv1dOptions(cfg.latent_dim, cfg.generator_channels, 7).padding(3)));
  int64_t ch = cfg.generator_channels;
  for (std::size_t i = 0; i < cfg.upsample_rates.size(); ++i) {
    const int64_t rate = cfg.upsample_rates[i];
    const int64_t kernel = cfg.upsample_kernels[i];
    auto up = torch::nn::ConvTranspose1d(torch::nn::ConvTranspose1dOptions(ch, ch / 2, kernel)
                                             .stride(rate)
                                             .padding((kernel - rate) / 2));
    init_normal(*up, 0.01);
    ups_->push_back(up);
    ch /= 2;
    for (std::size_t j = 0; j < cfg.resblock_kernels.size(); ++j) {
      resblocks_->push_back(ResBlock(ch, cfg.resblock_kernels[j], cfg.resblock_dilations[j]));
    }
  }
  register_module("ups", ups_);
  register_module("resblocks", resblocks_);
  post_ = register_module(
      "post", torch::nn::Conv1d(torch::nn::Conv1dOptions(ch, 1, 7).padding(3).bias(false)));
  init_normal(*post_, 0.01);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z) {
  auto x = pre_(z);
  for (std::size_t i = 0; i < ups_->size(); ++i) {
    x = ups_[i]->as<torch::nn::ConvTranspose1d>()->forward(leaky(x));
    torch::Tensor fused;
    for (int64_t j = 0; j < n_kernels_; ++j) {
      auto y = resblocks_[i * n_kernels_ + j]->as<ResBlock>()->forward(x);
      fused = fused.defined() ? fused + y : y;
    }
    x = fused / static_cast<double>(n_kernels_);
  }
  x = post_(leaky(x, 0.01));
  return torch::tanh(x);
}

// ---- discriminators ---------------------------------------------------------

PeriodDiscriminatorImpl::PeriodDiscriminatorImpl(int64_t period,
                                                 const std::vector<int64_t>& channels)
    : period_(period) {
  int64_t in = 1;
  for (int64_t out : channels) {
    convs_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, out, {5, 1}).stride({3, 1}).padding({2, 0})));
    in = out;
  }
  convs_->push_back(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, in, {5, 1}).stride(1).padding({2, 0})));
  register_module("convs", convs_);
  post_ = register_module(
      "post", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, {3, 1}).padding({1, 0})));
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> PeriodDiscriminatorImpl::forward(
    const torch::Tensor& wave) {
  auto x = wave;
  const int64_t t = x.size(2);
  if (t % period_ != 0) {
    const int64_t pad = period_ - t % period_;
    F::PadFuncOptions opts({0, pad});
    if (pad < t) opts.mode(torch::kReflect);
    x = F::pad(x, opts);
  }
  x = x.view({x.size(0), 1, x.size(2) / period_, period_});
  std::vector<torch::Tensor> fmap;
  for (const auto& m : *convs_) {
    x = leaky(m->as<torch::nn::Conv2d>()->forward(x));
    fmap.push_back(x);
  }
  x = post_(x);
  fmap.push_back(x);
  return {x.flatten(1), fmap};
}

ScaleDiscriminatorImpl::ScaleDiscriminatorImpl(const std::vector<int64_t>& channels) {
  int64_t in = 1;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const int64_t out = channels[i];
    if (i == 0) {
      convs_->push_back(torch::nn::Conv1d(torch::nn::Conv1dOptions(in, out, 15).padding(7)));
    } else {
      const int64_t groups = (in % 4 == 0 && out % 4 == 0) ? 4 : 1;
      convs_->push_back(torch::nn::Conv1d(
          torch::nn::Conv1dOptions(in, out, 41).stride(4).groups(groups).padding(20)));
    }
    in = out;
  }
  convs_->push_back(torch::nn::Conv1d(torch::nn::Conv1dOptions(in, in, 5).padding(2)));
  register_module("convs", convs_);
  post_ = register_module("post", torch::nn::Conv1d(torch::nn::Conv1dOptions(in, 1, 3).padding(1)));
}

std::pair<torch::Tensor, std::vector<torch::Tensor>> ScaleDiscriminatorImpl::forward(
    const torch::Tensor& wave) {
  auto x = wave;
  std::vector<torch::Tensor> fmap;
  for (const auto& m : *convs_) {
    x = leaky(m->as<torch::nn::Conv1d>()->forward(x));
    fmap.push_back(x);
  }
  x = post_(x);
  fmap.push_back(x);
  return {x.flatten(1), fmap};
}

DiscriminatorEnsembleImpl::DiscriminatorEnsembleImpl(const SpeechConfig& cfg) {
  for (int64_t p : cfg.mpd_periods) periods_->push_back(PeriodDiscriminator(p, cfg.mpd_channels));
  for (int64_t s = 0; s < cfg.msd_scales; ++s) {
    scales_->push_back(ScaleDiscriminator(cfg.msd_channels));
  }
  register_module("periods", periods_);
  register_module("scales", scales_);
}

DiscriminatorOutput DiscriminatorEnsembleImpl::forward(const torch::Tensor& wave) {
  DiscriminatorOutput out;
  for (const auto& m : *periods_) {
    auto [score, fmap] = m->as<PeriodDiscriminator>()->forward(wave);
    out.scores.push_back(score);
    out.features.push_back(std::move(fmap));
  }
  auto x = wave;
  for (std::size_t i = 0; i < scales_->size(); ++i) {
    if (i > 0) x = F::avg_pool1d(x, F::AvgPool1dFuncOptions(4).stride(2).padding(2));
    auto [score, fmap] = scales_[i]->as<ScaleDiscriminator>()->forward(x);
    out.scores.push_back(score);
    out.features.push_back(std::move(fmap));
  }
  return out;
}

// ---- mel --------------------------------------------------------------------

MelTransformImpl::MelTransformImpl(const dsp::StftParams& stft, const dsp::MelParams& mel)
    : stft_(stft), log_floor_(mel.log_floor) {
  const auto w = dsp::stft_window(stft);
  window_ = register_buffer(
      "window", torch::tensor(std::vector<double>(w.begin(), w.end())).to(torch::kFloat));
  const Matrix fb = dsp::mel_filterbank(mel, stft.fft_size, stft.fs);
  auto fb_t = torch::tensor(fb.data()).view({static_cast<int64_t>(fb.rows()),
                                             static_cast<int64_t>(fb.cols())});
  filterbank_ = register_buffer("filterbank", fb_t.to(torch::kFloat));
}

torch::Tensor MelTransformImpl::forward(const torch::Tensor& wave) {
  auto x = wave.dim() == 3 ? wave.squeeze(1) : wave;
  const int64_t pad = stft_.fft_size / 2;
  x = F::pad(x.unsqueeze(1), F::PadFuncOptions({pad, pad}).mode(torch::kReflect)).squeeze(1);
  auto spec = torch::stft(x, stft_.fft_size, stft_.hop_size, stft_.fft_size, window_,
                          /*normalized=*/false, /*onesided=*/true, /*return_complex=*/true);
  auto mag = torch::sqrt(torch::real(spec).square() + torch::imag(spec).square() + 1e-12);
  auto mel = torch::matmul(filterbank_, mag);
  return torch::log(torch::clamp_min(mel, log_floor_));
}

// ---- losses -----------------------------------------------------------------

torch::Tensor discriminator_loss(const DiscriminatorOutput& real,
                                 const DiscriminatorOutput& fake) {
  torch::Tensor loss;
  for (std::size_t i = 0; i < real.scores.size(); ++i) {
    auto term = (1.0 - real.scores[i]).square().mean() + fake.scores[i].square().mean();
    loss = loss.defined() ? loss + term : term;
  }
  return loss;
}

torch::Tensor generator_adversarial_loss(const DiscriminatorOutput& fake) {
  torch::Tensor loss;
  for (const auto& s : fake.scores) {
    auto term = (1.0 - s).square().mean();
    loss = loss.defined() ? loss + term : term;
  }
  return loss;
}

torch::Tensor feature_matching_loss(const DiscriminatorOutput& real,
                                    const DiscriminatorOutput& fake) {
  torch::Tensor loss;
  int64_t count = 0;
  for (std::size_t i = 0; i < real.features.size(); ++i) {
    for (std::size_t j = 0; j < real.features[i].size(); ++j) {
      auto term = (real.features[i][j].detach() - fake.features[i][j]).abs().mean();
      loss = loss.defined() ? loss + term : term;
      ++count;
    }
  }
  return loss / static_cast<double>(count);
}

AdversarialLosses adversarial_losses(DiscriminatorEnsemble& disc, torch::Tensor real,
                                     torch::Tensor fake, int64_t crop_tolerance) {
  const int64_t lr = real.size(-1);
  const int64_t lf = fake.size(-1);
  if (std::abs(lr - lf) > crop_tolerance) {
    throw InvalidInput("waveform lengths " + std::to_string(lr) + " and " + std::to_string(lf) +
                       " differ by more than " + std::to_string(crop_tolerance) + " samples");
  }
  const int64_t n = std::min(lr, lf);
  if (real.dim() == 2) real = real.unsqueeze(1);
  if (fake.dim() == 2) fake = fake.unsqueeze(1);
  real = real.narrow(-1, 0, n);
  fake = fake.narrow(-1, 0, n);
  const auto d_real = disc->forward(real);
  const auto d_fake = disc->forward(fake);
  return {discriminator_loss(d_real, d_fake), generator_adversarial_loss(d_fake),
          feature_matching_loss(d_real, d_fake)};
}

torch::Tensor mel_reconstruction_loss(MelTransform& mel, const torch::Tensor& y,
                                      const torch::Tensor& y_hat) {
  return (mel->forward(y) - mel->forward(y_hat)).abs().mean();
}

torch::Tensor posterior_log_density(const GaussianLatent& q, const torch::Tensor& z) {
  return (gaussian_log_prob(z, q.mean, q.log_scale) * q.mask).sum({1, 2});
}

}  // namespace e2s::nn
