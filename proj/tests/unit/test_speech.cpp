#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "e2s/error.hpp"
#include "e2s/nn/speech_module.hpp"
#include "e2s/train/model.hpp"
#include "fixtures.hpp"

using namespace e2s;

namespace {

// 1 s of a voiced, vowel-like signal with a slow amplitude envelope.
std::vector<double> vowel_clip(std::size_t n = 22050, double f0 = 140.0) {
  std::vector<double> w(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double s = static_cast<double>(t) / 22050.0;
    double v = 0.0;
    for (int h = 1; h <= 12; ++h) {
      const double f = h * f0;
      const double formant = std::exp(-std::pow((f - 700.0) / 300.0, 2)) +
                             0.6 * std::exp(-std::pow((f - 1200.0) / 400.0, 2)) + 0.05;
      v += formant * std::sin(2 * std::numbers::pi * f * s) / h;
    }
    w[t] = 0.3 * v * (0.6 + 0.4 * std::sin(2 * std::numbers::pi * 2.0 * s));
  }
  return w;
}

torch::Tensor spec_tensor(const std::vector<double>& w, const dsp::StftParams& p) {
  SpeechUtterance u;
  u.waveform = w;
  u.fs = p.fs;
  const auto s = dsp::linear_spectrogram(u, p);
  auto t = torch::empty({1, static_cast<int64_t>(s.n_bins()), static_cast<int64_t>(s.n_frames())});
  auto a = t.accessor<float, 3>();
  for (std::size_t k = 0; k < s.n_bins(); ++k) {
    for (std::size_t f = 0; f < s.n_frames(); ++f) a[0][k][f] = static_cast<float>(s.values(k, f));
  }
  return t;
}

nn::DiscriminatorOutput fake_output(float value) {
  nn::DiscriminatorOutput o;
  for (int i = 0; i < 3; ++i) o.scores.push_back(torch::full({2, 5 + i}, value));
  return o;
}

}  // namespace

TEST_SUITE("speech") {

TEST_CASE("posterior shapes, eps = 0 and the closed-form density") {
  torch::manual_seed(1);
  nn::SpeechConfig cfg;
  nn::PosteriorEncoder enc(cfg);
  enc->eval();
  auto spec = torch::rand({1, 513, 87});
  auto len = torch::full({1}, 87, torch::kLong);
  auto q = enc->forward(spec, len, 0.0);
  CHECK(q.mean.sizes() == torch::IntArrayRef({1, 192, 87}));
  CHECK(q.log_scale.sizes() == torch::IntArrayRef({1, 192, 87}));
  CHECK(q.sample.sizes() == torch::IntArrayRef({1, 192, 87}));
  CHECK(torch::equal(q.sample, q.mean));

  const auto log_q = nn::posterior_log_density(q, q.mean);
  const double expected =
      (-q.log_scale.to(torch::kDouble) - 0.5 * std::log(2 * std::numbers::pi)).sum().item<double>();
  CHECK(log_q[0].item<double>() == doctest::Approx(expected).epsilon(1e-5));

  // with noise the recorded eps reproduces the sample
  auto q1 = enc->forward(spec, len, 1.0);
  CHECK((q1.mean + q1.log_scale.exp() * q1.eps - q1.sample).abs().max().item<double>() < 1e-5);

  CHECK_THROWS_AS(enc->forward(torch::rand({1, 512, 87}), len), ConfigError);
}

TEST_CASE("generator length contract") {
  torch::manual_seed(2);
  nn::SpeechConfig cfg;
  nn::Generator gen(cfg);
  gen->eval();
  torch::NoGradGuard g;
  auto y = gen->forward(torch::randn({1, 192, 87}));
  CHECK(y.sizes() == torch::IntArrayRef({1, 1, 22272}));
  auto z = torch::randn({1, 192, 40});
  CHECK(torch::equal(gen->forward(z), gen->forward(z)));
  auto wide = gen->forward(torch::randn({1, 192, 40}) * 2.0);
  CHECK(torch::isfinite(wide).all().item<bool>());
  CHECK(wide.abs().max().item<double>() <= 1.0);

  auto tiny = testing::tiny_config().speech;
  nn::Generator small(tiny);
  small->eval();
  for (int64_t n = 1; n <= 128; ++n) {
    CHECK(small->forward(torch::randn({1, tiny.latent_dim, n})).size(2) == n * 256);
  }
}

TEST_CASE("least-squares GAN optima") {
  CHECK(nn::discriminator_loss(fake_output(1.0F), fake_output(0.0F)).item<double>() == 0.0);
  CHECK(nn::generator_adversarial_loss(fake_output(1.0F)).item<double>() == 0.0);
  CHECK(nn::discriminator_loss(fake_output(0.0F), fake_output(1.0F)).item<double>() == doctest::Approx(6.0));
  CHECK(nn::generator_adversarial_loss(fake_output(0.0F)).item<double>() == doctest::Approx(3.0));
}

TEST_CASE("feature matching is zero on identical input and grows with noise") {
  torch::manual_seed(3);
  auto cfg = testing::tiny_config().speech;
  nn::DiscriminatorEnsemble disc(cfg);
  torch::NoGradGuard g;
  auto real = torch::randn({1, 1, 4096}) * 0.3;
  auto same = nn::adversarial_losses(disc, real, real.clone());
  CHECK(same.feat_match_loss.item<double>() == 0.0);

  int monotone = 0;
  std::array<double, 3> means{};
  for (int seed = 0; seed < 10; ++seed) {
    torch::manual_seed(100 + seed);
    auto noise = torch::randn_like(real);
    std::array<double, 3> fm{};
    const std::array<double, 3> levels{0.01, 0.1, 1.0};
    for (std::size_t k = 0; k < 3; ++k) {
      fm[k] = nn::adversarial_losses(disc, real, real + levels[k] * noise).feat_match_loss.item<double>();
      means[k] += fm[k] / 10.0;
    }
    monotone += fm[0] < fm[1] && fm[1] < fm[2];
  }
  CHECK(monotone >= 9);
  CHECK(means[0] < means[1]);
  CHECK(means[1] < means[2]);

  CHECK_THROWS_AS(nn::adversarial_losses(disc, real, real.narrow(2, 0, 3000)), InvalidInput);
  // within tolerance: cropped to the shorter one
  CHECK_NOTHROW(nn::adversarial_losses(disc, real, real.narrow(2, 0, 4000)));
}

TEST_CASE("mel loss properties and agreement with the DSP front end") {
  dsp::StftParams stft;
  dsp::MelParams mel;
  nn::MelTransform m(stft, mel);
  const auto clip = vowel_clip(11025);
  auto y = torch::tensor(std::vector<float>(clip.begin(), clip.end())).unsqueeze(0);
  auto y_hat = y + 0.05 * torch::randn_like(y);
  CHECK(nn::mel_reconstruction_loss(m, y, y).item<double>() == 0.0);
  const double a = nn::mel_reconstruction_loss(m, y, y_hat).item<double>();
  const double b = nn::mel_reconstruction_loss(m, y_hat, y).item<double>();
  CHECK(a == doctest::Approx(b));
  CHECK(a > 0.0);

  SpeechUtterance u;
  u.waveform = clip;
  u.fs = 22050.0;
  const auto ref = dsp::mel_spectrogram(u, stft, mel);
  auto t = m->forward(y)[0];
  REQUIRE(t.size(0) == static_cast<int64_t>(ref.n_bins()));
  REQUIRE(t.size(1) == static_cast<int64_t>(ref.n_frames()));
  double worst = 0.0;
  auto acc = t.accessor<float, 2>();
  for (std::size_t k = 0; k < ref.n_bins(); ++k) {
    for (std::size_t f = 0; f < ref.n_frames(); ++f) {
      worst = std::max(worst, std::abs(acc[k][f] - ref.values(k, f)));
    }
  }
  CHECK(worst < 1e-2);
}

TEST_CASE("generator gradient matches finite differences in float64") {
  torch::manual_seed(5);
  auto cfg = testing::tiny_config().speech;
  nn::Generator gen(cfg);
  nn::MelTransform mel(dsp::StftParams{}, dsp::MelParams{});
  gen->to(torch::kDouble);
  mel->to(torch::kDouble);
  auto z = torch::randn({1, cfg.latent_dim, 6}, torch::kDouble);
  auto target = torch::randn({1, 1, 6 * 256}, torch::kDouble) * 0.3;
  auto loss_of = [&] { return nn::mel_reconstruction_loss(mel, target, gen->forward(z)); };

  gen->zero_grad();
  loss_of().backward();
  auto params = gen->parameters();
  std::mt19937_64 rng(9);
  int checked = 0;
  while (checked < 3) {
    auto& p = params[rng() % params.size()];
    const auto idx = static_cast<int64_t>(rng() % static_cast<uint64_t>(p.numel()));
    const double analytic = p.grad().flatten()[idx].item<double>();
    if (std::abs(analytic) < 1e-7) continue;
    double plus, minus;
    const double h = 1e-6;
    {
      torch::NoGradGuard g;
      p.flatten()[idx] += h;
      plus = loss_of().item<double>();
      p.flatten()[idx] -= 2 * h;
      minus = loss_of().item<double>();
      p.flatten()[idx] += h;
    }
    const double numeric = (plus - minus) / (2 * h);
    CHECK(std::abs(numeric - analytic) <= 0.05 * std::abs(analytic));
    ++checked;
  }
}

TEST_CASE("speech-only overfit on one clip") {
  torch::manual_seed(6);
  auto cfg = testing::tiny_config();
  train::SpeechModel model(cfg.speech);
  nn::MelTransform mel(cfg.dsp.stft, cfg.dsp.mel);
  const auto clip = vowel_clip();
  auto spec = spec_tensor(clip, cfg.dsp.stft);
  const int64_t frames = spec.size(2);
  auto wave = torch::zeros({1, 1, frames * 256});
  wave.narrow(2, 0, static_cast<int64_t>(clip.size()))
      .copy_(torch::tensor(std::vector<float>(clip.begin(), clip.end())).view({1, 1, -1}));
  auto len = torch::full({1}, frames, torch::kLong);

  std::vector<torch::Tensor> gp;
  for (auto& p : model->posterior->parameters()) gp.push_back(p);
  for (auto& p : model->generator->parameters()) gp.push_back(p);
  torch::optim::AdamW opt_g(gp, torch::optim::AdamWOptions(1e-3).betas({0.8, 0.99}));
  torch::optim::AdamW opt_d(model->discriminator->parameters(),
                            torch::optim::AdamWOptions(1e-3).betas({0.8, 0.99}));
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 500; ++step) {
    auto q = model->posterior->forward(spec, len);
    auto y_hat = model->generator->forward(q.sample);
    auto l_mel = nn::mel_reconstruction_loss(mel, wave, y_hat);
    auto adv = nn::adversarial_losses(model->discriminator, wave, y_hat.detach());
    opt_d.zero_grad();
    adv.disc_loss.backward();
    opt_d.step();
    auto gen_side = nn::adversarial_losses(model->discriminator, wave, y_hat);
    auto total = 45.0 * l_mel + gen_side.gen_loss + 2.0 * gen_side.feat_match_loss;
    opt_g.zero_grad();
    total.backward();
    opt_g.step();
    if (step == 0) first = l_mel.item<double>();
    last = l_mel.item<double>();
  }
  MESSAGE("L_mel " << first << " -> " << last);
  CHECK(last <= 0.4 * first);
}

}  // TEST_SUITE
