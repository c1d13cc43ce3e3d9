#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "e2s/dsp/frontend.hpp"
#include "e2s/error.hpp"

using namespace e2s;

namespace {

EegRecording sine_recording(double freq, double fs, std::size_t n, double offset = 0.0) {
  EegRecording x;
  x.fs = fs;
  x.samples = Matrix(1, n);
  for (std::size_t t = 0; t < n; ++t) {
    x.samples(0, t) = offset + std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / fs);
  }
  x.channel_labels = {"Cz"};
  return x;
}

double rms(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

SpeechUtterance utterance(std::vector<double> w, double fs = 22050.0) {
  SpeechUtterance u;
  u.waveform = std::move(w);
  u.fs = fs;
  return u;
}

}  // namespace

TEST_SUITE("dsp") {

TEST_CASE("notch removes 60 Hz and passes 10 Hz") {
  const auto hum = sine_recording(60.0, 512.0, 512 * 20);
  const auto y = dsp::notch_filter(hum, 60.0, 30.0);
  CHECK(rms(y.samples.row(0)) < 0.05 * rms(hum.samples.row(0)));

  const auto alpha = sine_recording(10.0, 512.0, 512 * 20);
  const auto z = dsp::notch_filter(alpha, 60.0, 30.0);
  CHECK(std::abs(rms(z.samples.row(0)) / rms(alpha.samples.row(0)) - 1.0) < 0.05);

  auto zero = alpha;
  std::fill(zero.samples.data().begin(), zero.samples.data().end(), 0.0);
  const auto zz = dsp::notch_filter(zero, 60.0, 30.0);
  for (double v : zz.samples.data()) CHECK(v == 0.0);

  CHECK_THROWS_AS(dsp::notch_filter(alpha, 256.0, 30.0), InvalidParameter);
}

TEST_CASE("band-pass 0.5-50 Hz") {
  const auto hi = sine_recording(100.0, 512.0, 512 * 20);
  CHECK(rms(dsp::bandpass_filter(hi, 0.5, 50.0).samples.row(0)) < 0.05 * rms(hi.samples.row(0)));
  const auto mid = sine_recording(20.0, 512.0, 512 * 20);
  CHECK(std::abs(rms(dsp::bandpass_filter(mid, 0.5, 50.0).samples.row(0)) /
                     rms(mid.samples.row(0)) -
                 1.0) < 0.05);

  auto dc = sine_recording(0.0, 512.0, 512 * 20, 3.0);
  const auto y = dsp::bandpass_filter(dc, 0.5, 50.0);
  double mean = 0.0;
  for (double v : y.samples.row(0)) mean += v;
  mean /= static_cast<double>(y.n_timesteps());
  CHECK(std::abs(mean) < 1e-3 * 3.0);

  CHECK_THROWS_AS(dsp::bandpass_filter(mid, 50.0, 0.5), InvalidParameter);
  CHECK_THROWS_AS(dsp::bandpass_filter(mid, 0.5, 300.0), InvalidParameter);
}

TEST_CASE("filters are zero phase") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  EegRecording x = sine_recording(0.0, 256.0, 2048);
  for (auto& v : x.samples.data()) v = n(rng);
  auto rev = x;
  std::reverse(rev.samples.data().begin(), rev.samples.data().end());
  for (int variant = 0; variant < 2; ++variant) {
    auto f = variant == 0 ? dsp::notch_filter(x, 60.0, 30.0) : dsp::bandpass_filter(x, 0.5, 50.0);
    auto g = variant == 0 ? dsp::notch_filter(rev, 60.0, 30.0)
                          : dsp::bandpass_filter(rev, 0.5, 50.0);
    std::reverse(g.samples.data().begin(), g.samples.data().end());
    double diff = 0.0;
    for (std::size_t i = 0; i < f.samples.size(); ++i) {
      diff = std::max(diff, std::abs(f.samples.data()[i] - g.samples.data()[i]));
    }
    CHECK(diff < 1e-5);
  }
}

TEST_CASE("resample length, DC and identity") {
  std::vector<double> c(1000, 0.7);
  for (auto [a, b] : {std::pair{512.0, 256.0}, {256.0, 22050.0}, {22050.0, 16000.0}, {100.0, 333.0}}) {
    const auto y = dsp::resample(c, a, b);
    CHECK(y.size() == static_cast<std::size_t>(std::lround(1000 * b / a)));
    const std::size_t edge = y.size() / 10;
    double dev = 0.0;
    for (std::size_t i = edge; i + edge < y.size(); ++i) dev = std::max(dev, std::abs(y[i] - 0.7));
    CHECK(dev < 1e-6);
  }
  std::vector<double> r(1024);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : r) v = u(rng);
  CHECK(dsp::resample(r, 512.0, 512.0) == r);
  CHECK(dsp::resample(r, 512.0, 256.0).size() == 512);

  Matrix m(3, 1024, 1.0);
  auto mm = dsp::resample(m, 512.0, 256.0);
  CHECK(mm.rows() == 3);
  CHECK(mm.cols() == 512);
}

TEST_CASE("resample round trip on band-limited signal") {
  const double a = 512.0, b = 256.0;
  std::vector<double> x(2048);
  for (std::size_t t = 0; t < x.size(); ++t) {
    x[t] = std::sin(2 * std::numbers::pi * 20.0 * static_cast<double>(t) / a);
  }
  const auto back = dsp::resample(dsp::resample(x, a, b), b, a);
  REQUIRE(back.size() == x.size());
  double dev = 0.0;
  for (std::size_t t = 200; t + 200 < x.size(); ++t) dev = std::max(dev, std::abs(back[t] - x[t]));
  CHECK(dev < 1e-2);
}

TEST_CASE("linear spectrogram frames and bins") {
  const auto s = dsp::linear_spectrogram(utterance(std::vector<double>(22016, 0.0)));
  CHECK(s.n_frames() == 22016 / 256 + 1);
  CHECK(s.n_frames() == 87);
  CHECK(s.n_bins() == 513);
  for (double v : s.values.data()) CHECK(v == 0.0);

  std::vector<double> w(22050);
  for (std::size_t t = 0; t < w.size(); ++t) {
    w[t] = std::sin(2 * std::numbers::pi * 1000.0 * static_cast<double>(t) / 22050.0);
  }
  const auto tone = dsp::linear_spectrogram(utterance(w));
  const std::size_t f = tone.n_frames() / 2;
  std::size_t best = 0;
  for (std::size_t k = 0; k < tone.n_bins(); ++k) {
    if (tone.values(k, f) > tone.values(best, f)) best = k;
  }
  CHECK(best == static_cast<std::size_t>(std::lround(1000.0 * 1024 / 22050.0)));
  CHECK(best == 46);

  CHECK_THROWS_AS(dsp::linear_spectrogram(utterance(w, 16000.0)), InvalidInput);

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> len(300, 50000);
  for (int i = 0; i < 20; ++i) {
    const auto n = len(rng);
    CHECK(dsp::linear_spectrogram(utterance(std::vector<double>(n, 0.1))).n_frames() ==
          n / 256 + 1);
  }
}

TEST_CASE("mel spectrogram floor, shape and scaling") {
  const auto silent = dsp::mel_spectrogram(utterance(std::vector<double>(8000, 0.0)));
  CHECK(silent.n_bins() == 80);
  for (double v : silent.values.data()) CHECK(v == doctest::Approx(std::log(1e-5)));

  std::vector<double> w(8000);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& v : w) v = n(rng);
  const auto a = dsp::mel_spectrogram(utterance(w));
  CHECK(a.n_frames() == dsp::linear_spectrogram(utterance(w)).n_frames());
  auto w2 = w;
  for (auto& v : w2) v *= 2.0;
  const auto b = dsp::mel_spectrogram(utterance(w2));
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.values.data()[i] > std::log(1e-5) + 1e-9) {
      CHECK(b.values.data()[i] - a.values.data()[i] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
  }
}

TEST_CASE("mcc from mel") {
  Spectrogram m;
  m.kind = SpectrogramKind::LogMel;
  m.n_mels = 80;
  m.values = Matrix(80, 2, 0.0);
  for (std::size_t k = 0; k < 80; ++k) {
    m.values(k, 0) = -3.0;
    // DCT-II basis 1 of length 80
    m.values(k, 1) = std::cos(std::numbers::pi * (static_cast<double>(k) + 0.5) / 80.0);
  }
  const auto c = dsp::mcc_from_mel(m, 13);
  CHECK(c.coeffs.rows() == 13);
  CHECK(c.coeffs.cols() == 2);
  for (std::size_t k = 0; k < 13; ++k) CHECK(std::abs(c.coeffs(k, 0)) < 1e-9);
  CHECK(std::abs(c.coeffs(0, 1)) > 1.0);
  for (std::size_t k = 1; k < 13; ++k) CHECK(std::abs(c.coeffs(k, 1)) < 1e-6);
  CHECK(dsp::mcc_from_mel(m, 13).coeffs == c.coeffs);

  CHECK_THROWS_AS(dsp::mcc_from_mel(m, 0), InvalidParameter);
  CHECK_THROWS_AS(dsp::mcc_from_mel(m, 80), InvalidParameter);
  auto lin = m;
  lin.kind = SpectrogramKind::LinearMagnitude;
  CHECK_THROWS_AS(dsp::mcc_from_mel(lin, 13), InvalidInput);
}

TEST_CASE("mcc is linear") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Spectrogram a, b, s;
  for (auto* x : {&a, &b, &s}) {
    x->kind = SpectrogramKind::LogMel;
    x->n_mels = 80;
    x->values = Matrix(80, 5);
  }
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    a.values.data()[i] = n(rng);
    b.values.data()[i] = n(rng);
    s.values.data()[i] = 1.5 * a.values.data()[i] - 0.25 * b.values.data()[i];
  }
  const auto ca = dsp::mcc_from_mel(a, 13), cb = dsp::mcc_from_mel(b, 13), cs = dsp::mcc_from_mel(s, 13);
  for (std::size_t i = 0; i < cs.coeffs.size(); ++i) {
    CHECK(std::abs(cs.coeffs.data()[i] - (1.5 * ca.coeffs.data()[i] - 0.25 * cb.coeffs.data()[i])) < 1e-6);
  }
}

TEST_CASE("preprocessor resamples to the EEG rate") {
  auto x = sine_recording(10.0, 512.0, 1024);
  dsp::DspConfig cfg;
  dsp::EegPreprocessor pre(cfg);
  const auto y = pre(x);
  CHECK(y.fs == 256.0);
  CHECK(y.n_timesteps() == 512);
  bool hooked = false;
  dsp::EegPreprocessor with_hook(cfg, [&](const EegRecording& r) {
    hooked = true;
    return r;
  });
  with_hook(x);
  CHECK(hooked);
}

}  // TEST_SUITE
