#include "e2s/dsp/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "e2s/error.hpp"

namespace e2s::dsp {

namespace {

using kernels::Biquad;

Biquad rbj_lowpass(double fc, double q, double fs) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0,
          -2.0 * c / a0, (1.0 - alpha) / a0};
}

Biquad rbj_highpass(double fc, double q, double fs) {
  const double w0 = 2.0 * std::numbers::pi * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0,
          -2.0 * c / a0, (1.0 - alpha) / a0};
}

// Bilinear first-order section, used for the odd leftover pole.
Biquad first_order(double fc, double fs, bool highpass) {
  const double k = std::tan(std::numbers::pi * fc / fs);
  const double a1 = (k - 1.0) / (k + 1.0);
  if (highpass) {
    const double b0 = 1.0 / (1.0 + k);
    return {b0, -b0, 0.0, a1, 0.0};
  }
  const double b0 = k / (1.0 + k);
  return {b0, b0, 0.0, a1, 0.0};
}

std::vector<Biquad> butterworth(int order, double fc, double fs, bool highpass) {
  if (order < 1) throw InvalidParameter("filter order must be >= 1");
  if (!(fc > 0.0 && fc < fs / 2.0)) {
    throw InvalidParameter("cutoff " + std::to_string(fc) +
                           " Hz outside (0, Nyquist) for fs " + std::to_string(fs));
  }
  std::vector<Biquad> sos;
  for (int k = 0; k < order / 2; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
    const double q = 1.0 / (2.0 * std::cos(theta));
    sos.push_back(highpass ? rbj_highpass(fc, q, fs) : rbj_lowpass(fc, q, fs));
  }
  if (order % 2 == 1) sos.push_back(first_order(fc, fs, highpass));
  return sos;
}

EegRecording filtered(const EegRecording& x, std::span<const Biquad> sos,
                      kernels::Extension ext = kernels::Extension::Odd) {
  EegRecording out = x;
  kernels::parallel::sosfiltfilt_rows(sos, out.samples, ext);
  return out;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

double hz_to_mel(double hz) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz >= min_log_hz) return min_log_mel + std::log(hz / min_log_hz) / logstep;
  return hz / f_sp;
}

double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel >= min_log_mel) return min_log_hz * std::exp(logstep * (mel - min_log_mel));
  return f_sp * mel;
}

}  // namespace

std::vector<Biquad> design_notch(double freq, double q, double fs) {
  if (!(freq > 0.0 && freq < fs / 2.0)) {
    throw InvalidParameter("notch frequency " + std::to_string(freq) +
                           " Hz outside (0, Nyquist) for fs " + std::to_string(fs));
  }
  if (!(q > 0.0)) throw InvalidParameter("notch quality factor must be positive");
  const double w0 = 2.0 * std::numbers::pi * freq / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {Biquad{1.0 / a0, -2.0 * c / a0, 1.0 / a0, -2.0 * c / a0, (1.0 - alpha) / a0}};
}

std::vector<Biquad> design_butterworth_lowpass(int order, double fc, double fs) {
  return butterworth(order, fc, fs, false);
}

std::vector<Biquad> design_butterworth_highpass(int order, double fc, double fs) {
  return butterworth(order, fc, fs, true);
}

EegRecording notch_filter(const EegRecording& x, double freq, double q) {
  const auto sos = design_notch(freq, q, x.fs);
  return filtered(x, sos);
}

EegRecording bandpass_filter(const EegRecording& x, double lo, double hi, int order) {
  if (!(lo > 0.0 && lo < hi && hi < x.fs / 2.0)) {
    throw InvalidParameter("band [" + std::to_string(lo) + ", " + std::to_string(hi) +
                           "] Hz invalid for fs " + std::to_string(x.fs));
  }
  // high-pass separately: its poles sit near z = 1 and want even padding
  const auto hp = design_butterworth_highpass(order, lo, x.fs);
  const auto lp = design_butterworth_lowpass(order, hi, x.fs);
  return filtered(filtered(x, hp, kernels::Extension::Even), lp);
}

std::size_t resampled_length(std::size_t n_in, double fs_in, double fs_out) {
  if (!(fs_in > 0.0 && fs_out > 0.0)) {
    throw InvalidParameter("sampling rates must be positive");
  }
  return static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * fs_out / fs_in));
}

Matrix resample(const Matrix& x, double fs_in, double fs_out) {
  const std::size_t n_out = resampled_length(x.cols(), fs_in, fs_out);
  if (fs_in == fs_out) return x;
  kernels::SincKernel kernel;
  // Anti-aliasing cutoff slightly below the lower of the two Nyquist rates.
  kernel.cutoff = std::min(1.0, fs_out / fs_in) * 0.95;
  kernel.half_width = 16.0 / kernel.cutoff;
  Matrix out(x.rows(), n_out);
  kernels::parallel::resample_rows(x, fs_in / fs_out, kernel, out);
  return out;
}

std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.data().begin());
  return resample(m, fs_in, fs_out).data();
}

EegRecording resample(const EegRecording& x, double fs_out) {
  EegRecording out = x;
  out.samples = resample(x.samples, x.fs, fs_out);
  out.fs = fs_out;
  return out;
}

SpeechUtterance resample(const SpeechUtterance& u, double fs_out) {
  SpeechUtterance out = u;
  out.waveform = resample(std::span<const double>(u.waveform), u.fs, fs_out);
  out.fs = fs_out;
  return out;
}

EegPreprocessor::EegPreprocessor(DspConfig cfg, ArtifactRemoval artifact_removal)
    : cfg_(cfg), artifact_removal_(std::move(artifact_removal)) {}

EegRecording EegPreprocessor::operator()(const EegRecording& raw) const {
  raw.validate();
  EegRecording x = notch_filter(raw, cfg_.notch_hz, cfg_.notch_q);
  x = bandpass_filter(x, cfg_.band_lo, cfg_.band_hi, cfg_.filter_order);
  if (artifact_removal_) x = artifact_removal_(x);
  if (x.fs != cfg_.eeg_fs) x = resample(x, cfg_.eeg_fs);
  return x;
}

void standardize_channels(EegRecording& x) {
  for (std::size_t c = 0; c < x.n_channels(); ++c) {
    auto row = x.samples.row(c);
    if (row.empty()) continue;
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    for (double& v : row) v = (v - mean) * inv;
  }
}

std::size_t stft_frame_count(std::size_t n_samples, int hop) {
  return n_samples / static_cast<std::size_t>(hop) + 1;
}

std::vector<double> stft_window(const StftParams& p) {
  std::vector<double> w(static_cast<std::size_t>(p.fft_size), 0.0);
  const int offset = (p.fft_size - p.win_size) / 2;
  for (int i = 0; i < p.win_size; ++i) {
    w[static_cast<std::size_t>(offset + i)] =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / p.win_size);
  }
  return w;
}

std::vector<double> center_pad(std::span<const double> x, int fft_size) {
  const auto pad = static_cast<std::ptrdiff_t>(fft_size / 2);
  const auto n = x.size();
  std::vector<double> out(n + 2 * static_cast<std::size_t>(pad), 0.0);
  if (n == 0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[reflect_index(static_cast<std::ptrdiff_t>(i) - pad, n)];
  }
  return out;
}

Spectrogram linear_spectrogram(const SpeechUtterance& u, const StftParams& p) {
  if (u.fs != p.fs) {
    throw InvalidInput("spectrogram expects audio at " + std::to_string(p.fs) +
                       " Hz, got " + std::to_string(u.fs) + " Hz; resample first");
  }
  if (p.win_size > p.fft_size || p.hop_size <= 0) {
    throw InvalidParameter("invalid STFT sizes");
  }
  const auto padded = center_pad(u.waveform, p.fft_size);
  const auto window = stft_window(p);
  Spectrogram s;
  s.values = Matrix(static_cast<std::size_t>(p.fft_size / 2 + 1),
                    stft_frame_count(u.waveform.size(), p.hop_size));
  kernels::parallel::stft_magnitude(padded, window, p.hop_size, s.values);
  s.kind = SpectrogramKind::LinearMagnitude;
  s.fft_size = p.fft_size;
  s.win_size = p.win_size;
  s.hop_size = p.hop_size;
  s.fs = p.fs;
  return s;
}

Matrix mel_filterbank(const MelParams& mel, int fft_size, double fs) {
  const double fmax = mel.fmax > 0.0 ? mel.fmax : fs / 2.0;
  const auto n_bins = static_cast<std::size_t>(fft_size / 2 + 1);
  const auto n_mels = static_cast<std::size_t>(mel.n_mels);
  const double mel_lo = hz_to_mel(mel.fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));
  }
  Matrix fb(n_mels, n_bins);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double enorm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * fs / fft_size;
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      fb(m, k) = std::max(0.0, std::min(rise, fall)) * enorm;
    }
  }
  return fb;
}

Spectrogram mel_from_linear(const Spectrogram& linear, const MelParams& mel) {
  if (linear.kind != SpectrogramKind::LinearMagnitude) {
    throw InvalidInput("mel_from_linear expects a linear-magnitude spectrogram");
  }
  const Matrix fb = mel_filterbank(mel, linear.fft_size, linear.fs);
  Spectrogram s = linear;
  s.values = Matrix(fb.rows(), linear.n_frames());
  kernels::parallel::matmul(fb, linear.values, s.values);
  for (double& v : s.values.data()) v = std::log(std::max(v, mel.log_floor));
  s.kind = SpectrogramKind::LogMel;
  s.n_mels = mel.n_mels;
  return s;
}

Spectrogram mel_spectrogram(const SpeechUtterance& u, const StftParams& p,
                            const MelParams& mel) {
  return mel_from_linear(linear_spectrogram(u, p), mel);
}

MccSequence mcc_from_mel(const Spectrogram& logmel, int n_mcc) {
  if (logmel.kind != SpectrogramKind::LogMel) {
    throw InvalidInput("mcc_from_mel expects a log-mel spectrogram");
  }
  if (n_mcc < 1 || n_mcc >= static_cast<int>(logmel.n_bins())) {
    throw InvalidParameter("n_mcc must be in [1, n_mels); got " + std::to_string(n_mcc));
  }
  MccSequence out;
  out.n_mcc = n_mcc;
  out.coeffs = Matrix(static_cast<std::size_t>(n_mcc), logmel.n_frames());
  kernels::parallel::dct2_ortho_columns(logmel.values, 1, out.coeffs);
  return out;
}

}  // namespace e2s::dsp
