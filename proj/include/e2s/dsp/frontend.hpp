#pragma once

// Deterministic signal processing shared by training and evaluation:
// zero-phase EEG filtering, band-limited resampling, STFT magnitude,
// log-mel and mel-cepstra.

#include <functional>
#include <span>
#include <vector>

#include "e2s/kernels/kernels.hpp"
#include "e2s/types.hpp"

namespace e2s::dsp {

struct StftParams {
  int fft_size = 1024;
  int win_size = 1024;
  int hop_size = 256;
  double fs = 22050.0;
};

struct MelParams {
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // 0 selects fs / 2
  double log_floor = 1e-5;
};

struct DspConfig {
  double eeg_fs = 256.0;
  double notch_hz = 60.0;
  double notch_q = 30.0;
  double band_lo = 0.5;
  double band_hi = 50.0;
  int filter_order = 4;
  StftParams stft;
  MelParams mel;
  int n_mcc = 13;
};

// ---- filter design --------------------------------------------------------

std::vector<kernels::Biquad> design_notch(double freq, double q, double fs);
std::vector<kernels::Biquad> design_butterworth_lowpass(int order, double fc, double fs);
std::vector<kernels::Biquad> design_butterworth_highpass(int order, double fc, double fs);

// ---- EEG ------------------------------------------------------------------

// Zero-phase notch. Throws InvalidParameter unless 0 < freq < fs/2.
EegRecording notch_filter(const EegRecording& x, double freq, double q = 30.0);

// Zero-phase Butterworth band-pass (high-pass at lo cascaded with low-pass at
// hi, each of the given order). Throws InvalidParameter unless
// 0 < lo < hi < fs/2.
EegRecording bandpass_filter(const EegRecording& x, double lo, double hi, int order = 4);

// Output length is round(n_in * fs_out / fs_in); rows are resampled
// independently.
std::size_t resampled_length(std::size_t n_in, double fs_in, double fs_out);
Matrix resample(const Matrix& x, double fs_in, double fs_out);
std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out);
EegRecording resample(const EegRecording& x, double fs_out);
SpeechUtterance resample(const SpeechUtterance& u, double fs_out);

// Pluggable artifact-removal stage (e.g. externally computed ICA blink
// removal). The default is a pass-through.
using ArtifactRemoval = std::function<EegRecording(const EegRecording&)>;

// notch -> band-pass -> artifact removal -> resample to cfg.eeg_fs.
class EegPreprocessor {
 public:
  explicit EegPreprocessor(DspConfig cfg, ArtifactRemoval artifact_removal = {});
  EegRecording operator()(const EegRecording& raw) const;
  const DspConfig& config() const { return cfg_; }

 private:
  DspConfig cfg_;
  ArtifactRemoval artifact_removal_;
};

// Per-channel zero mean, unit variance. Constant channels become zero.
void standardize_channels(EegRecording& x);

// ---- speech ---------------------------------------------------------------

// Frames produced by center-padded framing: floor(n / hop) + 1.
std::size_t stft_frame_count(std::size_t n_samples, int hop);

// Periodic Hann window of win_size, zero-padded to fft_size (centered).
std::vector<double> stft_window(const StftParams& p);

// Reflect padding by fft_size / 2 on both sides.
std::vector<double> center_pad(std::span<const double> x, int fft_size);

// Magnitude STFT, [fft_size/2+1 x frames]. Throws InvalidInput when
// u.fs != p.fs.
Spectrogram linear_spectrogram(const SpeechUtterance& u, const StftParams& p = {});

// Slaney-style triangular filterbank, area-normalised, [n_mels x fft/2+1].
Matrix mel_filterbank(const MelParams& mel, int fft_size, double fs);

// log(max(filterbank * linear, floor)).
Spectrogram mel_from_linear(const Spectrogram& linear, const MelParams& mel = {});
Spectrogram mel_spectrogram(const SpeechUtterance& u, const StftParams& p = {},
                            const MelParams& mel = {});

// Coefficients 1..n_mcc of the orthonormal DCT-II of each log-mel frame.
// Throws InvalidParameter unless 1 <= n_mcc < n_mels, InvalidInput for a
// non-log-mel input.
MccSequence mcc_from_mel(const Spectrogram& logmel, int n_mcc);

}  // namespace e2s::dsp
