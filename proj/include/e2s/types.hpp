#pragma once

#include <optional>
#include <string>
#include <vector>

#include "e2s/matrix.hpp"

namespace e2s {

struct PhonemeInterval {
  std::string label;  // ARPABET, stress digits allowed
  double start = 0.0; // seconds
  double end = 0.0;
};

struct PhonemeAlignment {
  std::vector<PhonemeInterval> entries;

  // Intervals must be non-empty, ordered and non-overlapping.
  void validate() const;
};

struct EegRecording {
  Matrix samples;  // [channel x time]
  double fs = 0.0;
  std::vector<std::string> channel_labels;
  std::string subject_id;
  std::string stimulus_id;

  std::size_t n_channels() const { return samples.rows(); }
  std::size_t n_timesteps() const { return samples.cols(); }
  double duration() const { return static_cast<double>(n_timesteps()) / fs; }

  // Throws InvalidInput when a type invariant does not hold.
  void validate() const;
};

struct SpeechUtterance {
  std::vector<double> waveform;
  double fs = 0.0;
  std::string transcript;
  std::optional<PhonemeAlignment> alignment;

  void validate() const;
};

enum class SpectrogramKind { LinearMagnitude, LogMel };

struct Spectrogram {
  Matrix values;  // [bin x frame]
  SpectrogramKind kind = SpectrogramKind::LinearMagnitude;
  int fft_size = 0;
  int win_size = 0;
  int hop_size = 0;
  int n_mels = 0;
  double fs = 0.0;

  std::size_t n_bins() const { return values.rows(); }
  std::size_t n_frames() const { return values.cols(); }
};

struct MccSequence {
  Matrix coeffs;  // [n_mcc x frame]
  int n_mcc = 0;

  std::size_t n_frames() const { return coeffs.cols(); }
};

}  // namespace e2s
