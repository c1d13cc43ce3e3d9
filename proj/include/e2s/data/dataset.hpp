#pragma once

// Paired dataset over a manifest: preprocessed EEG, 22.05 kHz audio and
// lazily computed linear spectrograms, assembled into padded batches.

#include <torch/torch.h>

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "e2s/data/manifest.hpp"
#include "e2s/dsp/frontend.hpp"
#include "e2s/types.hpp"

namespace e2s::data {

struct DatasetOptions {
  dsp::DspConfig dsp;
  bool standardize = true;
  // Applied after preprocessing, e.g. a channel-region subset.
  std::function<EegRecording(const EegRecording&)> channel_transform;
};

struct Batch {
  torch::Tensor eeg;           // [B, C, Te] float
  torch::Tensor eeg_lengths;   // [B] int64
  torch::Tensor spec;          // [B, bins, Ts] float (linear magnitude)
  torch::Tensor spec_lengths;  // [B] int64
  torch::Tensor wave;          // [B, 1, Ts * hop] float
  torch::Tensor wave_lengths;  // [B] int64
  std::vector<std::string> ids;

  int64_t size() const { return static_cast<int64_t>(ids.size()); }
  torch::Tensor eeg_mask() const;   // [B, 1, Te]
  torch::Tensor spec_mask() const;  // [B, 1, Ts]
};

class PairedDataset {
 public:
  PairedDataset(Manifest manifest, DatasetOptions options);

  std::size_t size() const { return manifest_.rows.size(); }
  const Manifest& manifest() const { return manifest_; }
  const ManifestRow& row(std::size_t i) const { return manifest_.rows.at(i); }

  // Preprocessed (and optionally standardised) EEG; cached. Errors name the
  // row id and are thrown as DataError.
  const EegRecording& eeg(std::size_t i);
  // Waveform at the configured audio rate, with alignment when available.
  const SpeechUtterance& speech(std::size_t i);
  // Computed on first use and cached.
  const Spectrogram& linear(std::size_t i);

  // Pads to the longest item; masks come from the per-item lengths.
  Batch load_batch(const std::vector<std::size_t>& indices);

 private:
  Manifest manifest_;
  DatasetOptions options_;
  dsp::EegPreprocessor preprocess_;
  std::mutex mutex_;
  std::map<std::size_t, EegRecording> eeg_cache_;
  std::map<std::size_t, SpeechUtterance> speech_cache_;
  std::map<std::size_t, Spectrogram> spec_cache_;
};

// Shuffles a fixed index set once per epoch with its own generator, so the
// order depends only on the seed and the number of batches drawn.
class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> indices, std::size_t batch_size, uint64_t seed);

  std::vector<std::size_t> next();

  // Serialised generator state plus position, for checkpoints.
  std::string state() const;
  void restore(const std::string& state);

 private:
  void reshuffle();

  std::vector<std::size_t> base_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t position_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace e2s::data
