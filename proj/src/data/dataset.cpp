#include "e2s/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "e2s/data/textgrid.hpp"
#include "e2s/dsp/io.hpp"
#include "e2s/error.hpp"
#include "e2s/nn/layers.hpp"

namespace e2s::data {

torch::Tensor Batch::eeg_mask() const { return nn::sequence_mask(eeg_lengths, eeg.size(2)); }

torch::Tensor Batch::spec_mask() const { return nn::sequence_mask(spec_lengths, spec.size(2)); }

PairedDataset::PairedDataset(Manifest manifest, DatasetOptions options)
    : manifest_(std::move(manifest)),
      options_(std::move(options)),
      preprocess_(options_.dsp) {}

const EegRecording& PairedDataset::eeg(std::size_t i) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (auto it = eeg_cache_.find(i); it != eeg_cache_.end()) return it->second;
  const auto& r = row(i);
  try {
    auto raw = dsp::read_eeg(manifest_.resolve(r.eeg_path));
    if (r.onset || r.offset) {
      const auto n = raw.n_timesteps();
      const auto b = static_cast<std::size_t>(std::lround(r.onset.value_or(0.0) * raw.fs));
      const auto e = r.offset ? static_cast<std::size_t>(std::lround(*r.offset * raw.fs)) : n;
      if (b >= e || e > n) throw DataError("onset/offset outside the recording");
      Matrix cropped(raw.n_channels(), e - b);
      for (std::size_t c = 0; c < raw.n_channels(); ++c) {
        std::copy(raw.samples.row(c).begin() + b, raw.samples.row(c).begin() + e,
                  cropped.row(c).begin());
      }
      raw.samples = std::move(cropped);
    }
    raw.validate();
    auto rec = preprocess_(raw);
    if (options_.standardize) dsp::standardize_channels(rec);
    if (options_.channel_transform) rec = options_.channel_transform(rec);
    return eeg_cache_.emplace(i, std::move(rec)).first->second;
  } catch (const Error& e) {
    throw DataError("row " + r.id() + ": " + e.what());
  }
}

const SpeechUtterance& PairedDataset::speech(std::size_t i) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (auto it = speech_cache_.find(i); it != speech_cache_.end()) return it->second;
  const auto& r = row(i);
  try {
    auto u = dsp::read_wav(manifest_.resolve(r.audio_path));
    if (u.fs != options_.dsp.stft.fs) u = dsp::resample(u, options_.dsp.stft.fs);
    u.transcript = r.transcript;
    if (!r.alignment_path.empty()) {
      u.alignment = phone_alignment(read_textgrid(manifest_.resolve(r.alignment_path)));
    }
    u.validate();
    return speech_cache_.emplace(i, std::move(u)).first->second;
  } catch (const Error& e) {
    throw DataError("row " + r.id() + ": " + e.what());
  }
}

const Spectrogram& PairedDataset::linear(std::size_t i) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = spec_cache_.find(i); it != spec_cache_.end()) return it->second;
  }
  auto spec = dsp::linear_spectrogram(speech(i), options_.dsp.stft);
  std::lock_guard<std::mutex> lock(mutex_);
  return spec_cache_.emplace(i, std::move(spec)).first->second;
}

Batch PairedDataset::load_batch(const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidInput("load_batch needs at least one row");
  const auto b = static_cast<int64_t>(indices.size());
  const int64_t hop = options_.dsp.stft.hop_size;

  int64_t channels = -1, max_eeg = 0, max_frames = 0;
  for (auto i : indices) {
    const auto& e = eeg(i);
    if (channels >= 0 && channels != static_cast<int64_t>(e.n_channels())) {
      throw DataError("row " + row(i).id() + ": channel count differs within the batch");
    }
    channels = static_cast<int64_t>(e.n_channels());
    max_eeg = std::max<int64_t>(max_eeg, static_cast<int64_t>(e.n_timesteps()));
    max_frames = std::max<int64_t>(max_frames, static_cast<int64_t>(linear(i).n_frames()));
  }
  const int64_t bins = static_cast<int64_t>(linear(indices[0]).n_bins());

  Batch out;
  auto eeg_t = torch::zeros({b, channels, max_eeg}, torch::kDouble);
  auto spec_t = torch::zeros({b, bins, max_frames}, torch::kDouble);
  auto wave_t = torch::zeros({b, 1, max_frames * hop}, torch::kDouble);
  out.eeg_lengths = torch::empty({b}, torch::kLong);
  out.spec_lengths = torch::empty({b}, torch::kLong);
  out.wave_lengths = torch::empty({b}, torch::kLong);
  auto ea = eeg_t.accessor<double, 3>();
  auto sa = spec_t.accessor<double, 3>();
  auto wa = wave_t.accessor<double, 3>();
  for (int64_t k = 0; k < b; ++k) {
    const auto i = indices[k];
    const auto& e = eeg(i);
    const auto& s = linear(i);
    const auto& u = speech(i);
    for (std::size_t c = 0; c < e.n_channels(); ++c) {
      for (std::size_t t = 0; t < e.n_timesteps(); ++t) ea[k][c][t] = e.samples(c, t);
    }
    for (std::size_t f = 0; f < s.n_bins(); ++f) {
      for (std::size_t t = 0; t < s.n_frames(); ++t) sa[k][f][t] = s.values(f, t);
    }
    const auto n = std::min<std::size_t>(u.waveform.size(), max_frames * hop);
    for (std::size_t t = 0; t < n; ++t) wa[k][0][t] = u.waveform[t];
    out.eeg_lengths[k] = static_cast<int64_t>(e.n_timesteps());
    out.spec_lengths[k] = static_cast<int64_t>(s.n_frames());
    out.wave_lengths[k] = static_cast<int64_t>(n);
    out.ids.push_back(row(i).id());
  }
  out.eeg = eeg_t.to(torch::kFloat);
  out.spec = spec_t.to(torch::kFloat);
  out.wave = wave_t.to(torch::kFloat);
  return out;
}

BatchSampler::BatchSampler(std::vector<std::size_t> indices, std::size_t batch_size,
                           uint64_t seed)
    : base_(std::move(indices)), batch_size_(batch_size), rng_(seed) {
  if (base_.empty()) throw InvalidInput("sampler needs at least one index");
  if (batch_size_ == 0) throw InvalidParameter("batch size must be >= 1");
  reshuffle();
}

void BatchSampler::reshuffle() {
  order_ = base_;
  std::shuffle(order_.begin(), order_.end(), rng_);
  position_ = 0;
}

std::vector<std::size_t> BatchSampler::next() {
  std::vector<std::size_t> out;
  while (out.size() < std::min(batch_size_, base_.size())) {
    if (position_ >= order_.size()) reshuffle();
    out.push_back(order_[position_++]);
  }
  return out;
}

std::string BatchSampler::state() const {
  std::ostringstream os;
  os << rng_ << ' ' << position_ << ' ' << order_.size();
  for (auto i : order_) os << ' ' << i;
  return os.str();
}

void BatchSampler::restore(const std::string& state) {
  std::istringstream is(state);
  std::size_t n = 0;
  is >> rng_ >> position_ >> n;
  order_.assign(n, 0);
  for (auto& i : order_) is >> i;
  if (!is) throw DataError("corrupt sampler state");
}

}  // namespace e2s::data
