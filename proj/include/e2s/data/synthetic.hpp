#pragma once

// Seeded synthetic corpus standing in for a real EEG/speech dataset.
// Audio is built phoneme by phoneme from a small lexicon, so every stimulus
// comes with an exact phone alignment; EEG is a subject-specific linear
// mixture of lagged audio envelope features plus noise and line hum.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2s/data/manifest.hpp"
#include "e2s/types.hpp"

namespace e2s::data {

struct LexiconEntry {
  std::string word;
  std::string pos;                  // NOUN, VERB, ...
  std::vector<std::string> phones;  // ARPABET
};

using Lexicon = std::vector<LexiconEntry>;

// Tab-separated word, part of speech, space-separated pronunciation; lines
// starting with '#' are comments. Throws DataError.
Lexicon read_lexicon(const std::filesystem::path& path);
std::filesystem::path default_lexicon_path();

struct SyntheticSpec {
  int64_t n_subjects = 4;
  int64_t n_stimuli = 24;
  int64_t eeg_channels = 16;
  double min_duration = 1.0;
  double max_duration = 2.0;
  uint64_t seed = 7;
  int64_t held_out_subjects = 1;
  int64_t held_out_stimuli = 4;
  double audio_fs = 22050.0;
  double eeg_fs = 256.0;
  double noise_std = 0.5;
  double line_noise = 0.2;  // 60 Hz amplitude
};

struct Stimulus {
  std::string id;
  SpeechUtterance speech;  // includes transcript and phone alignment
  std::vector<PhonemeInterval> words;
};

// Per-subject forward model from audio features to EEG channels.
struct SubjectModel {
  std::string id;
  double gain = 1.0;
  std::vector<double> envelope_weight;  // per channel
  std::vector<double> onset_weight;
  std::vector<int> lag;                 // EEG samples
};

Stimulus synthesize_stimulus(const std::string& id, double duration, const Lexicon& lex,
                             std::mt19937_64& rng, double fs);

// Envelope of |audio| band-limited and resampled to eeg_fs, n_eeg samples,
// standardised to zero mean and unit variance.
std::vector<double> audio_envelope(const std::vector<double>& wave, double audio_fs,
                                   double eeg_fs, std::size_t n_eeg);

SubjectModel make_subject(const std::string& id, int64_t channels, std::mt19937_64& rng);

EegRecording simulate_eeg(const SubjectModel& subject, const Stimulus& stim,
                          const std::vector<std::string>& labels, const SyntheticSpec& spec,
                          std::mt19937_64& rng);

std::vector<std::string> standard_channel_labels(int64_t n);

struct SyntheticCorpus {
  Manifest manifest;
  std::filesystem::path manifest_path;
  nlohmann::json truth;
};

// Writes audio/*.wav, eeg/*.f32 (+ JSON sidecars), alignments/*.TextGrid,
// manifest.csv and synthetic_truth.json under out_dir. The last
// held_out_subjects subjects and held_out_stimuli stimuli are held out.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir,
                                   const Lexicon& lex);

}  // namespace e2s::data
