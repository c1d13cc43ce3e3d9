#pragma once

// Run configuration: one JSON tree holding every hyperparameter, with typed
// views for each module. Unknown keys are rejected; dotted overrides such as
// "optimizer.lr=1e-4" are applied on top of a file or preset.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "e2s/dsp/frontend.hpp"
#include "e2s/nn/connector.hpp"
#include "e2s/nn/eeg_module.hpp"
#include "e2s/nn/speech_module.hpp"

namespace e2s {

using Json = nlohmann::json;

enum class TrainingConfiguration { Vanilla, PtAudio, PtAudioFz, PtAudioEeg, PtAudioEegFz };

// "VANILLA", "PT-AUDIO", ... (canonical upper-case names).
std::string to_string(TrainingConfiguration c);
// Accepts canonical names, lower case, and '_' for '-'. Throws ConfigError.
TrainingConfiguration parse_training_configuration(std::string_view name);
const std::vector<TrainingConfiguration>& all_training_configurations();

struct OptimizerConfig {
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-9;
  double weight_decay = 0.01;
  double lr_decay = 0.999875;  // per iteration
};

struct LossWeights {
  double mel = 45.0;
  double kl = 1.0;
  double adv = 1.0;
  double fm = 2.0;
  double eeg = 1.0;
};

struct RunSettings {
  TrainingConfiguration name = TrainingConfiguration::Vanilla;
  uint64_t seed = 1234;
  int64_t max_iterations = 2000;
  int64_t batch_size = 2;
  int64_t log_every = 10;
  int64_t checkpoint_every = 500;
  int64_t eeg_pretrain_epochs = 20;
  std::string pretrained_eeg;
  std::string pretrained_speech;
  std::string pretrained_name_map;
  double temperature = 0.667;
};

struct DataSettings {
  std::string manifest;
  bool standardize = true;
  std::vector<std::string> channel_subset{"all"};
  int64_t prefetch_workers = 0;
};

struct SyntheticSettings {
  int64_t n_subjects = 4;
  int64_t n_stimuli = 24;
  int64_t eeg_channels = 16;
  double min_duration = 1.0;
  double max_duration = 2.0;
  uint64_t seed = 7;
  int64_t held_out_subjects = 1;
  int64_t held_out_stimuli = 4;
};

using RegionMap = std::map<std::string, std::vector<std::string>>;

// 10-20 / 10-10 electrode labels grouped into scalp regions.
RegionMap default_regions();

struct EvalSettings {
  int n_mcc = 13;
  std::string phoneme_table;  // empty selects the bundled table
  RegionMap regions = default_regions();
};

struct RunConfig {
  RunSettings run;
  OptimizerConfig optimizer;
  LossWeights loss;
  dsp::DspConfig dsp;
  nn::EegEncoderConfig eeg;
  nn::SpeechConfig speech;
  nn::ConnectorConfig connector;
  DataSettings data;
  SyntheticSettings synthetic;
  EvalSettings eval;

  // Builds the typed view from a complete tree. Throws ConfigError.
  static RunConfig from_json(const Json& tree);
  Json to_json() const;

  // FNV-1a over the canonical serialisation of the whole tree.
  std::string hash() const;
  // Hash of the sections that determine the parameter shapes of one module
  // ("eeg", "speech" or "connector").
  std::string architecture_hash(std::string_view module) const;

  void validate() const;
};

Json default_config_tree();

// Deep merge of user values into base. Throws ConfigError naming the first
// key absent from base (free-form maps such as eval.regions excepted).
Json merge_config(const Json& base, const Json& user);

// "a.b.c=value"; value is parsed as JSON when possible, otherwise taken as
// a string. Throws ConfigError for unknown keys or malformed input.
void apply_override(Json& tree, std::string_view assignment);

// source is a preset name (vanilla, pt-audio, pt-audio-fz, pt-audio-eeg,
// pt-audio-eeg-fz), a JSON file path, or empty for the defaults.
Json load_config_tree(const std::string& source, const std::vector<std::string>& overrides);
RunConfig load_config(const std::string& source, const std::vector<std::string>& overrides);

uint64_t fnv1a64(std::string_view bytes);
std::string hex64(uint64_t v);

}  // namespace e2s
