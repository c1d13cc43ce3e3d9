#include "e2s/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "e2s/error.hpp"

namespace e2s {

namespace {

struct NamedConfiguration {
  TrainingConfiguration value;
  const char* name;
};

constexpr NamedConfiguration kConfigurations[] = {
    {TrainingConfiguration::Vanilla, "VANILLA"},
    {TrainingConfiguration::PtAudio, "PT-AUDIO"},
    {TrainingConfiguration::PtAudioFz, "PT-AUDIO-FZ"},
    {TrainingConfiguration::PtAudioEeg, "PT-AUDIO-EEG"},
    {TrainingConfiguration::PtAudioEegFz, "PT-AUDIO-EEG-FZ"},
};

// Maps whose keys are user-defined; merged by replacement.
bool is_free_map(const std::string& path) { return path == "eval.regions"; }

const Json& at_path(const Json& tree, std::string_view dotted) {
  const Json* node = &tree;
  std::size_t pos = 0;
  while (pos <= dotted.size()) {
    const auto end = std::min(dotted.find('.', pos), dotted.size());
    const std::string key(dotted.substr(pos, end - pos));
    if (!node->is_object() || !node->contains(key)) {
      throw ConfigError("missing config key '" + std::string(dotted) + "'");
    }
    node = &(*node)[key];
    pos = end + 1;
  }
  return *node;
}

template <typename T>
T get(const Json& tree, std::string_view dotted) {
  const Json& v = at_path(tree, dotted);
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(dotted) + "' has the wrong type: " + v.dump());
  }
}

void merge_into(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key_path + "'");
    Json& slot = base[it.key()];
    if (slot.is_object() && !is_free_map(key_path)) {
      merge_into(slot, it.value(), key_path);
    } else {
      if (slot.is_object() && !it.value().is_object()) {
        throw ConfigError("config key '" + key_path + "' must be an object");
      }
      slot = it.value();
    }
  }
}

std::string normalise_name(std::string_view name) {
  std::string s(name);
  for (auto& ch : s) {
    ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (ch == '_') ch = '-';
  }
  return s;
}

}  // namespace

std::string to_string(TrainingConfiguration c) {
  for (const auto& nc : kConfigurations) {
    if (nc.value == c) return nc.name;
  }
  return "?";
}

TrainingConfiguration parse_training_configuration(std::string_view name) {
  const auto s = normalise_name(name);
  for (const auto& nc : kConfigurations) {
    if (s == nc.name) return nc.value;
  }
  throw ConfigError("unknown training configuration '" + std::string(name) + "'");
}

const std::vector<TrainingConfiguration>& all_training_configurations() {
  static const std::vector<TrainingConfiguration> all = [] {
    std::vector<TrainingConfiguration> v;
    for (const auto& nc : kConfigurations) v.push_back(nc.value);
    return v;
  }();
  return all;
}

RegionMap default_regions() {
  return {{"frontal", {"Fp1", "Fp2", "AF3", "AF4", "F7", "F3", "Fz", "F4", "F8"}},
          {"central", {"FC5", "FC1", "FC2", "FC6", "C3", "Cz", "C4"}},
          {"temporal", {"FT7", "FT8", "T7", "T8", "TP7", "TP8"}},
          {"parietal", {"CP5", "CP1", "CP2", "CP6", "P7", "P3", "Pz", "P4", "P8"}},
          {"occipital", {"PO3", "PO4", "O1", "Oz", "O2"}}};
}

Json default_config_tree() { return RunConfig{}.to_json(); }

Json merge_config(const Json& base, const Json& user) {
  Json out = base;
  merge_into(out, user, "");
  return out;
}

void apply_override(Json& tree, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value, got '" + std::string(assignment) +
                      "'");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  Json value = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  Json patch = value;
  std::string remaining = key;
  while (true) {
    const auto dot = remaining.rfind('.');
    const std::string last = dot == std::string::npos ? remaining : remaining.substr(dot + 1);
    if (last.empty()) throw ConfigError("malformed override key '" + key + "'");
    patch = Json{{last, patch}};
    if (dot == std::string::npos) break;
    remaining = remaining.substr(0, dot);
  }
  tree = merge_config(tree, patch);
}

Json load_config_tree(const std::string& source, const std::vector<std::string>& overrides) {
  Json tree = default_config_tree();
  if (!source.empty()) {
    bool preset = false;
    try {
      const auto c = parse_training_configuration(source);
      tree["run"]["name"] = to_string(c);
      preset = !std::filesystem::exists(source);
    } catch (const ConfigError&) {
    }
    if (!preset) {
      std::ifstream in(source);
      if (!in) throw ConfigError("cannot open config file '" + source + "'");
      Json user = Json::parse(in, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
      if (user.is_discarded()) throw ConfigError("config file '" + source + "' is not valid JSON");
      tree = merge_config(tree, user);
    }
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return tree;
}

RunConfig load_config(const std::string& source, const std::vector<std::string>& overrides) {
  return RunConfig::from_json(load_config_tree(source, overrides));
}

RunConfig RunConfig::from_json(const Json& tree) {
  // Catch unknown keys in a hand-written complete tree as well.
  const Json t = merge_config(default_config_tree(), tree);
  RunConfig c;
  c.run.name = parse_training_configuration(get<std::string>(t, "run.name"));
  c.run.seed = get<uint64_t>(t, "run.seed");
  c.run.max_iterations = get<int64_t>(t, "run.max_iterations");
  c.run.batch_size = get<int64_t>(t, "run.batch_size");
  c.run.log_every = get<int64_t>(t, "run.log_every");
  c.run.checkpoint_every = get<int64_t>(t, "run.checkpoint_every");
  c.run.eeg_pretrain_epochs = get<int64_t>(t, "run.eeg_pretrain_epochs");
  c.run.pretrained_eeg = get<std::string>(t, "run.pretrained_eeg");
  c.run.pretrained_speech = get<std::string>(t, "run.pretrained_speech");
  c.run.pretrained_name_map = get<std::string>(t, "run.pretrained_name_map");
  c.run.temperature = get<double>(t, "run.temperature");

  c.optimizer.lr = get<double>(t, "optimizer.lr");
  c.optimizer.beta1 = get<double>(t, "optimizer.beta1");
  c.optimizer.beta2 = get<double>(t, "optimizer.beta2");
  c.optimizer.eps = get<double>(t, "optimizer.eps");
  c.optimizer.weight_decay = get<double>(t, "optimizer.weight_decay");
  c.optimizer.lr_decay = get<double>(t, "optimizer.lr_decay");

  c.loss.mel = get<double>(t, "loss.mel");
  c.loss.kl = get<double>(t, "loss.kl");
  c.loss.adv = get<double>(t, "loss.adv");
  c.loss.fm = get<double>(t, "loss.fm");
  c.loss.eeg = get<double>(t, "loss.eeg");

  c.dsp.eeg_fs = get<double>(t, "dsp.eeg_fs");
  c.dsp.notch_hz = get<double>(t, "dsp.notch_hz");
  c.dsp.notch_q = get<double>(t, "dsp.notch_q");
  c.dsp.band_lo = get<double>(t, "dsp.band_lo");
  c.dsp.band_hi = get<double>(t, "dsp.band_hi");
  c.dsp.filter_order = get<int>(t, "dsp.filter_order");
  c.dsp.stft.fs = get<double>(t, "dsp.audio_fs");
  c.dsp.stft.fft_size = get<int>(t, "dsp.fft_size");
  c.dsp.stft.win_size = get<int>(t, "dsp.win_size");
  c.dsp.stft.hop_size = get<int>(t, "dsp.hop_size");
  c.dsp.mel.n_mels = get<int>(t, "dsp.n_mels");
  c.dsp.mel.fmin = get<double>(t, "dsp.fmin");
  c.dsp.mel.fmax = get<double>(t, "dsp.fmax");
  c.dsp.mel.log_floor = get<double>(t, "dsp.log_floor");

  c.eeg.n_channels_in = get<int64_t>(t, "eeg.n_channels_in");
  c.eeg.hidden_dim = get<int64_t>(t, "eeg.hidden_dim");
  c.eeg.n_conv_blocks = get<int64_t>(t, "eeg.n_conv_blocks");
  c.eeg.conv_strides = get<std::vector<int64_t>>(t, "eeg.conv_strides");
  c.eeg.n_s4_layers = get<int64_t>(t, "eeg.n_s4_layers");
  c.eeg.s4_state_dim = get<int64_t>(t, "eeg.s4_state_dim");
  c.eeg.dropout = get<double>(t, "eeg.dropout");
  c.eeg.embed_dim = get<int64_t>(t, "eeg.embed_dim");
  c.eeg.dt_min = get<double>(t, "eeg.dt_min");
  c.eeg.dt_max = get<double>(t, "eeg.dt_max");

  c.speech.spec_bins = c.dsp.stft.fft_size / 2 + 1;
  c.speech.latent_dim = get<int64_t>(t, "speech.latent_dim");
  c.speech.posterior_hidden = get<int64_t>(t, "speech.posterior_hidden");
  c.speech.posterior_kernel = get<int64_t>(t, "speech.posterior_kernel");
  c.speech.posterior_dilation_rate = get<int64_t>(t, "speech.posterior_dilation_rate");
  c.speech.posterior_layers = get<int64_t>(t, "speech.posterior_layers");
  c.speech.generator_channels = get<int64_t>(t, "speech.generator_channels");
  c.speech.upsample_rates = get<std::vector<int64_t>>(t, "speech.upsample_rates");
  c.speech.upsample_kernels = get<std::vector<int64_t>>(t, "speech.upsample_kernels");
  c.speech.resblock_kernels = get<std::vector<int64_t>>(t, "speech.resblock_kernels");
  c.speech.resblock_dilations =
      get<std::vector<std::vector<int64_t>>>(t, "speech.resblock_dilations");
  c.speech.mpd_periods = get<std::vector<int64_t>>(t, "speech.mpd_periods");
  c.speech.mpd_channels = get<std::vector<int64_t>>(t, "speech.mpd_channels");
  c.speech.msd_scales = get<int64_t>(t, "speech.msd_scales");
  c.speech.msd_channels = get<std::vector<int64_t>>(t, "speech.msd_channels");
  c.speech.segment_frames = get<int64_t>(t, "speech.segment_frames");

  c.connector.embed_dim = c.eeg.embed_dim;
  c.connector.latent_dim = c.speech.latent_dim;
  c.connector.prenet_hidden = get<int64_t>(t, "connector.prenet_hidden");
  c.connector.prenet_layers = get<int64_t>(t, "connector.prenet_layers");
  c.connector.prenet_heads = get<int64_t>(t, "connector.prenet_heads");
  c.connector.prenet_ffn = get<int64_t>(t, "connector.prenet_ffn");
  c.connector.prenet_ffn_kernel = get<int64_t>(t, "connector.prenet_ffn_kernel");
  c.connector.prenet_dropout = get<double>(t, "connector.prenet_dropout");
  c.connector.flow_layers = get<int64_t>(t, "connector.flow_layers");
  c.connector.flow_hidden = get<int64_t>(t, "connector.flow_hidden");
  c.connector.flow_kernel = get<int64_t>(t, "connector.flow_kernel");
  c.connector.flow_dilation_rate = get<int64_t>(t, "connector.flow_dilation_rate");
  c.connector.flow_wavenet_layers = get<int64_t>(t, "connector.flow_wavenet_layers");

  c.data.manifest = get<std::string>(t, "data.manifest");
  c.data.standardize = get<bool>(t, "data.standardize");
  c.data.channel_subset = get<std::vector<std::string>>(t, "data.channel_subset");
  c.data.prefetch_workers = get<int64_t>(t, "data.prefetch_workers");

  c.synthetic.n_subjects = get<int64_t>(t, "synthetic.n_subjects");
  c.synthetic.n_stimuli = get<int64_t>(t, "synthetic.n_stimuli");
  c.synthetic.eeg_channels = get<int64_t>(t, "synthetic.eeg_channels");
  c.synthetic.min_duration = get<double>(t, "synthetic.min_duration");
  c.synthetic.max_duration = get<double>(t, "synthetic.max_duration");
  c.synthetic.seed = get<uint64_t>(t, "synthetic.seed");
  c.synthetic.held_out_subjects = get<int64_t>(t, "synthetic.held_out_subjects");
  c.synthetic.held_out_stimuli = get<int64_t>(t, "synthetic.held_out_stimuli");

  c.eval.n_mcc = get<int>(t, "eval.n_mcc");
  c.eval.phoneme_table = get<std::string>(t, "eval.phoneme_table");
  c.eval.regions = get<RegionMap>(t, "eval.regions");

  c.validate();
  return c;
}

void RunConfig::validate() const {
  eeg.validate();
  speech.validate();
  connector.validate();
  if (eeg.embed_dim != speech.latent_dim) {
    throw ConfigError("eeg.embed_dim (" + std::to_string(eeg.embed_dim) +
                      ") must equal speech.latent_dim (" + std::to_string(speech.latent_dim) +
                      ")");
  }
  if (speech.hop() != dsp.stft.hop_size) {
    throw ConfigError("product of speech.upsample_rates must equal dsp.hop_size");
  }
  if (dsp.stft.win_size > dsp.stft.fft_size) throw ConfigError("dsp.win_size exceeds fft_size");
  if (eval.n_mcc < 1 || eval.n_mcc >= dsp.mel.n_mels) {
    throw ConfigError("eval.n_mcc must be in [1, n_mels)");
  }
  if (run.batch_size < 1) throw ConfigError("run.batch_size must be >= 1");
  if (run.max_iterations < 0) throw ConfigError("run.max_iterations must be >= 0");
  if (run.log_every < 1) throw ConfigError("run.log_every must be >= 1");
  if (synthetic.min_duration <= 0.0 || synthetic.max_duration < synthetic.min_duration) {
    throw ConfigError("synthetic duration range invalid");
  }
}

Json RunConfig::to_json() const {
  Json t;
  t["run"] = {{"name", to_string(run.name)},
              {"seed", run.seed},
              {"max_iterations", run.max_iterations},
              {"batch_size", run.batch_size},
              {"log_every", run.log_every},
              {"checkpoint_every", run.checkpoint_every},
              {"eeg_pretrain_epochs", run.eeg_pretrain_epochs},
              {"pretrained_eeg", run.pretrained_eeg},
              {"pretrained_speech", run.pretrained_speech},
              {"pretrained_name_map", run.pretrained_name_map},
              {"temperature", run.temperature}};
  t["optimizer"] = {{"lr", optimizer.lr},       {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2}, {"eps", optimizer.eps},
                    {"weight_decay", optimizer.weight_decay},
                    {"lr_decay", optimizer.lr_decay}};
  t["loss"] = {{"mel", loss.mel}, {"kl", loss.kl}, {"adv", loss.adv},
               {"fm", loss.fm},   {"eeg", loss.eeg}};
  t["dsp"] = {{"eeg_fs", dsp.eeg_fs},
              {"notch_hz", dsp.notch_hz},
              {"notch_q", dsp.notch_q},
              {"band_lo", dsp.band_lo},
              {"band_hi", dsp.band_hi},
              {"filter_order", dsp.filter_order},
              {"audio_fs", dsp.stft.fs},
              {"fft_size", dsp.stft.fft_size},
              {"win_size", dsp.stft.win_size},
              {"hop_size", dsp.stft.hop_size},
              {"n_mels", dsp.mel.n_mels},
              {"fmin", dsp.mel.fmin},
              {"fmax", dsp.mel.fmax},
              {"log_floor", dsp.mel.log_floor}};
  t["eeg"] = {{"n_channels_in", eeg.n_channels_in},
              {"hidden_dim", eeg.hidden_dim},
              {"n_conv_blocks", eeg.n_conv_blocks},
              {"conv_strides", eeg.conv_strides},
              {"n_s4_layers", eeg.n_s4_layers},
              {"s4_state_dim", eeg.s4_state_dim},
              {"dropout", eeg.dropout},
              {"embed_dim", eeg.embed_dim},
              {"dt_min", eeg.dt_min},
              {"dt_max", eeg.dt_max}};
  t["speech"] = {{"latent_dim", speech.latent_dim},
                 {"posterior_hidden", speech.posterior_hidden},
                 {"posterior_kernel", speech.posterior_kernel},
                 {"posterior_dilation_rate", speech.posterior_dilation_rate},
                 {"posterior_layers", speech.posterior_layers},
                 {"generator_channels", speech.generator_channels},
                 {"upsample_rates", speech.upsample_rates},
                 {"upsample_kernels", speech.upsample_kernels},
                 {"resblock_kernels", speech.resblock_kernels},
                 {"resblock_dilations", speech.resblock_dilations},
                 {"mpd_periods", speech.mpd_periods},
                 {"mpd_channels", speech.mpd_channels},
                 {"msd_scales", speech.msd_scales},
                 {"msd_channels", speech.msd_channels},
                 {"segment_frames", speech.segment_frames}};
  t["connector"] = {{"prenet_hidden", connector.prenet_hidden},
                    {"prenet_layers", connector.prenet_layers},
                    {"prenet_heads", connector.prenet_heads},
                    {"prenet_ffn", connector.prenet_ffn},
                    {"prenet_ffn_kernel", connector.prenet_ffn_kernel},
                    {"prenet_dropout", connector.prenet_dropout},
                    {"flow_layers", connector.flow_layers},
                    {"flow_hidden", connector.flow_hidden},
                    {"flow_kernel", connector.flow_kernel},
                    {"flow_dilation_rate", connector.flow_dilation_rate},
                    {"flow_wavenet_layers", connector.flow_wavenet_layers}};
  t["data"] = {{"manifest", data.manifest},
               {"standardize", data.standardize},
               {"channel_subset", data.channel_subset},
               {"prefetch_workers", data.prefetch_workers}};
  t["synthetic"] = {{"n_subjects", synthetic.n_subjects},
                    {"n_stimuli", synthetic.n_stimuli},
                    {"eeg_channels", synthetic.eeg_channels},
                    {"min_duration", synthetic.min_duration},
                    {"max_duration", synthetic.max_duration},
                    {"seed", synthetic.seed},
                    {"held_out_subjects", synthetic.held_out_subjects},
                    {"held_out_stimuli", synthetic.held_out_stimuli}};
  t["eval"] = {{"n_mcc", eval.n_mcc}, {"phoneme_table", eval.phoneme_table},
               {"regions", eval.regions}};
  return t;
}

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(to_json().dump())); }

std::string RunConfig::architecture_hash(std::string_view module) const {
  const Json t = to_json();
  Json shape;
  if (module == "eeg") {
    shape = t["eeg"];
    shape.erase("dropout");
  } else if (module == "speech") {
    shape = t["speech"];
    shape.erase("segment_frames");
    shape["spec_bins"] = speech.spec_bins;
  } else if (module == "connector") {
    shape = t["connector"];
    shape.erase("prenet_dropout");
    shape["embed_dim"] = connector.embed_dim;
    shape["latent_dim"] = connector.latent_dim;
  } else {
    throw ConfigError("unknown module '" + std::string(module) + "'");
  }
  return hex64(fnv1a64(shape.dump()));
}

}  // namespace e2s
