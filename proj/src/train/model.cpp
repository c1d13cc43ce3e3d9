#include "e2s/train/model.hpp"

namespace e2s::train {

SpeechModelImpl::SpeechModelImpl(const nn::SpeechConfig& cfg) {
  posterior = register_module("posterior", nn::PosteriorEncoder(cfg));
  generator = register_module("generator", nn::Generator(cfg));
  discriminator = register_module("discriminator", nn::DiscriminatorEnsemble(cfg));
}

void SpeechModelImpl::drop_posterior() {
  if (!posterior) return;
  unregister_module("posterior");
  posterior = nullptr;
}

ModelImpl::ModelImpl(const RunConfig& cfg) {
  eeg = register_module("eeg", nn::EegAutoencoder(cfg.eeg));
  speech = register_module("speech", SpeechModel(cfg.speech));
  connector = register_module("connector", nn::Connector(cfg.connector));
  mel = register_module("mel", nn::MelTransform(cfg.dsp.stft, cfg.dsp.mel));
}

const std::vector<Group>& all_groups() {
  static const std::vector<Group> g{Group::Eeg, Group::Speech, Group::Discriminator,
                                    Group::Connector};
  return g;
}

std::string to_string(Group g) {
  switch (g) {
    case Group::Eeg: return "eeg";
    case Group::Speech: return "speech";
    case Group::Discriminator: return "discriminator";
    case Group::Connector: return "connector";
  }
  return "?";
}

std::vector<std::string> group_prefixes(Group g) {
  switch (g) {
    case Group::Eeg: return {"eeg."};
    case Group::Speech: return {"speech.posterior.", "speech.generator."};
    case Group::Discriminator: return {"speech.discriminator."};
    case Group::Connector: return {"connector."};
  }
  return {};
}

bool in_group(const std::string& name, Group g) {
  for (const auto& p : group_prefixes(g)) {
    if (name.starts_with(p)) return true;
  }
  return false;
}

bool TrainableGroups::contains(Group g) const {
  switch (g) {
    case Group::Eeg: return eeg;
    case Group::Speech: return speech;
    case Group::Discriminator: return discriminator;
    case Group::Connector: return connector;
  }
  return false;
}

bool TrainableGroups::trainable(const std::string& name) const {
  for (auto g : all_groups()) {
    if (in_group(name, g)) return contains(g);
  }
  return false;
}

TrainableGroups TrainableGroups::for_configuration(TrainingConfiguration c) {
  TrainableGroups t;
  switch (c) {
    case TrainingConfiguration::Vanilla:
    case TrainingConfiguration::PtAudio:
      break;
    case TrainingConfiguration::PtAudioFz:
      t.speech = false;
      break;
    case TrainingConfiguration::PtAudioEeg:
      t.eeg = false;
      break;
    case TrainingConfiguration::PtAudioEegFz:
      t.eeg = false;
      t.speech = false;
      break;
  }
  // The discriminator only matters while the generator learns.
  t.discriminator = t.speech;
  return t;
}

std::map<std::string, torch::Tensor> parameter_snapshot(torch::nn::Module& m) {
  std::map<std::string, torch::Tensor> out;
  torch::NoGradGuard no_grad;
  for (const auto& p : m.named_parameters()) out[p.key()] = p.value().detach().clone();
  return out;
}

std::string group_hash(torch::nn::Module& m, Group g) {
  std::map<std::string, torch::Tensor> selected;
  for (const auto& p : m.named_parameters()) {
    if (in_group(p.key(), g)) selected[p.key()] = p.value().detach().contiguous();
  }
  uint64_t h = fnv1a64("");
  for (const auto& [name, t] : selected) {
    const std::string_view bytes(static_cast<const char*>(t.data_ptr()),
                                 static_cast<std::size_t>(t.numel() * t.element_size()));
    h ^= fnv1a64(name) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= fnv1a64(bytes) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return hex64(h);
}

}  // namespace e2s::train
