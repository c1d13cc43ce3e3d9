#pragma once

#include <torch/torch.h>

#include <map>
#include <string>
#include <vector>

#include "e2s/config.hpp"
#include "e2s/nn/connector.hpp"
#include "e2s/nn/eeg_module.hpp"
#include "e2s/nn/speech_module.hpp"

namespace e2s::train {

class SpeechModelImpl : public torch::nn::Module {
 public:
  explicit SpeechModelImpl(const nn::SpeechConfig& cfg);

  // Removes the posterior encoder; inference does not need it.
  void drop_posterior();

  nn::PosteriorEncoder posterior{nullptr};
  nn::Generator generator{nullptr};
  nn::DiscriminatorEnsemble discriminator{nullptr};
};
TORCH_MODULE(SpeechModel);

// Parameter names: eeg.*, speech.posterior.*, speech.generator.*,
// speech.discriminator.*, connector.prenet.*, connector.flow.*
class ModelImpl : public torch::nn::Module {
 public:
  explicit ModelImpl(const RunConfig& cfg);

  nn::EegAutoencoder eeg{nullptr};
  SpeechModel speech{nullptr};
  nn::Connector connector{nullptr};
  nn::MelTransform mel{nullptr};
};
TORCH_MODULE(Model);

enum class Group { Eeg, Speech, Discriminator, Connector };

const std::vector<Group>& all_groups();
std::string to_string(Group g);
// Parameter-name prefixes belonging to a group.
std::vector<std::string> group_prefixes(Group g);
bool in_group(const std::string& param_name, Group g);

// Which parameter groups receive updates, and whether the adversarial
// losses take part.
struct TrainableGroups {
  bool eeg = true;
  bool speech = true;
  bool discriminator = true;
  bool connector = true;

  bool gan() const { return discriminator; }
  bool contains(Group g) const;
  bool trainable(const std::string& param_name) const;

  static TrainableGroups for_configuration(TrainingConfiguration c);
};

// Deep copy of every parameter, keyed by name.
std::map<std::string, torch::Tensor> parameter_snapshot(torch::nn::Module& m);

// FNV-1a over the raw bytes of the parameters of one group, in name order.
std::string group_hash(torch::nn::Module& m, Group g);

}  // namespace e2s::train
