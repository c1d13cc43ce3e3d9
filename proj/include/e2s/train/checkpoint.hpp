#pragma once

// Flat torch archive: parameters and buffers (names with '.' stored as
// "__"), optimizer states, iteration, the effective config with its hash and
// per-module architecture hashes, and RNG states.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "e2s/config.hpp"
#include "e2s/train/trainer.hpp"

namespace e2s::train {

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

// Full resume into a state built from a compatible config. Throws
// ConfigError when an architecture hash differs, DataError on I/O failure.
void load_checkpoint(TrainState& state, const std::filesystem::path& path);

// Config stored in a checkpoint.
Json checkpoint_config(const std::filesystem::path& path);

// Builds a model from the checkpoint's own config and loads its weights.
std::pair<RunConfig, Model> load_model(const std::filesystem::path& path);

// Copies the parameters whose names start with one of the prefixes. With a
// name map (JSON object, archive name -> model name) the archive may come
// from elsewhere and no architecture hash is checked; otherwise the hash of
// each touched module must match cfg. Returns the number of tensors loaded.
std::size_t load_pretrained(Model& model, const RunConfig& cfg, const std::filesystem::path& path,
                            const std::vector<std::string>& prefixes,
                            const std::filesystem::path& name_map = {});

}  // namespace e2s::train
