#pragma once

// Shared test fixtures: a small model configuration and a cached synthetic
// corpus, so training tests stay within their time budgets.

#include <filesystem>
#include <string>
#include <vector>

#include "e2s/config.hpp"
#include "e2s/data/dataset.hpp"
#include "e2s/data/manifest.hpp"

namespace e2s::testing {

// Small enough that a combined train step takes a fraction of a second on
// one core, with the same topology as the default model.
RunConfig tiny_config(TrainingConfiguration name = TrainingConfiguration::Vanilla,
                      uint64_t seed = 1234);

// Fresh scratch directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

// 2 subjects x 4 stimuli of 1-1.5 s, generated once per process.
const data::Manifest& small_corpus();

data::PairedDataset make_dataset(const RunConfig& cfg, const data::Manifest& m);

std::vector<std::size_t> first_n(std::size_t n);

}  // namespace e2s::testing
