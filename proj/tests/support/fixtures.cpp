#include "fixtures.hpp"

#include <numeric>

#include <unistd.h>

#include "e2s/data/synthetic.hpp"

#ifndef E2S_TEST_SCRATCH
#define E2S_TEST_SCRATCH "/tmp/e2s_tests"
#endif

namespace e2s::testing {

RunConfig tiny_config(TrainingConfiguration name, uint64_t seed) {
  auto tree = default_config_tree();
  tree["run"]["name"] = to_string(name);
  tree["run"]["seed"] = seed;
  tree["run"]["batch_size"] = 2;
  tree["eeg"]["hidden_dim"] = 32;
  tree["eeg"]["embed_dim"] = 16;
  tree["eeg"]["s4_state_dim"] = 16;
  tree["speech"]["latent_dim"] = 16;
  tree["speech"]["posterior_hidden"] = 32;
  tree["speech"]["posterior_layers"] = 2;
  tree["speech"]["generator_channels"] = 32;
  tree["speech"]["upsample_rates"] = {8, 8, 4};
  tree["speech"]["upsample_kernels"] = {16, 16, 8};
  tree["speech"]["resblock_kernels"] = {3};
  tree["speech"]["resblock_dilations"] = Json::array({Json::array({1, 3})});
  tree["speech"]["mpd_periods"] = {2, 3};
  tree["speech"]["mpd_channels"] = {8, 16};
  tree["speech"]["msd_channels"] = {8, 16};
  tree["speech"]["segment_frames"] = 16;
  tree["connector"]["prenet_hidden"] = 32;
  tree["connector"]["prenet_layers"] = 1;
  tree["connector"]["prenet_ffn"] = 64;
  tree["connector"]["flow_layers"] = 2;
  tree["connector"]["flow_hidden"] = 32;
  tree["connector"]["flow_wavenet_layers"] = 2;
  return RunConfig::from_json(tree);
}

namespace {

// One root per process so suites can run side by side under ctest -j.
const std::filesystem::path& scratch_root() {
  // never destroyed, the atexit hook still needs it
  static const auto* root = [] {
    auto* r = new std::filesystem::path(std::filesystem::path(E2S_TEST_SCRATCH) /
                                        ("p" + std::to_string(::getpid())));
    std::filesystem::remove_all(*r);
    std::atexit([] {
      std::error_code ec;
      std::filesystem::remove_all(scratch_root(), ec);
    });
    return r;
  }();
  return *root;
}

}  // namespace

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = scratch_root() / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

const data::Manifest& small_corpus() {
  static const data::Manifest m = [] {
    data::SyntheticSpec spec;
    spec.n_subjects = 2;
    spec.n_stimuli = 4;
    spec.min_duration = 1.0;
    spec.max_duration = 1.5;
    spec.held_out_subjects = 0;
    spec.held_out_stimuli = 0;
    auto lex = data::read_lexicon(data::default_lexicon_path());
    return data::generate_synthetic(spec, scratch_dir("small_corpus"), lex).manifest;
  }();
  return m;
}

data::PairedDataset make_dataset(const RunConfig& cfg, const data::Manifest& m) {
  data::DatasetOptions opt;
  opt.dsp = cfg.dsp;
  opt.standardize = cfg.data.standardize;
  return data::PairedDataset(m, opt);
}

std::vector<std::size_t> first_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace e2s::testing
