#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "e2s/error.hpp"
#include "e2s/train/checkpoint.hpp"
#include "e2s/train/trainer.hpp"
#include "fixtures.hpp"

using namespace e2s;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  RunConfig cfg = testing::tiny_config();
  data::PairedDataset ds = testing::make_dataset(cfg, testing::small_corpus());
  data::Batch batch = ds.load_batch({0, 1});
};

std::set<std::string> changed(const std::map<std::string, torch::Tensor>& before,
                              torch::nn::Module& m) {
  std::set<std::string> out;
  for (const auto& p : m.named_parameters()) {
    if (!torch::equal(before.at(p.key()), p.value())) out.insert(p.key());
  }
  return out;
}

// Pretrained checkpoints for the PT-* configurations, made once per process.
const fs::path& pretrained_checkpoint() {
  static const fs::path path = [] {
    auto dir = testing::scratch_dir("pretrained");
    auto st = train::configure_run(testing::tiny_config(TrainingConfiguration::Vanilla, 99));
    train::save_checkpoint(st, dir / "vanilla.pt");
    return dir / "vanilla.pt";
  }();
  return path;
}

RunConfig config_for(TrainingConfiguration c, uint64_t seed = 1234) {
  auto cfg = testing::tiny_config(c, seed);
  if (c != TrainingConfiguration::Vanilla) cfg.run.pretrained_speech = pretrained_checkpoint().string();
  if (c == TrainingConfiguration::PtAudioEeg || c == TrainingConfiguration::PtAudioEegFz) {
    cfg.run.pretrained_eeg = pretrained_checkpoint().string();
  }
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("configure_run groups and pretrained checks") {
  auto v = train::configure_run(testing::tiny_config());
  CHECK(v.groups.eeg);
  CHECK(v.groups.speech);
  CHECK(v.groups.connector);
  CHECK(v.groups.discriminator);
  for (const auto& p : v.model->parameters()) CHECK(p.requires_grad());

  auto fz = train::configure_run(config_for(TrainingConfiguration::PtAudioFz));
  CHECK(fz.groups.eeg);
  CHECK(fz.groups.connector);
  CHECK_FALSE(fz.groups.speech);
  CHECK_FALSE(fz.groups.discriminator);
  CHECK(fz.opt_d == nullptr);

  auto both = train::configure_run(config_for(TrainingConfiguration::PtAudioEegFz));
  for (const auto& p : both.model->named_parameters()) {
    CHECK(p.value().requires_grad() == p.key().starts_with("connector."));
  }
  // loaded weights equal the checkpoint's
  auto [ref_cfg, ref] = train::load_model(pretrained_checkpoint());
  auto want = ref->named_parameters();
  for (const auto& p : both.model->named_parameters()) {
    if (p.key().starts_with("eeg.") || p.key().starts_with("speech.generator.")) {
      CHECK(torch::equal(p.value(), want[p.key()]));
    }
  }

  auto missing = testing::tiny_config(TrainingConfiguration::PtAudio);
  missing.run.pretrained_speech = "/no/such/dir/speech.pt";
  try {
    train::configure_run(missing);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/no/such/dir/speech.pt") != std::string::npos);
  }
  auto unset = testing::tiny_config(TrainingConfiguration::PtAudioEeg);
  unset.run.pretrained_speech = pretrained_checkpoint().string();
  CHECK_THROWS_AS(train::configure_run(unset), ConfigError);

  // architecture mismatch
  auto wide = config_for(TrainingConfiguration::PtAudio);
  wide.speech.generator_channels = 48;
  CHECK_THROWS_AS(train::configure_run(wide), ConfigError);
}

TEST_CASE("loss report keys and freezing over 10 steps") {
  Fixture f;
  for (auto c : all_training_configurations()) {
    CAPTURE(to_string(c));
    auto st = train::configure_run(config_for(c));
    const auto before = train::parameter_snapshot(*st.model);
    train::LossReport r;
    for (int i = 0; i < 10; ++i) r = train::train_step(st, f.batch);
    std::set<std::string> keys;
    for (const auto& [k, v] : r.terms()) {
      keys.insert(k);
      CHECK(std::isfinite(v));
    }
    CHECK(keys == std::set<std::string>{"L_EEG", "L_mel", "L_KL", "L_adv_g", "L_adv_d", "L_fm"});

    std::set<std::string> expect;
    for (const auto& p : st.model->named_parameters()) {
      if (st.groups.trainable(p.key())) expect.insert(p.key());
    }
    CHECK(changed(before, *st.model) == expect);
    CHECK(st.iteration == 10);
  }
}

TEST_CASE("gradient stop: EEG parameters see only the EEG loss") {
  Fixture f;
  auto off = testing::tiny_config();
  off.loss.eeg = 0.0;
  auto st = train::configure_run(off);
  const auto before = train::parameter_snapshot(*st.model);
  for (int i = 0; i < 10; ++i) train::train_step(st, f.batch);
  for (const auto& p : st.model->named_parameters()) {
    if (p.key().starts_with("eeg.")) CHECK(torch::equal(before.at(p.key()), p.value()));
  }

  auto combined = train::configure_run(testing::tiny_config());
  auto eeg_only = train::configure_run(testing::tiny_config());
  for (int i = 0; i < 10; ++i) {
    train::train_step(combined, f.batch);
    train::eeg_step(eeg_only, f.batch);
  }
  auto ref = eeg_only.model->named_parameters();
  for (const auto& p : combined.model->named_parameters()) {
    if (p.key().starts_with("eeg.")) CHECK(torch::equal(ref[p.key()], p.value()));
  }
}

TEST_CASE("200 steps on a fixed batch cut the generator loss") {
  Fixture f;
  std::vector<double> ratios;
  for (uint64_t seed : {1, 2, 3}) {
    auto st = train::configure_run(testing::tiny_config(TrainingConfiguration::Vanilla, seed));
    std::vector<double> totals;
    for (int i = 0; i < 200; ++i) totals.push_back(train::train_step(st, f.batch).total);
    const double head = (totals[0] + totals[1] + totals[2] + totals[3] + totals[4]) / 5.0;
    double tail = 0.0;
    for (int i = 195; i < 200; ++i) tail += totals[static_cast<std::size_t>(i)] / 5.0;
    ratios.push_back(tail / head);
  }
  std::sort(ratios.begin(), ratios.end());
  MESSAGE("final / initial total, median " << ratios[1]);
  CHECK(ratios[1] <= 0.7);
}

TEST_CASE("identical seeds give identical trajectories") {
  Fixture f;
  auto a = train::configure_run(testing::tiny_config());
  auto b = train::configure_run(testing::tiny_config());
  for (int i = 0; i < 20; ++i) {
    const auto ra = train::train_step(a, f.batch), rb = train::train_step(b, f.batch);
    CHECK(ra.terms() == rb.terms());
    CHECK(ra.total == rb.total);
  }
}

TEST_CASE("inference length, determinism and path independence") {
  Fixture f;
  auto st = train::configure_run(testing::tiny_config());
  for (int i = 0; i < 3; ++i) train::train_step(st, f.batch);
  const auto& x = f.ds.eeg(0);
  const auto y0 = train::infer_waveform(st.model, st.cfg, x, 0.0, 1);
  const auto y1 = train::infer_waveform(st.model, st.cfg, x, 0.0, 2);
  const auto frames = train::speech_frames_for_eeg(static_cast<int64_t>(x.n_timesteps()), st.cfg);
  CHECK(static_cast<int64_t>(y0.waveform.size()) == frames * 256);
  CHECK(frames == static_cast<int64_t>(f.ds.linear(0).n_frames()));
  CHECK(y0.waveform == y1.waveform);
  CHECK(y0.fs == 22050.0);
  const auto warm = train::infer_waveform(st.model, st.cfg, x, 0.667, 1);
  CHECK(warm.waveform != y0.waveform);
  CHECK(warm.waveform == train::infer_waveform(st.model, st.cfg, x, 0.667, 1).waveform);
  for (double v : warm.waveform) CHECK(std::abs(v) <= 1.0);

  auto bad = x;
  bad.fs = 512.0;
  CHECK_THROWS_AS(train::infer_waveform(st.model, st.cfg, bad, 0.0), InvalidInput);

  // training modes are restored
  CHECK(st.model->eeg->is_training());

  st.model->speech->drop_posterior();
  CHECK(train::infer_waveform(st.model, st.cfg, x, 0.0, 1).waveform == y0.waveform);
}

TEST_CASE("checkpoint round trip and bitwise resume") {
  Fixture f;
  const auto dir = testing::scratch_dir("ckpt");
  auto st = train::configure_run(testing::tiny_config());
  for (int i = 0; i < 5; ++i) train::train_step(st, f.batch);
  train::save_checkpoint(st, dir / "c.pt");
  const auto before = train::infer_waveform(st.model, st.cfg, f.ds.eeg(2), 0.0);

  auto [cfg2, model2] = train::load_model(dir / "c.pt");
  CHECK(cfg2.hash() == st.cfg.hash());
  CHECK(train::infer_waveform(model2, cfg2, f.ds.eeg(2), 0.0).waveform == before.waveform);
  CHECK(train::checkpoint_config(dir / "c.pt") == st.cfg.to_json());

  auto resumed = train::configure_run(testing::tiny_config());
  train::load_checkpoint(resumed, dir / "c.pt");
  CHECK(resumed.iteration == 5);
  for (int i = 0; i < 5; ++i) {
    const auto a = train::train_step(st, f.batch);
    const auto b = train::train_step(resumed, f.batch);
    CHECK(a.terms() == b.terms());
  }

  auto other = testing::tiny_config();
  other.connector.flow_hidden = 16;
  auto mismatched = train::configure_run(other);
  CHECK_THROWS_AS(train::load_checkpoint(mismatched, dir / "c.pt"), ConfigError);
  CHECK_THROWS_AS(train::load_model(dir / "nothing.pt"), DataError);
}

TEST_CASE("EEG pretraining lowers the reconstruction loss") {
  Fixture f;
  const auto dir = testing::scratch_dir("pretrain");
  auto st = train::configure_run(testing::tiny_config());
  const auto idx = testing::first_n(8);
  const double initial = train::evaluate_eeg_loss(st, f.ds, idx);
  train::LoopOptions opt;
  opt.run_dir = dir;
  const auto epochs = train::pretrain_eeg(st, f.ds, idx, 8, opt);
  CHECK(epochs.size() == 8);
  const double after = train::evaluate_eeg_loss(st, f.ds, idx);
  MESSAGE("L_EEG " << initial << " -> " << after);
  CHECK(after < initial);
  CHECK(fs::exists(dir / "checkpoint.pt"));
  CHECK(fs::exists(dir / "pretrain_log.jsonl"));
}

TEST_CASE("PT-AUDIO-EEG keeps the loaded EEG module frozen") {
  Fixture f;
  auto st = train::configure_run(config_for(TrainingConfiguration::PtAudioEeg));
  auto [ref_cfg, ref] = train::load_model(pretrained_checkpoint());
  auto want = ref->named_parameters();
  for (int i = 0; i < 5; ++i) train::train_step(st, f.batch);
  for (const auto& p : st.model->named_parameters()) {
    if (p.key().starts_with("eeg.")) CHECK(torch::equal(p.value(), want[p.key()]));
  }
  CHECK_FALSE(st.model->eeg->is_training());
}

TEST_CASE("non-finite losses abort before any update") {
  Fixture f;
  auto st = train::configure_run(testing::tiny_config());
  const auto before = train::parameter_snapshot(*st.model);
  auto b = f.batch;
  b.eeg = b.eeg.clone();
  b.eeg[0][0][3] = std::numeric_limits<float>::quiet_NaN();
  try {
    train::train_step(st, b);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("L_EEG") != std::string::npos);
  }
  CHECK(changed(before, *st.model).empty());
  CHECK(st.iteration == 0);
}

TEST_CASE("training loop writes its log and checkpoints") {
  Fixture f;
  const auto dir = testing::scratch_dir("loop");
  auto cfg = testing::tiny_config();
  cfg.run.max_iterations = 6;
  cfg.run.log_every = 2;
  cfg.run.checkpoint_every = 3;
  auto st = train::configure_run(cfg);
  train::LoopOptions opt;
  opt.run_dir = dir;
  int calls = 0;
  opt.on_log = [&](const train::TrainLogRecord&) { ++calls; };
  const auto reports = train::run_training(st, f.ds, testing::first_n(4), opt);
  CHECK(reports.size() == 6);
  CHECK(calls == 3);
  std::ifstream in(dir / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = Json::parse(line);
    for (const char* k : {"iteration", "L_EEG", "L_mel", "L_KL", "L_adv_g", "L_adv_d", "L_fm", "total", "lr",
                          "wall_time"}) {
      CHECK(j.contains(k));
    }
    ++lines;
  }
  CHECK(lines == 3);
  CHECK(fs::exists(dir / "checkpoint_3.pt"));
  CHECK(fs::exists(dir / "checkpoint_6.pt"));
  CHECK(fs::exists(dir / "checkpoint.pt"));
  CHECK(st.learning_rate() == doctest::Approx(cfg.optimizer.lr * std::pow(cfg.optimizer.lr_decay, 6)));
}

}  // TEST_SUITE
