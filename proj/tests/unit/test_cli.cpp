#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "e2s/cli.hpp"
#include "e2s/config.hpp"
#include "fixtures.hpp"

using namespace e2s;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result e2s_run(std::vector<std::string> args) {
  args.insert(args.begin(), "e2s");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

// tiny model and a small synthetic corpus, shared by the cases below
struct Workspace {
  fs::path root, config, manifest, train_dir;
};

const Workspace& workspace() {
  static const Workspace w = [] {
    Workspace w;
    w.root = testing::scratch_dir("cli");
    w.config = w.root / "tiny.json";
    auto tree = testing::tiny_config().to_json();
    tree["synthetic"]["n_subjects"] = 3;
    tree["synthetic"]["n_stimuli"] = 6;
    tree["synthetic"]["eeg_channels"] = 8;
    tree["synthetic"]["held_out_subjects"] = 1;
    tree["synthetic"]["held_out_stimuli"] = 2;
    tree["synthetic"]["max_duration"] = 1.2;
    tree["run"]["max_iterations"] = 4;
    tree["run"]["log_every"] = 2;
    tree["run"]["checkpoint_every"] = 2;
    std::ofstream(w.config) << tree.dump(2);
    auto r = e2s_run({"synth-data", "--config", w.config.string(), "--out", (w.root / "corpus").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    w.manifest = w.root / "corpus" / "manifest.csv";
    w.train_dir = w.root / "train";
    r = e2s_run({"train", "--config", w.config.string(), "--manifest", w.manifest.string(), "--run-dir",
                 w.train_dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    return w;
  }();
  return w;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("train writes logs, checkpoints and the effective config") {
  const auto& w = workspace();
  CHECK(fs::exists(w.manifest));
  CHECK(fs::exists(w.train_dir / "checkpoint.pt"));
  CHECK(fs::exists(w.train_dir / "checkpoint_2.pt"));
  const auto cfg = read_json(w.train_dir / "config.json");
  CHECK(cfg["run"]["max_iterations"] == 4);
  CHECK(cfg["eeg"]["n_channels_in"] == 8);
  std::ifstream log(w.train_dir / "train_log.jsonl");
  int lines = 0;
  for (std::string l; std::getline(log, l);) lines += !l.empty();
  CHECK(lines == 2);
}

TEST_CASE("evaluate reports the three held-out splits") {
  const auto& w = workspace();
  const auto dir = w.root / "eval";
  auto r = e2s_run({"evaluate", "--checkpoint", (w.train_dir / "checkpoint.pt").string(), "--manifest",
                    w.manifest.string(), "--run-dir", dir.string(), "--temperature", "0"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = read_json(dir / "metrics.json");
  REQUIRE(j["reports"].size() == 3);
  CHECK(j["reports"][0]["split"] == "unseen-audio");
  CHECK(j["reports"][1]["split"] == "unseen-subject");
  CHECK(j["reports"][2]["split"] == "unseen-both");
  for (const auto& rep : j["reports"]) CHECK(rep["mcd_db"]["mean"].get<double>() > 0.0);
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "metrics_utterances.csv"));
}

TEST_CASE("inference at zero temperature is reproducible and self-evaluation is perfect") {
  const auto& w = workspace();
  std::vector<std::string> bytes;
  for (int k = 0; k < 2; ++k) {
    const auto dir = w.root / ("infer" + std::to_string(k));
    auto r = e2s_run({"infer", "--checkpoint", (w.train_dir / "checkpoint.pt").string(), "--manifest",
                      w.manifest.string(), "--split", "unseen-both", "--temperature", "0", "--seed",
                      std::to_string(10 + k), "--run-dir", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::string all;
    for (const auto& e : fs::directory_iterator(dir / "wav")) all += slurp(e.path());
    CHECK(!all.empty());
    bytes.push_back(all);
  }
  CHECK(bytes[0] == bytes[1]);

  fs::path wav;
  for (const auto& e : fs::directory_iterator(w.root / "infer0" / "wav")) wav = e.path();
  const auto dir = w.root / "self";
  auto r = e2s_run({"evaluate", "--ref", wav.string(), "--gen", wav.string(), "--run-dir", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = read_json(dir / "metrics.json");
  CHECK(j["reports"][0]["mcd_db"]["mean"].get<double>() == 0.0);
  CHECK(j["reports"][0]["mel_corr_percent"]["mean"].get<double>() == doctest::Approx(100.0));
}

TEST_CASE("phoneme report and word spotting run end to end") {
  const auto& w = workspace();
  const auto ckpt = (w.train_dir / "checkpoint.pt").string();
  auto r = e2s_run({"phoneme-report", "--checkpoint", ckpt, "--manifest", w.manifest.string(), "--splits",
                    "unseen-audio", "--run-dir", (w.root / "phon").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(w.root / "phon" / "phoneme_report.csv"));
  CHECK(fs::exists(w.root / "phon" / "phoneme_groups.svg"));
  r = e2s_run({"wordspot", "--checkpoint", ckpt, "--manifest", w.manifest.string(), "--keywords", "3",
               "--run-dir", (w.root / "ws").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(read_json(w.root / "ws" / "wordspot.json").contains("splits"));
  r = e2s_run({"plot", "--log", (w.train_dir / "train_log.jsonl").string(), "--run-dir",
               (w.root / "plot").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(w.root / "plot" / "losses.svg"));
}

TEST_CASE("exit codes") {
  const auto dir = testing::scratch_dir("cli_codes");
  CHECK(e2s_run({"train", "--set", "optimizer.bogus=1", "--run-dir", dir.string()}).code == 2);
  CHECK(e2s_run({"train", "--config", "no-such-preset", "--run-dir", dir.string()}).code == 2);
  CHECK(e2s_run({"train", "--manifest", (dir / "missing.csv").string(), "--run-dir", dir.string()}).code == 3);
  CHECK(e2s_run({"infer", "--checkpoint", (dir / "missing.pt").string(), "--run-dir", dir.string()}).code == 3);
  CHECK(e2s_run({"frobnicate"}).code == 2);
  CHECK(e2s_run({"--help"}).code == 0);
}

TEST_CASE("installed binary") {
  const auto out = testing::scratch_dir("cli_bin") / "help.txt";
  const std::string cmd = std::string("\"") + E2S_CLI_BINARY + "\" --help > \"" + out.string() + "\" 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(slurp(out).find("synth-data") != std::string::npos);
  const std::string bad = std::string("\"") + E2S_CLI_BINARY + "\" train --set x.y=1 > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  CHECK(WEXITSTATUS(status) == 2);
}

}  // TEST_SUITE
