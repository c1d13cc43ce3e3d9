#include <doctest.h>

#include <fstream>
#include <iterator>
#include <map>

#include "e2s/data/dataset.hpp"
#include "e2s/data/manifest.hpp"
#include "e2s/data/synthetic.hpp"
#include "e2s/data/textgrid.hpp"
#include "e2s/dsp/io.hpp"
#include "e2s/error.hpp"
#include "e2s/nn/connector.hpp"
#include "e2s/nn/eeg_module.hpp"
#include "fixtures.hpp"

using namespace e2s;
namespace fs = std::filesystem;

namespace {

data::Manifest grid(int subjects, int stimuli) {
  data::Manifest m;
  for (int s = 0; s < subjects; ++s) {
    for (int k = 0; k < stimuli; ++k) {
      data::ManifestRow r;
      r.subject_id = "S" + std::to_string(s);
      r.stimulus_id = "T" + std::to_string(k);
      r.eeg_path = "eeg/" + r.subject_id + r.stimulus_id + ".f32";
      r.audio_path = "audio/" + r.stimulus_id + ".wav";
      m.rows.push_back(r);
    }
  }
  return m;
}

std::map<data::Split, std::size_t> counts(const data::Manifest& m) {
  std::map<data::Split, std::size_t> c;
  for (const auto& r : m.rows) ++c[r.split];
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

data::SyntheticCorpus tiny_synthetic(const fs::path& dir, uint64_t seed = 7) {
  data::SyntheticSpec spec;
  spec.n_subjects = 2;
  spec.n_stimuli = 3;
  spec.eeg_channels = 6;
  spec.seed = seed;
  spec.held_out_subjects = 0;
  spec.held_out_stimuli = 0;
  return data::generate_synthetic(spec, dir, data::read_lexicon(data::default_lexicon_path()));
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("split sizes for the reference design") {
  auto m = grid(20, 440);
  std::set<std::string> subj{"S18", "S19"}, stim;
  for (int k = 400; k < 440; ++k) stim.insert("T" + std::to_string(k));
  const auto s = data::build_splits(m, subj, stim);
  auto c = counts(s);
  CHECK(c[data::Split::Train] == 7200);
  CHECK(c[data::Split::UnseenAudio] == 720);
  CHECK(c[data::Split::UnseenSubject] == 800);
  CHECK(c[data::Split::UnseenBoth] == 80);
  CHECK(s.rows.size() == m.rows.size());
  for (const auto& r : s.rows) {
    const bool hs = subj.contains(r.subject_id), hk = stim.contains(r.stimulus_id);
    const auto want = hs ? (hk ? data::Split::UnseenBoth : data::Split::UnseenSubject)
                         : (hk ? data::Split::UnseenAudio : data::Split::Train);
    CHECK(r.split == want);
  }
  std::size_t total = 0;
  for (auto sp : {data::Split::Train, data::Split::UnseenAudio, data::Split::UnseenSubject,
                  data::Split::UnseenBoth}) {
    total += s.indices(sp).size();
  }
  CHECK(total == m.rows.size());
}

TEST_CASE("small and empty hold-outs") {
  auto none = data::build_splits(grid(3, 5), {}, {});
  CHECK(counts(none)[data::Split::Train] == 15);

  auto c = counts(data::build_splits(grid(2, 2), {"S1"}, {"T1"}));
  CHECK(c[data::Split::Train] == 1);
  CHECK(c[data::Split::UnseenAudio] == 1);
  CHECK(c[data::Split::UnseenSubject] == 1);
  CHECK(c[data::Split::UnseenBoth] == 1);

  CHECK_THROWS_AS(data::build_splits(grid(2, 2), {"S7"}, {}), InvalidSplit);
  CHECK_THROWS_AS(data::build_splits(grid(2, 2), {"S0", "S1"}, {}), InvalidSplit);
  CHECK_THROWS_AS(data::build_splits(grid(2, 2), {}, {"T0", "T1"}), InvalidSplit);
}

TEST_CASE("manifest round trip and validation") {
  const auto dir = testing::scratch_dir("manifest");
  auto m = data::build_splits(grid(2, 2), {"S1"}, {"T1"});
  m.rows[0].transcript = "a \"quoted\", comma";
  m.rows[1].onset = 0.25;
  data::write_manifest(m, dir / "manifest.csv");
  const auto back = data::read_manifest(dir / "manifest.csv");
  REQUIRE(back.rows.size() == m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    CHECK(back.rows[i].id() == m.rows[i].id());
    CHECK(back.rows[i].split == m.rows[i].split);
    CHECK(back.rows[i].transcript == m.rows[i].transcript);
  }
  CHECK(back.rows[1].onset == doctest::Approx(0.25));
  CHECK(back.resolve("eeg/x.f32") == dir / "eeg/x.f32");
  CHECK_THROWS_AS(back.validate(true), DataError);

  auto dup = m;
  dup.rows.push_back(dup.rows[0]);
  CHECK_THROWS_AS(dup.validate(false), DataError);
  CHECK_THROWS_AS(data::read_manifest(dir / "missing.csv"), DataError);
}

TEST_CASE("synthetic corpus is deterministic and consistent") {
  const auto a = tiny_synthetic(testing::scratch_dir("synth_a"));
  const auto b = tiny_synthetic(testing::scratch_dir("synth_b"));
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.manifest.base_dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.manifest.base_dir);
    if (rel == "manifest.csv") continue;  // holds absolute-free relative paths, checked below
    CHECK(slurp(e.path()) == slurp(b.manifest.base_dir / rel));
    ++files;
  }
  CHECK(files > 10);
  CHECK(slurp(a.manifest_path) == slurp(b.manifest_path));
  const auto c = tiny_synthetic(testing::scratch_dir("synth_c"), 8);
  CHECK(slurp(a.manifest.base_dir / "eeg" / "S01_stim001.f32") !=
        slurp(c.manifest.base_dir / "eeg" / "S01_stim001.f32"));

  for (const auto& row : a.manifest.rows) {
    const auto eeg = dsp::read_eeg(a.manifest.resolve(row.eeg_path));
    const auto wav = dsp::read_wav(a.manifest.resolve(row.audio_path));
    CHECK_NOTHROW(eeg.validate());
    CHECK_NOTHROW(wav.validate());
    const double expected = static_cast<double>(wav.waveform.size()) * 256.0 / 22050.0;
    CHECK(std::abs(static_cast<double>(eeg.n_timesteps()) - expected) <= 1.0);

    const auto env = data::audio_envelope(wav.waveform, 22050.0, 256.0, eeg.n_timesteps());
    const auto lags = a.truth["subjects"][row.subject_id]["lag_samples"].get<std::vector<int>>();
    for (std::size_t ch = 0; ch < eeg.n_channels(); ++ch) {
      const auto lag = static_cast<std::size_t>(lags[ch]);
      std::vector<double> x, e;
      for (std::size_t t = lag; t < eeg.n_timesteps(); ++t) {
        x.push_back(eeg.samples(ch, t));
        e.push_back(env[t - lag]);
      }
      CHECK(pearson(x, e) > 0.3);
    }
    const auto tg = data::read_textgrid(a.manifest.resolve(row.alignment_path));
    CHECK_NOTHROW(data::phone_alignment(tg).validate());
  }
}

TEST_CASE("batches pad to the longest item with exact masks") {
  auto cfg = testing::tiny_config();
  auto ds = testing::make_dataset(cfg, testing::small_corpus());
  auto one = ds.load_batch({0});
  CHECK(one.eeg_mask().sum().item<int64_t>() == one.eeg.size(2));
  CHECK(one.spec_mask().sum().item<int64_t>() == one.spec.size(2));
  CHECK(one.spec.size(1) == 513);
  CHECK(one.wave.size(2) == one.spec.size(2) * 256);

  // find two items of different length
  std::size_t i = 0, j = 1;
  while (j < ds.size() && ds.eeg(j).n_timesteps() == ds.eeg(i).n_timesteps()) ++j;
  REQUIRE(j < ds.size());
  auto b = ds.load_batch({i, j});
  const auto l1 = static_cast<int64_t>(ds.eeg(i).n_timesteps());
  const auto l2 = static_cast<int64_t>(ds.eeg(j).n_timesteps());
  CHECK(b.eeg.size(2) == std::max(l1, l2));
  auto sums = b.eeg_mask().sum({1, 2});
  CHECK(sums[0].item<int64_t>() == l1);
  CHECK(sums[1].item<int64_t>() == l2);
  CHECK(b.spec_lengths[0].item<int64_t>() ==
        static_cast<int64_t>(ds.linear(i).n_frames()));
  // padding is zero
  const auto shorter = l1 < l2 ? 0 : 1;
  CHECK(b.eeg[shorter].narrow(1, std::min(l1, l2), std::abs(l1 - l2)).abs().max().item<double>() == 0.0);
}

TEST_CASE("masked losses equal the mean of per-item losses") {
  auto cfg = testing::tiny_config();
  auto ds = testing::make_dataset(cfg, testing::small_corpus());
  std::size_t j = 1;
  while (ds.eeg(j).n_timesteps() == ds.eeg(0).n_timesteps()) ++j;
  auto b = ds.load_batch({0, j});
  torch::manual_seed(1);
  auto x_hat = torch::randn_like(b.eeg);
  const double batched = nn::eeg_cosine_loss(b.eeg, x_hat, b.eeg_lengths).item<double>();
  double per_item = 0.0;
  for (int64_t k = 0; k < 2; ++k) {
    const auto l = b.eeg_lengths[k].item<int64_t>();
    per_item += 0.5 * nn::eeg_cosine_loss(b.eeg.narrow(0, k, 1).narrow(2, 0, l),
                                          x_hat.narrow(0, k, 1).narrow(2, 0, l),
                                          torch::full({1}, l, torch::kLong))
                          .item<double>();
  }
  CHECK(std::abs(batched - per_item) < 1e-5);

  // KL on a padded batch with garbage past the valid frames
  nn::ConnectorConfig cc;
  cc.embed_dim = cc.latent_dim = 4;
  cc.flow_layers = 2;
  cc.flow_hidden = 8;
  cc.flow_wavenet_layers = 1;
  nn::Flow flow(cc);
  {
    torch::NoGradGuard g;
    for (auto& p : flow->parameters()) p.copy_(torch::randn_like(p) * 0.2);
  }
  auto mask = torch::ones({2, 1, 10});
  mask[0].narrow(1, 6, 4).zero_();
  auto make_q = [](torch::Tensor mean, torch::Tensor ls, torch::Tensor eps, torch::Tensor m) {
    nn::GaussianLatent q{mean, ls, (mean + ls.exp() * eps) * m, eps, m};
    return q;
  };
  auto mean = torch::randn({2, 4, 10}), ls = torch::randn({2, 4, 10}) * 0.2, eps = torch::randn({2, 4, 10});
  nn::PriorSequence p{torch::randn({2, 4, 10}), torch::randn({2, 4, 10}) * 0.2, mask};
  const double kl_batch = nn::kl_loss(make_q(mean, ls, eps, mask), p, flow).item<double>();
  double kl_items = 0.0;
  for (int64_t k = 0; k < 2; ++k) {
    const int64_t t = k == 0 ? 6 : 10;
    auto sl = [&](const torch::Tensor& x) { return x.narrow(0, k, 1).narrow(2, 0, t); };
    nn::PriorSequence pk{sl(p.mean), sl(p.log_scale), torch::ones({1, 1, t})};
    kl_items += 0.5 * nn::kl_loss(make_q(sl(mean), sl(ls), sl(eps), torch::ones({1, 1, t})), pk, flow)
                          .item<double>();
  }
  CHECK(std::abs(kl_batch - kl_items) < 1e-5);
}

TEST_CASE("batch sampler order depends only on the seed") {
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6};
  data::BatchSampler a(idx, 3, 11), b(idx, 3, 11), c(idx, 3, 12);
  std::vector<std::size_t> sa, sb, sc;
  for (int i = 0; i < 10; ++i) {
    for (auto v : a.next()) sa.push_back(v);
    for (auto v : b.next()) sb.push_back(v);
    for (auto v : c.next()) sc.push_back(v);
  }
  CHECK(sa == sb);
  CHECK(sa != sc);

  data::BatchSampler d(idx, 3, 11);
  for (int i = 0; i < 4; ++i) d.next();
  const auto saved = d.state();
  const auto expect = d.next();
  data::BatchSampler e(idx, 3, 99);
  e.restore(saved);
  CHECK(e.next() == expect);
}

TEST_CASE("corrupt files abort the batch naming the row") {
  const auto dir = testing::scratch_dir("corrupt");
  auto corpus = tiny_synthetic(dir / "c");
  auto m = corpus.manifest;
  const auto bad = m.resolve(m.rows[1].eeg_path);
  fs::resize_file(bad, 7);
  auto cfg = testing::tiny_config();
  cfg.eeg.n_channels_in = 6;
  auto ds = testing::make_dataset(cfg, m);
  try {
    ds.load_batch({0, 1});
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(m.rows[1].id()) != std::string::npos);
  }
}

TEST_CASE("TextGrid long and short formats") {
  const std::string long_form = R"(File type = "ooTextFile"
Object class = "TextGrid"

xmin = 0
xmax = 1.0
tiers? <exists>
size = 2
item []:
    item [1]:
        class = "IntervalTier"
        name = "words"
        xmin = 0
        xmax = 1.0
        intervals: size = 1
        intervals [1]:
            xmin = 0
            xmax = 1.0
            text = "cat"
    item [2]:
        class = "IntervalTier"
        name = "phones"
        xmin = 0
        xmax = 1.0
        intervals: size = 4
        intervals [1]:
            xmin = 0
            xmax = 0.2
            text = ""
        intervals [2]:
            xmin = 0.2
            xmax = 0.5
            text = "K"
        intervals [3]:
            xmin = 0.5
            xmax = 0.8
            text = "AE1"
        intervals [4]:
            xmin = 0.8
            xmax = 1.0
            text = "T"
)";
  const auto tg = data::parse_textgrid(long_form);
  REQUIRE(tg.tiers.size() == 2);
  const auto al = data::phone_alignment(tg);
  REQUIRE(al.entries.size() == 4);
  CHECK(al.entries[0].label == "sil");
  CHECK(al.entries[2].label == "AE1");
  CHECK(al.entries[2].start == doctest::Approx(0.5));

  const std::string short_form = "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n0\n1\n<exists>\n1\n"
                                 "\"IntervalTier\"\n\"phones\"\n0\n1\n2\n0\n0.4\n\"S\"\n0.4\n1\n\"IY1\"\n";
  const auto sg = data::parse_textgrid(short_form);
  const auto sa = data::phone_alignment(sg);
  REQUIRE(sa.entries.size() == 2);
  CHECK(sa.entries[1].label == "IY1");
  CHECK(sa.entries[1].end == doctest::Approx(1.0));

  const auto dir = testing::scratch_dir("textgrid");
  data::write_textgrid(dir / "x.TextGrid", tg);
  const auto back = data::read_textgrid(dir / "x.TextGrid");
  CHECK(data::phone_alignment(back).entries.size() == 4);
  CHECK_THROWS_AS(data::parse_textgrid("not a textgrid"), DataError);
}

TEST_CASE("WAV and EEG file round trips") {
  const auto dir = testing::scratch_dir("io");
  std::vector<double> w(1000);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(0.01 * static_cast<double>(i)) * 0.9;
  dsp::write_wav(dir / "a.wav", w, 22050);
  const auto u = dsp::read_wav(dir / "a.wav");
  CHECK(u.fs == 22050.0);
  REQUIRE(u.waveform.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(u.waveform[i] - w[i]) <= 0.5 / 32768.0 + 1e-12);

  EegRecording r;
  r.fs = 256.0;
  r.samples = Matrix(2, 5);
  for (std::size_t i = 0; i < 10; ++i) r.samples.data()[i] = 0.5 * static_cast<double>(i);
  r.channel_labels = {"Fz", "Cz"};
  r.subject_id = "S1";
  r.stimulus_id = "T1";
  dsp::write_eeg(dir / "e.f32", r);
  const auto back = dsp::read_eeg(dir / "e.f32");
  CHECK(back.samples == r.samples);
  CHECK(back.channel_labels == r.channel_labels);
  CHECK(back.subject_id == "S1");
  CHECK_THROWS_AS(dsp::read_wav(dir / "e.f32"), DataError);
}

}  // TEST_SUITE
