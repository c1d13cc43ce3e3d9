#include "e2s/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "e2s/config.hpp"
#include "e2s/data/dataset.hpp"
#include "e2s/data/manifest.hpp"
#include "e2s/data/synthetic.hpp"
#include "e2s/data/textgrid.hpp"
#include "e2s/dsp/io.hpp"
#include "e2s/error.hpp"
#include "e2s/eval/metrics.hpp"
#include "e2s/eval/phoneme.hpp"
#include "e2s/eval/probe.hpp"
#include "e2s/train/checkpoint.hpp"
#include "e2s/train/trainer.hpp"

namespace e2s::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string run_dir;
  std::string manifest;
  std::string checkpoint;
  std::optional<uint64_t> seed;
  std::optional<double> temperature;
  std::string channels_subset;
  std::optional<int> n_mcc;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Json flag_overrides(const Common& c) {
  Json j = Json::object();
  if (c.seed) j["run"]["seed"] = *c.seed;
  if (c.temperature) j["run"]["temperature"] = *c.temperature;
  if (!c.channels_subset.empty()) j["data"]["channel_subset"] = split_list(c.channels_subset);
  if (c.n_mcc) j["eval"]["n_mcc"] = *c.n_mcc;
  if (!c.manifest.empty()) j["data"]["manifest"] = fs::absolute(c.manifest).string();
  return j;
}

Json effective_tree(const Common& c) {
  auto tree = load_config_tree(c.config, c.overrides);
  return merge_config(tree, flag_overrides(c));
}

// Config of a checkpoint with command-line flags (but not the architecture)
// applied on top.
RunConfig checkpoint_run_config(const Common& c, const RunConfig& stored) {
  Json tree = stored.to_json();
  for (const auto& o : c.overrides) apply_override(tree, o);
  return RunConfig::from_json(merge_config(tree, flag_overrides(c)));
}

fs::path prepare_run_dir(const Common& c, const std::string& command, const Json& tree) {
  fs::path dir = c.run_dir.empty() ? fs::path("runs") / command : fs::path(c.run_dir);
  fs::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw DataError("cannot write " + (dir / "config.json").string());
  out << tree.dump(2) << '\n';
  return dir;
}

data::DatasetOptions dataset_options(const RunConfig& cfg) {
  data::DatasetOptions o;
  o.dsp = cfg.dsp;
  o.standardize = cfg.data.standardize;
  const auto subset = cfg.data.channel_subset;
  if (!(subset.size() == 1 && subset[0] == "all")) {
    const auto regions = cfg.eval.regions;
    o.channel_transform = [subset, regions](const EegRecording& x) {
      return eval::channel_subset(x, subset, regions);
    };
  }
  return o;
}

data::Manifest load_manifest(const RunConfig& cfg) {
  if (cfg.data.manifest.empty()) {
    throw ConfigError("no manifest given (use --manifest or data.manifest)");
  }
  auto m = data::read_manifest(cfg.data.manifest);
  m.validate(true);
  return m;
}

// Channel count after preprocessing and subsetting, taken from the data.
void adopt_channel_count(RunConfig& cfg, data::PairedDataset& ds, std::ostream& out) {
  if (ds.size() == 0) throw DataError("manifest has no rows");
  const auto n = static_cast<int64_t>(ds.eeg(0).n_channels());
  if (n != cfg.eeg.n_channels_in) {
    out << "eeg.n_channels_in set to " << n << " from the data\n";
    cfg.eeg.n_channels_in = n;
  }
}

std::string file_stem(const data::ManifestRow& r) { return r.subject_id + "_" + r.stimulus_id; }

std::vector<std::size_t> rows_for(const data::Manifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<std::size_t> v(m.rows.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
  }
  return m.indices(data::parse_split(split));
}

void require_rows(const std::vector<std::size_t>& idx, const std::string& what) {
  if (idx.empty()) throw DataError("no rows in " + what);
}

// ---- subcommands -----------------------------------------------------------

int synth_data(const Common& c, const std::string& out_dir, std::ostream& out) {
  const auto tree = effective_tree(c);
  const auto cfg = RunConfig::from_json(tree);
  const fs::path dir = out_dir.empty() ? prepare_run_dir(c, "synth-data", tree) : fs::path(out_dir);
  fs::create_directories(dir);
  data::SyntheticSpec spec;
  spec.n_subjects = cfg.synthetic.n_subjects;
  spec.n_stimuli = cfg.synthetic.n_stimuli;
  spec.eeg_channels = cfg.synthetic.eeg_channels;
  spec.min_duration = cfg.synthetic.min_duration;
  spec.max_duration = cfg.synthetic.max_duration;
  spec.seed = cfg.synthetic.seed;
  spec.held_out_subjects = cfg.synthetic.held_out_subjects;
  spec.held_out_stimuli = cfg.synthetic.held_out_stimuli;
  spec.audio_fs = cfg.dsp.stft.fs;
  auto corpus = data::generate_synthetic(spec, dir, data::read_lexicon(data::default_lexicon_path()));
  out << "wrote " << corpus.manifest.rows.size() << " pairs to " << corpus.manifest_path.string()
      << '\n';
  for (auto s : {data::Split::Train, data::Split::UnseenAudio, data::Split::UnseenSubject,
                 data::Split::UnseenBoth}) {
    out << "  " << data::to_string(s) << ": " << corpus.manifest.indices(s).size() << '\n';
  }
  return 0;
}

int preprocess(const Common& c, std::ostream& out) {
  const auto tree = effective_tree(c);
  const auto cfg = RunConfig::from_json(tree);
  const auto dir = prepare_run_dir(c, "preprocess", tree);
  auto m = load_manifest(cfg);
  data::PairedDataset ds(m, dataset_options(cfg));
  fs::create_directories(dir / "eeg");
  Json summary = Json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& e = ds.eeg(i);
    const auto& s = ds.linear(i);
    dsp::write_eeg(dir / "eeg" / (file_stem(m.rows[i]) + ".f32"), e);
    summary.push_back({{"id", m.rows[i].id()},
                       {"split", data::to_string(m.rows[i].split)},
                       {"channels", e.n_channels()},
                       {"eeg_samples", e.n_timesteps()},
                       {"eeg_fs", e.fs},
                       {"spec_frames", s.n_frames()}});
  }
  std::ofstream(dir / "preprocess_summary.json") << summary.dump(2) << '\n';
  out << "preprocessed " << ds.size() << " recordings into " << (dir / "eeg").string() << '\n';
  return 0;
}

int pretrain_eeg(const Common& c, std::ostream& out) {
  auto tree = effective_tree(c);
  auto cfg = RunConfig::from_json(tree);
  cfg.run.name = TrainingConfiguration::Vanilla;  // EEG pretraining needs no checkpoints
  auto m = load_manifest(cfg);
  data::PairedDataset ds(m, dataset_options(cfg));
  adopt_channel_count(cfg, ds, out);
  const auto dir = prepare_run_dir(c, "pretrain-eeg", cfg.to_json());
  auto train_idx = m.indices(data::Split::Train);
  require_rows(train_idx, "the train split");

  auto state = train::configure_run(cfg);
  const double before = train::evaluate_eeg_loss(state, ds, train_idx);
  train::LoopOptions opt;
  opt.run_dir = dir;
  opt.on_log = [&](const train::TrainLogRecord& r) {
    out << "iteration " << r.iteration << " L_EEG " << r.losses.L_EEG << '\n';
  };
  train::pretrain_eeg(state, ds, train_idx, cfg.run.eeg_pretrain_epochs, opt);
  const double after = train::evaluate_eeg_loss(state, ds, train_idx);
  Json summary{{"L_EEG_initial", before}, {"L_EEG_final", after}};
  for (auto s : data::test_splits()) {
    auto idx = m.indices(s);
    if (!idx.empty()) summary["L_EEG_" + data::to_string(s)] = train::evaluate_eeg_loss(state, ds, idx);
  }
  std::ofstream(dir / "pretrain_summary.json") << summary.dump(2) << '\n';
  out << "L_EEG " << before << " -> " << after << "; checkpoint "
      << (dir / "checkpoint.pt").string() << '\n';
  return 0;
}

int train_cmd(const Common& c, bool resume, std::ostream& out) {
  auto tree = effective_tree(c);
  auto cfg = RunConfig::from_json(tree);
  auto m = load_manifest(cfg);
  data::PairedDataset ds(m, dataset_options(cfg));
  adopt_channel_count(cfg, ds, out);
  const auto dir = prepare_run_dir(c, "train", cfg.to_json());
  auto train_idx = m.indices(data::Split::Train);
  require_rows(train_idx, "the train split");

  auto state = train::configure_run(cfg);
  if (resume && fs::exists(dir / "checkpoint.pt")) {
    train::load_checkpoint(state, dir / "checkpoint.pt");
    out << "resumed at iteration " << state.iteration << '\n';
  }
  train::LoopOptions opt;
  opt.run_dir = dir;
  opt.on_log = [&](const train::TrainLogRecord& r) {
    out << "iteration " << r.iteration << " L_mel " << r.losses.L_mel << " L_KL " << r.losses.L_KL
        << " L_EEG " << r.losses.L_EEG << " L_adv_g " << r.losses.L_adv_g << " L_adv_d "
        << r.losses.L_adv_d << " L_fm " << r.losses.L_fm << '\n';
  };
  train::run_training(state, ds, train_idx, opt);
  out << "checkpoint " << (dir / "checkpoint.pt").string() << '\n';
  return 0;
}

struct LoadedModel {
  RunConfig cfg;
  train::Model model{nullptr};
};

LoadedModel load_for_inference(const Common& c) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto [stored, model] = train::load_model(c.checkpoint);
  return {checkpoint_run_config(c, stored), model};
}

int infer(const Common& c, const std::vector<std::string>& eeg_files, const std::string& split,
          std::ostream& out) {
  auto lm = load_for_inference(c);
  const auto dir = prepare_run_dir(c, "infer", lm.cfg.to_json());
  fs::create_directories(dir / "wav");
  const double tau = lm.cfg.run.temperature;
  const int fs_out = static_cast<int>(lm.cfg.dsp.stft.fs);
  const auto options = dataset_options(lm.cfg);
  dsp::EegPreprocessor pre(lm.cfg.dsp);

  std::size_t written = 0;
  for (const auto& f : eeg_files) {
    auto rec = pre(dsp::read_eeg(f));
    if (options.standardize) dsp::standardize_channels(rec);
    if (options.channel_transform) rec = options.channel_transform(rec);
    auto y = train::infer_waveform(lm.model, lm.cfg, rec, tau, lm.cfg.run.seed);
    dsp::write_wav(dir / "wav" / (fs::path(f).stem().string() + ".wav"), y.waveform, fs_out);
    ++written;
  }
  if (!split.empty()) {
    auto m = load_manifest(lm.cfg);
    data::PairedDataset ds(m, options);
    for (auto i : rows_for(m, split)) {
      auto y = train::infer_waveform(lm.model, lm.cfg, ds.eeg(i), tau, lm.cfg.run.seed);
      dsp::write_wav(dir / "wav" / (file_stem(m.rows[i]) + ".wav"), y.waveform, fs_out);
      ++written;
    }
  }
  if (written == 0) throw ConfigError("nothing to infer: give --eeg files or --split");
  out << "wrote " << written << " waveforms to " << (dir / "wav").string() << '\n';
  return 0;
}

void write_summary_csv(const std::vector<eval::MetricReport>& reports, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f.precision(10);
  f << "split,n,mcd_db,mcd_ci_low,mcd_ci_high,mel_corr_percent,mel_corr_ci_low,mel_corr_ci_high\n";
  for (const auto& r : reports) {
    f << r.split << ',' << r.mcd.n << ',' << r.mcd.mean << ',' << r.mcd.ci_low << ','
      << r.mcd.ci_high << ',' << r.mel_corr.mean << ',' << r.mel_corr.ci_low << ','
      << r.mel_corr.ci_high << '\n';
  }
}

int evaluate(const Common& c, const std::string& ref, const std::string& gen,
             const std::vector<std::string>& splits, const std::string& baseline,
             std::ostream& out) {
  std::vector<eval::MetricReport> reports;
  RunConfig cfg;
  fs::path dir;
  if (!ref.empty() || !gen.empty()) {
    if (ref.empty() || gen.empty()) throw ConfigError("--ref and --gen go together");
    const auto tree = effective_tree(c);
    cfg = RunConfig::from_json(tree);
    dir = prepare_run_dir(c, "evaluate", tree);
    auto r = dsp::read_wav(ref), g = dsp::read_wav(gen);
    if (r.fs != cfg.dsp.stft.fs) r = dsp::resample(r, cfg.dsp.stft.fs);
    if (g.fs != cfg.dsp.stft.fs) g = dsp::resample(g, cfg.dsp.stft.fs);
    reports.push_back(eval::evaluate_pairs("files", {{fs::path(gen).filename().string(), r}}, {g},
                                           cfg.eval.n_mcc, cfg.dsp));
  } else {
    auto lm = load_for_inference(c);
    cfg = lm.cfg;
    dir = prepare_run_dir(c, "evaluate", cfg.to_json());
    auto m = load_manifest(cfg);
    data::PairedDataset ds(m, dataset_options(cfg));
    for (const auto& split : splits) {
      const auto idx = rows_for(m, split);
      if (idx.empty()) {
        out << "split " << split << " is empty, skipped\n";
        continue;
      }
      std::vector<std::pair<std::string, SpeechUtterance>> refs;
      std::vector<SpeechUtterance> gens;
      for (auto i : idx) {
        refs.emplace_back(m.rows[i].id(), ds.speech(i));
        gens.push_back(train::infer_waveform(lm.model, cfg, ds.eeg(i), cfg.run.temperature,
                                             cfg.run.seed));
      }
      reports.push_back(eval::evaluate_pairs(split, refs, gens, cfg.eval.n_mcc, cfg.dsp));
    }
  }
  eval::write_metric_csv(reports, dir / "metrics_utterances.csv");
  write_summary_csv(reports, dir / "metrics.csv");
  Json j = Json::array();
  for (const auto& r : reports) j.push_back(r.to_json());
  Json doc{{"reports", j}, {"channel_subset", cfg.data.channel_subset}};

  if (!baseline.empty()) {
    std::ifstream in(baseline);
    if (!in) throw DataError("cannot open baseline " + baseline);
    const auto base = Json::parse(in);
    Json drops = Json::array();
    for (const auto& r : reports) {
      for (const auto& b : base.at("reports")) {
        if (b.at("split") != r.split) continue;
        drops.push_back(
            {{"split", r.split},
             {"mcd_drop_percent",
              eval::performance_drop(b["mcd_db"]["mean"].get<double>(), r.mcd.mean, false)},
             {"mel_corr_drop_percent",
              eval::performance_drop(b["mel_corr_percent"]["mean"].get<double>(),
                                     r.mel_corr.mean, true)}});
      }
    }
    doc["performance_drop"] = drops;
  }
  std::ofstream(dir / "metrics.json") << doc.dump(2) << '\n';
  for (const auto& r : reports) {
    out << r.split << ": n " << r.mcd.n << " MCD " << r.mcd.mean << " dB [" << r.mcd.ci_low << ", "
        << r.mcd.ci_high << "]  Mel-Corr " << r.mel_corr.mean << " % [" << r.mel_corr.ci_low
        << ", " << r.mel_corr.ci_high << "]\n";
  }
  return 0;
}

eval::PhonemeGroupTable phoneme_table(const RunConfig& cfg) {
  return eval::PhonemeGroupTable::load(cfg.eval.phoneme_table.empty()
                                           ? eval::PhonemeGroupTable::default_path()
                                           : fs::path(cfg.eval.phoneme_table));
}

int phoneme_report(const Common& c, const std::string& ref, const std::string& gen,
                   const std::string& alignment, const std::vector<std::string>& splits,
                   std::ostream& out) {
  std::vector<eval::PhonemeItem> items;
  RunConfig cfg;
  fs::path dir;
  if (!ref.empty()) {
    if (gen.empty() || alignment.empty()) {
      throw ConfigError("--ref needs --gen and --alignment");
    }
    const auto tree = effective_tree(c);
    cfg = RunConfig::from_json(tree);
    dir = prepare_run_dir(c, "phoneme-report", tree);
    eval::PhonemeItem it;
    it.id = fs::path(ref).stem().string();
    it.ref = dsp::read_wav(ref);
    it.gen = dsp::read_wav(gen);
    if (it.ref.fs != cfg.dsp.stft.fs) it.ref = dsp::resample(it.ref, cfg.dsp.stft.fs);
    if (it.gen.fs != cfg.dsp.stft.fs) it.gen = dsp::resample(it.gen, cfg.dsp.stft.fs);
    it.alignment = data::phone_alignment(data::read_textgrid(alignment));
    items.push_back(std::move(it));
  } else {
    auto lm = load_for_inference(c);
    cfg = lm.cfg;
    dir = prepare_run_dir(c, "phoneme-report", cfg.to_json());
    auto m = load_manifest(cfg);
    data::PairedDataset ds(m, dataset_options(cfg));
    for (const auto& split : splits) {
      for (auto i : rows_for(m, split)) {
        const auto& u = ds.speech(i);
        if (!u.alignment) throw DataError("row " + m.rows[i].id() + " has no alignment");
        eval::PhonemeItem it;
        it.id = m.rows[i].id();
        it.ref = u;
        it.gen = train::infer_waveform(lm.model, cfg, ds.eeg(i), cfg.run.temperature, cfg.run.seed);
        it.alignment = *u.alignment;
        items.push_back(std::move(it));
      }
    }
  }
  if (items.empty()) throw DataError("no utterances for the phoneme report");
  auto report = eval::phoneme_report(items, phoneme_table(cfg), cfg.eval.n_mcc, cfg.dsp);
  report.write_csv(dir / "phoneme_report.csv");
  std::ofstream(dir / "phoneme_report.json") << report.to_json().dump(2) << '\n';
  eval::write_group_svg(report, dir / "phoneme_groups.svg");
  for (const auto& g : report.groups) {
    out << g.axis << '/' << g.group << ": " << g.n_segments << " segments, MCD " << g.mcd
        << " dB\n";
  }
  return 0;
}

int wordspot(const Common& c, std::size_t n_keywords, std::ostream& out) {
  auto lm = load_for_inference(c);
  auto& cfg = lm.cfg;
  const auto dir = prepare_run_dir(c, "wordspot", cfg.to_json());
  auto m = load_manifest(cfg);
  data::PairedDataset ds(m, dataset_options(cfg));

  std::vector<std::string> transcripts;
  for (const auto& r : m.rows) transcripts.push_back(r.transcript);
  const auto keywords =
      eval::top_nouns(transcripts, data::read_lexicon(data::default_lexicon_path()), n_keywords);

  lm.model->eval();
  std::vector<eval::ProbeExample> examples;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    eval::ProbeExample e;
    e.id = m.rows[i].id();
    e.split = data::to_string(m.rows[i].split);
    e.embedding = nn::eeg_encode(lm.model->eeg, ds.eeg(i), cfg.dsp.eeg_fs).values;
    e.transcript = m.rows[i].transcript;
    examples.push_back(std::move(e));
  }
  const auto report = eval::wordspot_probe(examples, keywords);
  std::ofstream(dir / "wordspot.json") << report.to_json().dump(2) << '\n';
  std::ofstream csv(dir / "wordspot.csv");
  csv << "split,n,n_positive,f1_macro,f1_positive\n";
  for (const auto& s : report.splits) {
    csv << s.split << ',' << s.n << ',' << s.n_positive << ',';
    if (s.f1) csv << s.f1->macro << ',' << s.f1->positive;
    else csv << ',';
    csv << '\n';
    out << s.split << ": ";
    if (s.f1) out << "F1 " << s.f1->macro << " (positive class " << s.f1->positive << ")\n";
    else out << "undefined (single class)\n";
  }
  return 0;
}

void loss_svg(const fs::path& log_path, const fs::path& svg_path) {
  std::ifstream in(log_path);
  if (!in) throw DataError("cannot open " + log_path.string());
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const auto j = Json::parse(line);
    for (const char* k : {"L_EEG", "L_mel", "L_KL", "L_adv_g", "L_adv_d", "L_fm"}) {
      if (j.contains(k)) series[k].emplace_back(j["iteration"].get<double>(), j[k].get<double>());
    }
  }
  if (series.empty()) throw DataError("no records in " + log_path.string());
  const int w = 320, h = 160, cols = 3;
  std::ostringstream svg;
  const int rows = static_cast<int>((series.size() + cols - 1) / cols);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * (w + 20) << "\" height=\""
      << rows * (h + 40) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  int k = 0;
  for (const auto& [name, pts] : series) {
    const int x0 = (k % cols) * (w + 20) + 10, y0 = (k / cols) * (h + 40) + 20;
    double xmax = 1e-9, ymin = pts[0].second, ymax = pts[0].second;
    for (const auto& [x, y] : pts) {
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    svg << "<text x=\"" << x0 << "\" y=\"" << y0 - 5 << "\">" << name << " [" << ymin << ", "
        << ymax << "]</text>\n<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w
        << "\" height=\"" << h << "\" fill=\"none\" stroke=\"#999\"/>\n<polyline fill=\"none\" "
        << "stroke=\"#c44e52\" points=\"";
    for (const auto& [x, y] : pts) {
      svg << x0 + w * x / xmax << ',' << y0 + h - h * (y - ymin) / (ymax - ymin) << ' ';
    }
    svg << "\"/>\n";
    ++k;
  }
  svg << "</svg>\n";
  std::ofstream(svg_path) << svg.str();
}

int plot(const Common& c, const std::string& log, const std::string& phonemes, std::ostream& out) {
  if (log.empty() && phonemes.empty()) throw ConfigError("plot needs --log or --phoneme-json");
  const fs::path dir = c.run_dir.empty() ? fs::path("runs/plot") : fs::path(c.run_dir);
  fs::create_directories(dir);
  if (!log.empty()) {
    loss_svg(log, dir / "losses.svg");
    out << "wrote " << (dir / "losses.svg").string() << '\n';
  }
  if (!phonemes.empty()) {
    std::ifstream in(phonemes);
    if (!in) throw DataError("cannot open " + phonemes);
    const auto j = Json::parse(in);
    eval::PhonemeReport rep;
    for (const auto& g : j.at("groups")) {
      eval::GroupMetrics m;
      m.axis = g.at("axis");
      m.group = g.at("group");
      m.mcd = g.at("mcd_db");
      m.mcd_segments.ci_low = g.at("mcd_ci")[0];
      m.mcd_segments.ci_high = g.at("mcd_ci")[1];
      rep.groups.push_back(m);
    }
    eval::write_group_svg(rep, dir / "phoneme_groups.svg");
    out << "wrote " << (dir / "phoneme_groups.svg").string() << '\n';
  }
  return 0;
}

void add_common(CLI::App* app, Common& c, bool model_flags) {
  app->add_option("--config", c.config, "preset name or JSON config file");
  app->add_option("--set", c.overrides, "dotted-key override, e.g. optimizer.lr=1e-4");
  app->add_option("--run-dir", c.run_dir, "output directory");
  app->add_option("--manifest", c.manifest, "manifest CSV");
  app->add_option("--seed", c.seed, "run seed");
  app->add_option("--channels-subset", c.channels_subset, "comma-separated scalp regions");
  app->add_option("--n-mcc", c.n_mcc, "cepstral coefficients for MCD");
  if (model_flags) {
    app->add_option("--checkpoint", c.checkpoint, "trained checkpoint");
    app->add_option("--temperature", c.temperature, "prior sampling temperature");
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"EEG-to-speech reconstruction toolkit", "e2s"};
  app.require_subcommand(1);
  Common c;
  std::string out_dir, ref, gen, alignment, baseline, log, phoneme_json, split;
  std::vector<std::string> eeg_files;
  std::vector<std::string> splits{"unseen-audio", "unseen-subject", "unseen-both"};
  std::size_t n_keywords = 30;
  bool resume = false;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic paired corpus");
  add_common(synth, c, false);
  synth->add_option("--out", out_dir, "corpus directory (default: run dir)");
  auto* prep = app.add_subcommand("preprocess", "filter, resample and cache EEG");
  add_common(prep, c, false);
  auto* pre = app.add_subcommand("pretrain-eeg", "train the EEG autoencoder alone");
  add_common(pre, c, false);
  auto* tr = app.add_subcommand("train", "joint training under a training configuration");
  add_common(tr, c, false);
  tr->add_flag("--resume", resume, "continue from checkpoint.pt in the run dir");
  auto* inf = app.add_subcommand("infer", "reconstruct waveforms from EEG");
  add_common(inf, c, true);
  inf->add_option("--eeg", eeg_files, "EEG files (.f32 with sidecar)");
  inf->add_option("--split", split, "manifest split to reconstruct (or 'all')");
  auto* ev = app.add_subcommand("evaluate", "MCD and Mel-Corr per split");
  add_common(ev, c, true);
  ev->add_option("--ref", ref, "reference WAV");
  ev->add_option("--gen", gen, "generated WAV");
  ev->add_option("--splits", splits, "splits to evaluate")->delimiter(',');
  ev->add_option("--baseline", baseline, "metrics.json of a full-channel run");
  auto* ph = app.add_subcommand("phoneme-report", "metrics per phoneme group");
  add_common(ph, c, true);
  ph->add_option("--ref", ref, "reference WAV");
  ph->add_option("--gen", gen, "generated WAV");
  ph->add_option("--alignment", alignment, "TextGrid of the reference");
  ph->add_option("--splits", splits, "splits to analyse")->delimiter(',');
  auto* ws = app.add_subcommand("wordspot", "keyword presence probe on EEG embeddings");
  add_common(ws, c, true);
  ws->add_option("--keywords", n_keywords, "number of frequent nouns");
  auto* pl = app.add_subcommand("plot", "SVG plots of logs and reports");
  add_common(pl, c, false);
  pl->add_option("--log", log, "train_log.jsonl");
  pl->add_option("--phoneme-json", phoneme_json, "phoneme_report.json");

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return synth_data(c, out_dir, out);
    if (prep->parsed()) return preprocess(c, out);
    if (pre->parsed()) return pretrain_eeg(c, out);
    if (tr->parsed()) return train_cmd(c, resume, out);
    if (inf->parsed()) return infer(c, eeg_files, split, out);
    if (ev->parsed()) return evaluate(c, ref, gen, splits, baseline, out);
    if (ph->parsed()) return phoneme_report(c, ref, gen, alignment, splits, out);
    if (ws->parsed()) return wordspot(c, n_keywords, out);
    if (pl->parsed()) return plot(c, log, phoneme_json, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 4;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace e2s::cli
