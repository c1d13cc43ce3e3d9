#include "e2s/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "e2s/data/textgrid.hpp"
#include "e2s/dsp/frontend.hpp"
#include "e2s/dsp/io.hpp"
#include "e2s/error.hpp"

namespace e2s::data {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kEdgeSilence = 0.1;  // seconds of "sil" at each end

enum class Kind { Vowel, Approximant, Nasal, Fricative, Stop, Affricate };

struct PhoneAcoustics {
  Kind kind;
  bool voiced;
  double f1, f2;   // formants for voiced parts
  double noise_hz; // centre of frication or burst noise
  double amp;
};

const std::map<std::string, PhoneAcoustics>& acoustics() {
  static const std::map<std::string, PhoneAcoustics> table{
      {"IY", {Kind::Vowel, true, 270, 2290, 0, 0.5}},
      {"IH", {Kind::Vowel, true, 390, 1990, 0, 0.5}},
      {"EH", {Kind::Vowel, true, 530, 1840, 0, 0.5}},
      {"AE", {Kind::Vowel, true, 660, 1720, 0, 0.5}},
      {"AH", {Kind::Vowel, true, 520, 1190, 0, 0.5}},
      {"AA", {Kind::Vowel, true, 730, 1090, 0, 0.5}},
      {"AO", {Kind::Vowel, true, 570, 840, 0, 0.5}},
      {"UH", {Kind::Vowel, true, 440, 1020, 0, 0.5}},
      {"UW", {Kind::Vowel, true, 300, 870, 0, 0.5}},
      {"ER", {Kind::Vowel, true, 490, 1350, 0, 0.5}},
      {"EY", {Kind::Vowel, true, 480, 2000, 0, 0.5}},
      {"OW", {Kind::Vowel, true, 500, 900, 0, 0.5}},
      {"AY", {Kind::Vowel, true, 700, 1400, 0, 0.5}},
      {"AW", {Kind::Vowel, true, 700, 1000, 0, 0.5}},
      {"OY", {Kind::Vowel, true, 550, 1100, 0, 0.5}},
      {"L", {Kind::Approximant, true, 360, 1300, 0, 0.35}},
      {"R", {Kind::Approximant, true, 420, 1300, 0, 0.35}},
      {"W", {Kind::Approximant, true, 300, 610, 0, 0.35}},
      {"Y", {Kind::Approximant, true, 270, 2200, 0, 0.35}},
      {"M", {Kind::Nasal, true, 250, 1100, 0, 0.25}},
      {"N", {Kind::Nasal, true, 250, 1700, 0, 0.25}},
      {"NG", {Kind::Nasal, true, 250, 2300, 0, 0.25}},
      {"S", {Kind::Fricative, false, 0, 0, 5500, 0.15}},
      {"Z", {Kind::Fricative, true, 250, 1500, 5000, 0.12}},
      {"SH", {Kind::Fricative, false, 0, 0, 2800, 0.15}},
      {"ZH", {Kind::Fricative, true, 250, 1500, 2600, 0.12}},
      {"F", {Kind::Fricative, false, 0, 0, 4000, 0.06}},
      {"V", {Kind::Fricative, true, 250, 1200, 3800, 0.06}},
      {"TH", {Kind::Fricative, false, 0, 0, 4500, 0.05}},
      {"DH", {Kind::Fricative, true, 250, 1400, 4200, 0.05}},
      {"HH", {Kind::Fricative, false, 0, 0, 1500, 0.08}},
      {"P", {Kind::Stop, false, 0, 0, 800, 0.3}},
      {"B", {Kind::Stop, true, 200, 900, 800, 0.3}},
      {"T", {Kind::Stop, false, 0, 0, 4000, 0.3}},
      {"D", {Kind::Stop, true, 200, 1700, 3500, 0.3}},
      {"K", {Kind::Stop, false, 0, 0, 2000, 0.3}},
      {"G", {Kind::Stop, true, 200, 1500, 2000, 0.3}},
      {"CH", {Kind::Affricate, false, 0, 0, 2800, 0.15}},
      {"JH", {Kind::Affricate, true, 250, 1500, 2600, 0.12}},
  };
  return table;
}

std::string strip_stress(const std::string& p) {
  std::string s = p;
  while (!s.empty() && std::isdigit(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

const PhoneAcoustics& lookup(const std::string& phone) {
  auto it = acoustics().find(strip_stress(phone));
  if (it == acoustics().end()) throw DataError("no acoustics for phone '" + phone + "'");
  return it->second;
}

// Two-pole band-pass (RBJ, constant skirt gain) run over white noise.
void add_noise(std::vector<double>& out, std::size_t begin, std::size_t end, double centre,
               double q, double amp, double fs, std::mt19937_64& rng, bool decay) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double w0 = 2.0 * kPi * std::min(centre, 0.45 * fs) / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  const double n = static_cast<double>(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    const double x = gauss(rng);
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    const double env = decay ? std::exp(-5.0 * static_cast<double>(i - begin) / n) : 1.0;
    out[i] += amp * 3.0 * y * env;
  }
}

double harmonic_gain(double f, double f1, double f2) {
  auto peak = [](double f, double c, double bw) {
    const double d = (f - c) / bw;
    return 1.0 / (1.0 + d * d);
  };
  return (peak(f, f1, 90.0) + 0.7 * peak(f, f2, 110.0) + 0.3 * peak(f, 2600.0, 150.0)) /
         std::sqrt(1.0 + f / 300.0);
}

// Voiced source shaped by two formants; phase is carried across calls.
void add_voicing(std::vector<double>& out, std::size_t begin, std::size_t end, double f1,
                 double f2, double amp, double fs, double f0_start, double f0_end,
                 double total_samples, double& phase) {
  const double nyq = 0.45 * fs;
  for (std::size_t i = begin; i < end; ++i) {
    const double pos = static_cast<double>(i) / total_samples;
    const double f0 = f0_start + (f0_end - f0_start) * pos;
    phase += 2.0 * kPi * f0 / fs;
    if (phase > 2.0 * kPi * 1e6) phase = std::fmod(phase, 2.0 * kPi);
    double s = 0.0, norm = 0.0;
    for (int k = 1; k * f0 < std::min(nyq, 5000.0); ++k) {
      const double g = harmonic_gain(k * f0, f1, f2);
      s += g * std::sin(k * phase);
      norm += g * g;
    }
    out[i] += amp * s / std::sqrt(norm * 0.5 + 1e-12);
  }
}

void apply_ramps(std::vector<double>& out, std::size_t begin, std::size_t end, double fs) {
  const std::size_t ramp = std::min<std::size_t>(static_cast<std::size_t>(0.005 * fs),
                                                 (end - begin) / 2);
  for (std::size_t i = 0; i < ramp; ++i) {
    const double g = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) / ramp);
    out[begin + i] *= g;
    out[end - 1 - i] *= g;
  }
}

std::vector<std::vector<std::string>> templates() {
  return {{"NOUN", "VERB", "NOUN"},
          {"DET", "NOUN", "VERB", "NOUN"},
          {"DET", "NOUN", "VERB", "DET", "NOUN"},
          {"DET", "ADJ", "NOUN", "VERB", "DET", "NOUN"},
          {"DET", "ADJ", "NOUN", "VERB", "DET", "ADJ", "NOUN"},
          {"DET", "NOUN", "VERB", "DET", "NOUN", "ADP", "DET", "NOUN"},
          {"DET", "ADJ", "NOUN", "VERB", "DET", "NOUN", "ADP", "DET", "NOUN"}};
}

const LexiconEntry& pick(const Lexicon& lex, const std::string& pos, std::mt19937_64& rng) {
  std::vector<const LexiconEntry*> pool;
  for (const auto& e : lex) {
    if (e.pos == pos) pool.push_back(&e);
  }
  if (pool.empty()) throw DataError("lexicon has no entries of class " + pos);
  std::vector<double> w(pool.size(), 1.0);
  if (pos == "NOUN") {
    // Zipf-like noun frequencies so keyword ranks are well defined.
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / static_cast<double>(i + 1);
  }
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return *pool[d(rng)];
}

double standardise(std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double& x : v) {
    x -= mean;
    var += x * x;
  }
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  if (sd > 0.0) {
    for (double& x : v) x /= sd;
  }
  return sd;
}

}  // namespace

Lexicon read_lexicon(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  Lexicon lex;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string word, pos, pron;
    if (!std::getline(ls, word, '\t') || !std::getline(ls, pos, '\t') ||
        !std::getline(ls, pron)) {
      throw DataError("malformed lexicon line: " + line);
    }
    LexiconEntry e{word, pos, {}};
    std::istringstream ps(pron);
    for (std::string p; ps >> p;) e.phones.push_back(p);
    if (e.phones.empty()) throw DataError("lexicon word '" + word + "' has no phones");
    lex.push_back(std::move(e));
  }
  return lex;
}

fs::path default_lexicon_path() { return fs::path(E2S_DATA_DIR) / "lexicon.tsv"; }

std::vector<std::string> standard_channel_labels(int64_t n) {
  static const std::vector<std::string> pool{
      "Fp1", "Fp2", "F7",  "F3",  "F4",  "F8",  "T7",  "C3",  "C4",  "T8",  "P7",
      "P3",  "P4",  "P8",  "O1",  "O2",  "Fz",  "Cz",  "Pz",  "Oz",  "AF3", "AF4",
      "FC5", "FC1", "FC2", "FC6", "CP5", "CP1", "CP2", "CP6", "PO3", "PO4"};
  std::vector<std::string> out;
  for (int64_t i = 0; i < n; ++i) {
    out.push_back(i < static_cast<int64_t>(pool.size()) ? pool[i] : "E" + std::to_string(i + 1));
  }
  return out;
}

Stimulus synthesize_stimulus(const std::string& id, double duration, const Lexicon& lex,
                             std::mt19937_64& rng, double fs) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto tpls = templates();
  const double speech_time = duration - 2.0 * kEdgeSilence;
  const auto target_words = static_cast<std::size_t>(std::clamp(speech_time / 0.3, 3.0, 9.0));
  const auto& tpl = tpls[std::min(target_words, tpls.size() + 2) - 3];

  std::vector<const LexiconEntry*> words;
  for (const auto& pos : tpl) words.push_back(&pick(lex, pos, rng));

  // Natural phone durations, then scaled to fill the speech interval.
  struct Seg {
    std::string phone;
    double dur;
    std::size_t word;
  };
  std::vector<Seg> segs;
  double natural = 0.0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    for (const auto& p : words[w]->phones) {
      const auto& a = lookup(p);
      const double d = a.kind == Kind::Vowel ? 0.09 + 0.05 * unit(rng) : 0.05 + 0.04 * unit(rng);
      segs.push_back({p, d, w});
      natural += d;
    }
  }
  const double scale = speech_time / natural;

  Stimulus stim;
  stim.id = id;
  const auto n = static_cast<std::size_t>(std::lround(duration * fs));
  std::vector<double> wave(n, 0.0);
  PhonemeAlignment align;
  align.entries.push_back({"sil", 0.0, kEdgeSilence});

  const double f0_start = 100.0 + 80.0 * unit(rng);
  const double f0_end = f0_start * 0.85;
  double phase = 0.0;
  double t = kEdgeSilence;
  std::size_t word_start_seg = 0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double t_end = i + 1 == segs.size() ? duration - kEdgeSilence : t + segs[i].dur * scale;
    const auto b = static_cast<std::size_t>(std::lround(t * fs));
    const auto e = std::min(n, static_cast<std::size_t>(std::lround(t_end * fs)));
    const auto& a = lookup(segs[i].phone);
    switch (a.kind) {
      case Kind::Vowel:
      case Kind::Approximant:
      case Kind::Nasal:
        add_voicing(wave, b, e, a.f1, a.f2, a.amp, fs, f0_start, f0_end, n, phase);
        break;
      case Kind::Fricative:
        add_noise(wave, b, e, a.noise_hz, a.noise_hz < 2000 ? 0.7 : 2.0, a.amp, fs, rng, false);
        if (a.voiced) add_voicing(wave, b, e, a.f1, a.f2, 0.1, fs, f0_start, f0_end, n, phase);
        break;
      case Kind::Stop: {
        const std::size_t burst = b + (e - b) * 6 / 10;
        if (a.voiced) add_voicing(wave, b, burst, a.f1, a.f2, 0.05, fs, f0_start, f0_end, n, phase);
        add_noise(wave, burst, e, a.noise_hz, 1.0, a.amp, fs, rng, true);
        break;
      }
      case Kind::Affricate: {
        const std::size_t fric = b + (e - b) * 4 / 10;
        add_noise(wave, fric, e, a.noise_hz, 2.0, a.amp, fs, rng, false);
        if (a.voiced) add_voicing(wave, b, e, a.f1, a.f2, 0.08, fs, f0_start, f0_end, n, phase);
        break;
      }
    }
    apply_ramps(wave, b, e, fs);
    align.entries.push_back({segs[i].phone, t, t_end});
    if (i + 1 == segs.size() || segs[i + 1].word != segs[i].word) {
      stim.words.push_back({words[segs[i].word]->word, align.entries[word_start_seg + 1].start,
                            t_end});
      word_start_seg = i + 1;
    }
    t = t_end;
  }
  align.entries.push_back({"sil", duration - kEdgeSilence, duration});

  double peak = 0.0;
  for (double v : wave) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : wave) v *= 0.8 / peak;
  }

  std::string transcript;
  for (const auto* w : words) transcript += (transcript.empty() ? "" : " ") + w->word;
  stim.speech.waveform = std::move(wave);
  stim.speech.fs = fs;
  stim.speech.transcript = transcript;
  stim.speech.alignment = std::move(align);
  return stim;
}

std::vector<double> audio_envelope(const std::vector<double>& wave, double audio_fs,
                                   double eeg_fs, std::size_t n_eeg) {
  std::vector<double> rect(wave.size());
  for (std::size_t i = 0; i < wave.size(); ++i) rect[i] = std::abs(wave[i]);
  auto env = dsp::resample(std::span<const double>(rect), audio_fs, eeg_fs);
  env.resize(n_eeg, env.empty() ? 0.0 : env.back());
  standardise(env);
  return env;
}

SubjectModel make_subject(const std::string& id, int64_t channels, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SubjectModel s;
  s.id = id;
  s.gain = 0.8 + 0.7 * u(rng);
  for (int64_t c = 0; c < channels; ++c) {
    s.envelope_weight.push_back(0.6 + 0.6 * u(rng));
    s.onset_weight.push_back(-0.4 + 0.8 * u(rng));
    s.lag.push_back(2 + static_cast<int>(u(rng) * 24.0));  // 8 to 100 ms at 256 Hz
  }
  return s;
}

EegRecording simulate_eeg(const SubjectModel& subject, const Stimulus& stim,
                          const std::vector<std::string>& labels, const SyntheticSpec& spec,
                          std::mt19937_64& rng) {
  const std::size_t n_audio = stim.speech.waveform.size();
  const std::size_t n_eeg = dsp::resampled_length(n_audio, spec.audio_fs, spec.eeg_fs);
  const auto env = audio_envelope(stim.speech.waveform, spec.audio_fs, spec.eeg_fs, n_eeg);
  std::vector<double> onset(n_eeg, 0.0);
  for (std::size_t t = 1; t < n_eeg; ++t) onset[t] = std::max(0.0, env[t] - env[t - 1]);
  standardise(onset);

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto channels = static_cast<std::size_t>(subject.envelope_weight.size());
  EegRecording rec;
  rec.fs = spec.eeg_fs;
  rec.channel_labels = labels;
  rec.subject_id = subject.id;
  rec.stimulus_id = stim.id;
  rec.samples = Matrix(channels, n_eeg);
  for (std::size_t c = 0; c < channels; ++c) {
    const double line_phase = 2.0 * kPi * u(rng);
    const double drift_phase = 2.0 * kPi * u(rng);
    for (std::size_t t = 0; t < n_eeg; ++t) {
      const auto lag = static_cast<std::size_t>(subject.lag[c]);
      const double e = t >= lag ? env[t - lag] : env[0];
      const double o = t >= lag ? onset[t - lag] : 0.0;
      const double time = static_cast<double>(t) / spec.eeg_fs;
      rec.samples(c, t) =
          subject.gain * (subject.envelope_weight[c] * e + subject.onset_weight[c] * o +
                          spec.noise_std * gauss(rng)) +
          spec.line_noise * std::sin(2.0 * kPi * 60.0 * time + line_phase) +
          0.5 * std::sin(2.0 * kPi * 0.1 * time + drift_phase);
    }
  }
  return rec;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir,
                                   const Lexicon& lex) {
  if (spec.n_subjects < 1 || spec.n_stimuli < 1 || spec.eeg_channels < 1) {
    throw InvalidParameter("synthetic corpus needs at least one subject, stimulus and channel");
  }
  if (!(spec.min_duration > 2.0 * kEdgeSilence + 0.3) || spec.max_duration < spec.min_duration) {
    throw InvalidParameter("synthetic duration range must start above 0.5 s");
  }
  fs::create_directories(out_dir / "audio");
  fs::create_directories(out_dir / "eeg");
  fs::create_directories(out_dir / "alignments");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto labels = standard_channel_labels(spec.eeg_channels);

  auto pad_id = [](const char* prefix, int64_t i, int width) {
    std::string s = std::to_string(i + 1);
    return prefix + std::string(width - std::min<int>(width, s.size()), '0') + s;
  };

  std::vector<Stimulus> stimuli;
  nlohmann::json truth;
  truth["seed"] = spec.seed;
  truth["audio_fs"] = spec.audio_fs;
  truth["eeg_fs"] = spec.eeg_fs;
  std::map<std::string, int> word_counts;
  for (int64_t k = 0; k < spec.n_stimuli; ++k) {
    const double dur = spec.min_duration + (spec.max_duration - spec.min_duration) * u(rng);
    auto stim = synthesize_stimulus(pad_id("stim", k, 3), dur, lex, rng, spec.audio_fs);
    for (const auto& w : stim.words) ++word_counts[w.label];

    dsp::write_wav(out_dir / "audio" / (stim.id + ".wav"), stim.speech.waveform,
                   static_cast<int>(spec.audio_fs));
    TextGrid tg;
    tg.xmax = dur;
    TextGridTier words{"words", "IntervalTier", 0.0, dur, {}};
    double t = 0.0;
    for (const auto& w : stim.words) {
      if (w.start > t) words.intervals.push_back({"", t, w.start});
      words.intervals.push_back(w);
      t = w.end;
    }
    if (t < dur) words.intervals.push_back({"", t, dur});
    TextGridTier phones{"phones", "IntervalTier", 0.0, dur, {}};
    for (const auto& p : stim.speech.alignment->entries) {
      phones.intervals.push_back({p.label == "sil" ? "" : p.label, p.start, p.end});
    }
    tg.tiers = {words, phones};
    write_textgrid(out_dir / "alignments" / (stim.id + ".TextGrid"), tg);
    stimuli.push_back(std::move(stim));
  }
  truth["word_counts"] = word_counts;

  Manifest m;
  m.base_dir = out_dir;
  for (int64_t s = 0; s < spec.n_subjects; ++s) {
    const auto subject = make_subject(pad_id("S", s, 2), spec.eeg_channels, rng);
    truth["subjects"][subject.id] = {{"gain", subject.gain},
                                     {"envelope_weight", subject.envelope_weight},
                                     {"onset_weight", subject.onset_weight},
                                     {"lag_samples", subject.lag},
                                     {"noise_std", spec.noise_std},
                                     {"line_noise", spec.line_noise}};
    for (const auto& stim : stimuli) {
      const auto rec = simulate_eeg(subject, stim, labels, spec, rng);
      const std::string eeg_rel = "eeg/" + subject.id + "_" + stim.id + ".f32";
      dsp::write_eeg(out_dir / eeg_rel, rec);
      ManifestRow row;
      row.subject_id = subject.id;
      row.stimulus_id = stim.id;
      row.eeg_path = eeg_rel;
      row.audio_path = "audio/" + stim.id + ".wav";
      row.transcript = stim.speech.transcript;
      row.alignment_path = "alignments/" + stim.id + ".TextGrid";
      m.rows.push_back(std::move(row));
    }
  }

  std::set<std::string> held_subjects, held_stimuli;
  for (int64_t s = spec.n_subjects - spec.held_out_subjects; s < spec.n_subjects; ++s) {
    if (s >= 0) held_subjects.insert(pad_id("S", s, 2));
  }
  for (int64_t k = spec.n_stimuli - spec.held_out_stimuli; k < spec.n_stimuli; ++k) {
    if (k >= 0) held_stimuli.insert(pad_id("stim", k, 3));
  }
  SyntheticCorpus out;
  out.manifest = build_splits(m, held_subjects, held_stimuli);
  out.manifest_path = out_dir / "manifest.csv";
  write_manifest(out.manifest, out.manifest_path);
  out.truth = truth;
  std::ofstream(out_dir / "synthetic_truth.json") << truth.dump(2) << "\n";
  return out;
}

}  // namespace e2s::data
