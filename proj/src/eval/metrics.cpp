#include "e2s/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "e2s/error.hpp"

namespace e2s::eval {

double mcd_alpha() { return 10.0 * std::numbers::sqrt2 / std::numbers::ln10; }

std::vector<double> mcd_frames(const MccSequence& ref, const MccSequence& gen) {
  const std::size_t n = ref.n_frames();
  if (n == 0) throw InvalidInput("MCD needs at least one frame");
  if (ref.coeffs.rows() != gen.coeffs.rows()) {
    throw InvalidInput("MCD inputs have different coefficient counts");
  }
  const std::size_t d = ref.coeffs.rows();
  const std::size_t m = std::min(n, gen.n_frames());
  const double alpha = mcd_alpha();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      // frames past the end of gen count as zero
      const double diff = ref.coeffs(k, t) - (t < m ? gen.coeffs(k, t) : 0.0);
      s += diff * diff;
    }
    out[t] = alpha * std::sqrt(s);
  }
  return out;
}

double mcd(const MccSequence& ref, const MccSequence& gen) {
  const auto f = mcd_frames(ref, gen);
  double s = 0.0;
  for (double v : f) s += v;
  return s / static_cast<double>(f.size());
}

double mcd(const SpeechUtterance& ref, const SpeechUtterance& gen, int n_mcc,
           const dsp::DspConfig& dsp) {
  const auto a = dsp::mcc_from_mel(dsp::mel_spectrogram(ref, dsp.stft, dsp.mel), n_mcc);
  const auto b = dsp::mcc_from_mel(dsp::mel_spectrogram(gen, dsp.stft, dsp.mel), n_mcc);
  return mcd(a, b);
}

double pearson_percent(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput("correlation inputs differ in shape");
  }
  const auto& x = a.data();
  const auto& y = b.data();
  const auto n = static_cast<double>(x.size());
  if (x.empty()) throw UndefinedCorrelation("correlation of empty inputs");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw UndefinedCorrelation("zero-variance input to Mel-Corr");
  return std::clamp(100.0 * sxy / std::sqrt(sxx * syy), -100.0, 100.0);
}

double mel_corr(const Spectrogram& ref, const Spectrogram& gen) {
  if (ref.n_bins() != gen.n_bins()) throw InvalidInput("Mel-Corr inputs differ in bin count");
  const std::size_t t = std::min(ref.n_frames(), gen.n_frames());
  Matrix a(ref.n_bins(), t), b(ref.n_bins(), t);
  for (std::size_t k = 0; k < ref.n_bins(); ++k) {
    for (std::size_t j = 0; j < t; ++j) {
      a(k, j) = ref.values(k, j);
      b(k, j) = gen.values(k, j);
    }
  }
  return pearson_percent(a, b);
}

double mel_corr(const SpeechUtterance& ref, const SpeechUtterance& gen,
                const dsp::DspConfig& dsp) {
  return mel_corr(dsp::mel_spectrogram(ref, dsp.stft, dsp.mel),
                  dsp::mel_spectrogram(gen, dsp.stft, dsp.mel));
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = values.size();
  if (s.n == 0) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(s.n));
  }
  s.ci_low = s.mean - 1.96 * s.se;
  s.ci_high = s.mean + 1.96 * s.se;
  return s;
}

namespace {

nlohmann::json summary_json(const Summary& s) {
  return {{"n", s.n},   {"mean", s.mean},       {"sd", s.sd},
          {"se", s.se}, {"ci_low", s.ci_low}, {"ci_high", s.ci_high}};
}

}  // namespace

void MetricReport::finalize() {
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<double> m, c;
  for (const auto& r : rows) {
    m.push_back(r.mcd);
    if (r.mel_corr) c.push_back(*r.mel_corr);
  }
  mcd = summarize(m);
  mel_corr = summarize(c);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["split"] = split;
  j["mcd_db"] = summary_json(mcd);
  j["mel_corr_percent"] = summary_json(mel_corr);
  auto& items = j["utterances"] = nlohmann::json::array();
  for (const auto& r : rows) {
    items.push_back({{"id", r.id},
                     {"mcd_db", r.mcd},
                     {"mel_corr_percent", r.mel_corr ? nlohmann::json(*r.mel_corr) : nlohmann::json()}});
  }
  return j;
}

MetricReport evaluate_pairs(const std::string& split,
                            const std::vector<std::pair<std::string, SpeechUtterance>>& refs,
                            const std::vector<SpeechUtterance>& gens, int n_mcc,
                            const dsp::DspConfig& dsp) {
  if (refs.size() != gens.size()) throw InvalidInput("reference and generated counts differ");
  MetricReport r;
  r.split = split;
  r.rows.resize(refs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto ref = dsp::mel_spectrogram(refs[i].second, dsp.stft, dsp.mel);
    const auto gen = dsp::mel_spectrogram(gens[i], dsp.stft, dsp.mel);
    auto& row = r.rows[i];
    row.id = refs[i].first;
    row.mcd = mcd(dsp::mcc_from_mel(ref, n_mcc), dsp::mcc_from_mel(gen, n_mcc));
    try {
      row.mel_corr = mel_corr(ref, gen);
    } catch (const UndefinedCorrelation&) {
    }
  }
  r.finalize();
  return r;
}

void write_metric_csv(const std::vector<MetricReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "split,id,mcd_db,mel_corr_percent\n";
  out.precision(10);
  for (const auto& rep : reports) {
    for (const auto& r : rep.rows) {
      out << rep.split << ',' << r.id << ',' << r.mcd << ',';
      if (r.mel_corr) out << *r.mel_corr;
      out << '\n';
    }
  }
}

double performance_drop(double full, double subset, bool higher_is_better) {
  if (full == 0.0) throw InvalidInput("performance drop relative to zero");
  const double delta = higher_is_better ? full - subset : subset - full;
  return 100.0 * delta / std::abs(full);
}

}  // namespace e2s::eval
