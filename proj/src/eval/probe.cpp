#include "e2s/eval/probe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "e2s/error.hpp"

namespace e2s::eval {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

EegRecording channel_subset(const EegRecording& x, const std::vector<std::string>& regions,
                            const RegionMap& map) {
  if (regions.empty()) throw InvalidSelection("no regions selected");
  if (std::find(regions.begin(), regions.end(), "all") != regions.end()) return x;
  std::set<std::string> wanted;
  for (const auto& r : regions) {
    auto it = map.find(r);
    if (it == map.end()) throw InvalidSelection("unknown region '" + r + "'");
    for (const auto& label : it->second) wanted.insert(lower(label));
  }
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < x.channel_labels.size(); ++c) {
    if (wanted.contains(lower(x.channel_labels[c]))) keep.push_back(c);
  }
  if (keep.empty()) throw InvalidSelection("region selection leaves no channels");

  EegRecording out;
  out.fs = x.fs;
  out.subject_id = x.subject_id;
  out.stimulus_id = x.stimulus_id;
  out.samples = Matrix(keep.size(), x.n_timesteps());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto src = x.samples.row(keep[k]);
    std::copy(src.begin(), src.end(), out.samples.row(k).begin());
    out.channel_labels.push_back(x.channel_labels[keep[k]]);
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c) || ch == '\'') {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> top_nouns(const std::vector<std::string>& transcripts,
                                   const data::Lexicon& lexicon, std::size_t k) {
  std::set<std::string> nouns;
  for (const auto& e : lexicon) {
    if (e.pos == "NOUN") nouns.insert(lower(e.word));
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& t : transcripts) {
    for (const auto& w : tokenize(t)) {
      if (nouns.contains(w)) ++counts[w];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].first);
  return out;
}

bool contains_keyword(const std::string& transcript, const std::set<std::string>& keywords) {
  for (const auto& w : tokenize(transcript)) {
    if (keywords.contains(w)) return true;
  }
  return false;
}

F1Scores f1_scores(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) throw InvalidInput("F1 inputs differ in length");
  auto class_f1 = [&](int cls) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == cls, p = pred[i] == cls;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    const auto denom = static_cast<double>(2 * tp + fp + fn);
    return denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  };
  F1Scores s;
  s.positive = class_f1(1);
  s.macro = 0.5 * (s.positive + class_f1(0));
  return s;
}

std::vector<double> mean_pool(const Matrix& embedding) {
  std::vector<double> out(embedding.rows(), 0.0);
  if (embedding.cols() == 0) throw InvalidInput("cannot pool an empty embedding");
  for (std::size_t d = 0; d < embedding.rows(); ++d) {
    for (double v : embedding.row(d)) out[d] += v;
    out[d] /= static_cast<double>(embedding.cols());
  }
  return out;
}

void LinearProbe::fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  if (x.empty() || x.size() != y.size()) throw InvalidInput("probe needs matching, non-empty data");
  const std::size_t n = x.size(), d = x[0].size();
  for (const auto& r : x) {
    if (r.size() != d) throw InvalidInput("probe features have differing lengths");
  }
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) mean_[j] += r[j];
  }
  for (auto& m : mean_) m /= static_cast<double>(n);
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) scale_[j] += (r[j] - mean_[j]) * (r[j] - mean_[j]);
  }
  for (auto& s : scale_) {
    s = std::sqrt(s / static_cast<double>(n));
    s = s > 1e-12 ? 1.0 / s : 0.0;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z[i][j] = (x[i][j] - mean_[j]) * scale_[j];
  }

  w_.assign(d, 0.0);
  b_ = 0.0;
  std::vector<double> gw(d);
  for (int it = 0; it < opt_.iterations; ++it) {
    std::fill(gw.begin(), gw.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = b_;
      for (std::size_t j = 0; j < d; ++j) s += w_[j] * z[i][j];
      const double err = 1.0 / (1.0 + std::exp(-s)) - static_cast<double>(y[i]);
      for (std::size_t j = 0; j < d; ++j) gw[j] += err * z[i][j];
      gb += err;
    }
    for (std::size_t j = 0; j < d; ++j) {
      w_[j] -= opt_.learning_rate * (gw[j] / static_cast<double>(n) + opt_.l2 * w_[j]);
    }
    b_ -= opt_.learning_rate * gb / static_cast<double>(n);
  }
}

double LinearProbe::probability(const std::vector<double>& x) const {
  if (x.size() != w_.size()) throw InvalidInput("probe feature length mismatch");
  double s = b_;
  for (std::size_t j = 0; j < x.size(); ++j) s += w_[j] * (x[j] - mean_[j]) * scale_[j];
  return 1.0 / (1.0 + std::exp(-s));
}

nlohmann::json WordspotReport::to_json() const {
  nlohmann::json j;
  j["keywords"] = keywords;
  auto& s = j["splits"] = nlohmann::json::array();
  for (const auto& r : splits) {
    nlohmann::json e{{"split", r.split}, {"n", r.n}, {"n_positive", r.n_positive}};
    if (r.f1) {
      e["f1_macro"] = r.f1->macro;
      e["f1_positive"] = r.f1->positive;
    } else {
      e["f1_macro"] = nullptr;
      e["f1_positive"] = nullptr;
      e["note"] = "undefined: single-class split";
    }
    s.push_back(e);
  }
  return j;
}

WordspotReport wordspot_probe(const std::vector<ProbeExample>& examples,
                              const std::vector<std::string>& keywords,
                              LinearProbe::Options options) {
  const std::set<std::string> kw(keywords.begin(), keywords.end());
  std::vector<std::vector<double>> train_x;
  std::vector<int> train_y;
  std::map<std::string, std::vector<std::size_t>> tests;
  std::vector<std::vector<double>> pooled(examples.size());
  std::vector<int> labels(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    pooled[i] = mean_pool(examples[i].embedding);
    labels[i] = contains_keyword(examples[i].transcript, kw) ? 1 : 0;
    if (examples[i].split == "train") {
      train_x.push_back(pooled[i]);
      train_y.push_back(labels[i]);
    } else {
      tests[examples[i].split].push_back(i);
    }
  }
  if (train_x.empty()) throw InvalidInput("word-spotting probe needs training examples");

  WordspotReport report;
  report.keywords = keywords;
  const bool train_ok = std::count(train_y.begin(), train_y.end(), 1) > 0 &&
                        std::count(train_y.begin(), train_y.end(), 0) > 0;
  LinearProbe probe(options);
  if (train_ok) probe.fit(train_x, train_y);
  for (const auto& [split, idx] : tests) {
    SplitF1 r;
    r.split = split;
    r.n = idx.size();
    std::vector<int> truth, pred;
    for (auto i : idx) {
      truth.push_back(labels[i]);
      if (train_ok) pred.push_back(probe.predict(pooled[i]));
    }
    r.n_positive = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
    if (train_ok && r.n_positive > 0 && r.n_positive < r.n) r.f1 = f1_scores(truth, pred);
    report.splits.push_back(r);
  }
  return report;
}

}  // namespace e2s::eval
