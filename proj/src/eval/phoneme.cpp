#include "e2s/eval/phoneme.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "e2s/error.hpp"

namespace e2s::eval {

std::string strip_stress(const std::string& phone) {
  std::string out;
  for (char c : phone) {
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

bool is_silence(const std::string& label) {
  const auto p = strip_stress(label);
  return p.empty() || p == "SIL" || p == "SP" || p == "SPN";
}

PhonemeGroupTable PhonemeGroupTable::from_json(const nlohmann::json& j) {
  PhonemeGroupTable t;
  if (!j.is_object() || !j.contains("axes") || !j["axes"].is_object()) {
    throw ConfigError("phoneme table needs an \"axes\" object");
  }
  for (const auto& [axis, groups] : j["axes"].items()) {
    if (!groups.is_object()) throw ConfigError("phoneme axis '" + axis + "' must be an object");
    for (const auto& [group, phones] : groups.items()) {
      if (!phones.is_array()) {
        throw ConfigError("phoneme group '" + axis + "/" + group + "' must be a list");
      }
      for (const auto& p : phones) {
        const auto phone = strip_stress(p.get<std::string>());
        auto& slot = t.phone_to_groups_[phone];
        if (slot.contains(axis)) {
          throw ConfigError("phone " + phone + " appears twice on axis '" + axis + "'");
        }
        slot[axis] = group;
        t.axes_[axis][group].push_back(phone);
      }
    }
  }
  return t;
}

PhonemeGroupTable PhonemeGroupTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open phoneme table " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed phoneme table " + path.string() + ": " + e.what());
  }
}

std::filesystem::path PhonemeGroupTable::default_path() {
  return std::filesystem::path(E2S_DATA_DIR) / "phoneme_groups.json";
}

std::map<std::string, std::string> PhonemeGroupTable::lookup(const std::string& phone) const {
  auto it = phone_to_groups_.find(strip_stress(phone));
  return it == phone_to_groups_.end() ? std::map<std::string, std::string>{} : it->second;
}

bool PhonemeGroupTable::contains(const std::string& phone) const {
  return phone_to_groups_.contains(strip_stress(phone));
}

std::vector<std::string> PhonemeGroupTable::axes() const {
  std::vector<std::string> out;
  for (const auto& [a, g] : axes_) out.push_back(a);
  return out;
}

std::vector<std::string> PhonemeGroupTable::groups(const std::string& axis) const {
  std::vector<std::string> out;
  if (auto it = axes_.find(axis); it != axes_.end()) {
    for (const auto& [g, p] : it->second) out.push_back(g);
  }
  return out;
}

std::vector<SegmentMetrics> phoneme_segments(const PhonemeItem& item, int n_mcc,
                                             const dsp::DspConfig& dsp) {
  const auto ref_mel = dsp::mel_spectrogram(item.ref, dsp.stft, dsp.mel);
  const auto gen_mel = dsp::mel_spectrogram(item.gen, dsp.stft, dsp.mel);
  const auto frame_mcd =
      mcd_frames(dsp::mcc_from_mel(ref_mel, n_mcc), dsp::mcc_from_mel(gen_mel, n_mcc));
  const double frame_dt = static_cast<double>(dsp.stft.hop_size) / dsp.stft.fs;
  const std::size_t n_frames = ref_mel.n_frames();

  std::vector<SegmentMetrics> out;
  for (const auto& e : item.alignment.entries) {
    // first frame with centre >= start, first with centre >= end
    auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(e.start / frame_dt - 1e-9)));
    auto last = static_cast<std::size_t>(std::max(0.0, std::ceil(e.end / frame_dt - 1e-9)));
    first = std::min(first, n_frames);
    last = std::min(last, n_frames);
    if (last <= first) continue;

    SegmentMetrics s;
    s.id = item.id;
    s.phone = e.label;
    s.first_frame = first;
    s.n_frames = last - first;
    double sum = 0.0;
    for (std::size_t t = first; t < last; ++t) sum += frame_mcd[t];
    s.mcd = sum / static_cast<double>(s.n_frames);

    const std::size_t gen_last = std::min(last, gen_mel.n_frames());
    if (gen_last > first) {
      const std::size_t w = gen_last - first;
      Matrix a(ref_mel.n_bins(), w), b(ref_mel.n_bins(), w);
      for (std::size_t k = 0; k < ref_mel.n_bins(); ++k) {
        for (std::size_t t = 0; t < w; ++t) {
          a(k, t) = ref_mel.values(k, first + t);
          b(k, t) = gen_mel.values(k, first + t);
        }
      }
      try {
        s.mel_corr = pearson_percent(a, b);
      } catch (const UndefinedCorrelation&) {
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

PhonemeReport phoneme_report(const std::vector<PhonemeItem>& items,
                             const PhonemeGroupTable& table, int n_mcc,
                             const dsp::DspConfig& dsp) {
  PhonemeReport report;
  std::vector<std::vector<SegmentMetrics>> per_item(items.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < items.size(); ++i) per_item[i] = phoneme_segments(items[i], n_mcc, dsp);
  for (auto& v : per_item) {
    for (auto& s : v) report.segments.push_back(std::move(s));
  }

  struct Acc {
    std::vector<double> mcd, corr;
    double weighted = 0.0;
    std::size_t frames = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  Acc unmapped;
  for (const auto& s : report.segments) {
    if (is_silence(s.phone)) continue;
    auto add = [&](Acc& a) {
      a.mcd.push_back(s.mcd);
      if (s.mel_corr) a.corr.push_back(*s.mel_corr);
      a.weighted += s.mcd * static_cast<double>(s.n_frames);
      a.frames += s.n_frames;
    };
    const auto groups = table.lookup(s.phone);
    if (groups.empty()) {
      add(unmapped);
      continue;
    }
    for (const auto& [axis, group] : groups) {
      if (group != "excluded") add(acc[{axis, group}]);
    }
  }
  auto emit = [&](const std::string& axis, const std::string& group, const Acc& a) {
    GroupMetrics g;
    g.axis = axis;
    g.group = group;
    g.n_segments = a.mcd.size();
    g.n_frames = a.frames;
    g.mcd = a.frames ? a.weighted / static_cast<double>(a.frames) : 0.0;
    g.mcd_segments = summarize(a.mcd);
    g.mel_corr = summarize(a.corr);
    report.groups.push_back(g);
  };
  for (const auto& [key, a] : acc) emit(key.first, key.second, a);
  if (!unmapped.mcd.empty()) emit("unmapped", "unmapped", unmapped);
  return report;
}

nlohmann::json PhonemeReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& g : groups) {
    j.push_back({{"axis", g.axis},
                 {"group", g.group},
                 {"n_segments", g.n_segments},
                 {"n_frames", g.n_frames},
                 {"mcd_db", g.mcd},
                 {"mcd_ci", {g.mcd_segments.ci_low, g.mcd_segments.ci_high}},
                 {"mel_corr_percent", g.mel_corr.mean},
                 {"mel_corr_ci", {g.mel_corr.ci_low, g.mel_corr.ci_high}},
                 {"mel_corr_n", g.mel_corr.n}});
  }
  return {{"groups", j}};
}

void PhonemeReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "axis,group,n_segments,n_frames,mcd_db,mcd_ci_low,mcd_ci_high,mel_corr_percent,"
         "mel_corr_ci_low,mel_corr_ci_high\n";
  for (const auto& g : groups) {
    out << g.axis << ',' << g.group << ',' << g.n_segments << ',' << g.n_frames << ',' << g.mcd
        << ',' << g.mcd_segments.ci_low << ',' << g.mcd_segments.ci_high << ','
        << g.mel_corr.mean << ',' << g.mel_corr.ci_low << ',' << g.mel_corr.ci_high << '\n';
  }
}

void write_group_svg(const PhonemeReport& report, const std::filesystem::path& path) {
  std::map<std::string, std::vector<const GroupMetrics*>> by_axis;
  double top = 1e-9;
  for (const auto& g : report.groups) {
    by_axis[g.axis].push_back(&g);
    top = std::max({top, g.mcd, g.mcd_segments.ci_high});
  }
  const int panel_h = 180, bar_w = 36, gap = 12, left = 50;
  std::size_t widest = 1;
  for (const auto& [a, v] : by_axis) widest = std::max(widest, v.size());
  const int width = left + static_cast<int>(widest) * (bar_w + gap) + 20;
  const int height = static_cast<int>(by_axis.size()) * (panel_h + 50) + 20;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  int y0 = 20;
  for (const auto& [axis, groups] : by_axis) {
    svg << "<text x=\"4\" y=\"" << y0 + 10 << "\" font-weight=\"bold\">" << axis
        << " (MCD dB)</text>\n";
    const int base = y0 + panel_h;
    svg << "<line x1=\"" << left << "\" y1=\"" << base << "\" x2=\"" << width - 10 << "\" y2=\""
        << base << "\" stroke=\"black\"/>\n";
    int x = left + gap;
    for (const auto* g : groups) {
      const double h = (panel_h - 20) * g->mcd / top;
      svg << "<rect x=\"" << x << "\" y=\"" << base - h << "\" width=\"" << bar_w << "\" height=\""
          << h << "\" fill=\"#4c72b0\"/>\n";
      const double lo = base - (panel_h - 20) * std::max(0.0, g->mcd_segments.ci_low) / top;
      const double hi = base - (panel_h - 20) * g->mcd_segments.ci_high / top;
      svg << "<line x1=\"" << x + bar_w / 2 << "\" y1=\"" << lo << "\" x2=\"" << x + bar_w / 2
          << "\" y2=\"" << hi << "\" stroke=\"black\"/>\n";
      svg << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << base + 14
          << "\" text-anchor=\"middle\">" << g->group << "</text>\n";
      x += bar_w + gap;
    }
    y0 += panel_h + 50;
  }
  svg << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << svg.str();
}

}  // namespace e2s::eval
