#pragma once

// Phoneme-level analysis: MCD and Mel-Corr per aligned phone segment,
// pooled by articulatory group (manner, place, tenseness for consonants;
// height, frontness, tenseness for vowels).

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2s/dsp/frontend.hpp"
#include "e2s/eval/metrics.hpp"
#include "e2s/types.hpp"

namespace e2s::eval {

class PhonemeGroupTable {
 public:
  // {"axes": {axis: {group: [phones]}}}. A group named "excluded" marks
  // phones that take no part in that axis. Throws ConfigError.
  static PhonemeGroupTable from_json(const nlohmann::json& j);
  static PhonemeGroupTable load(const std::filesystem::path& path);
  static std::filesystem::path default_path();

  // Stress digits are ignored. Empty map when the phone is unknown.
  std::map<std::string, std::string> lookup(const std::string& phone) const;
  bool contains(const std::string& phone) const;
  std::vector<std::string> axes() const;
  std::vector<std::string> groups(const std::string& axis) const;

 private:
  std::map<std::string, std::map<std::string, std::vector<std::string>>> axes_;
  std::map<std::string, std::map<std::string, std::string>> phone_to_groups_;
};

std::string strip_stress(const std::string& phone);
// Silence and pause labels (sil, sp, spn, empty) carry no phone.
bool is_silence(const std::string& label);

struct PhonemeItem {
  std::string id;
  SpeechUtterance ref;
  SpeechUtterance gen;
  PhonemeAlignment alignment;  // from the ground-truth audio
};

struct SegmentMetrics {
  std::string id;
  std::string phone;
  std::size_t first_frame = 0;
  std::size_t n_frames = 0;
  double mcd = 0.0;                // mean over the segment's frames
  std::optional<double> mel_corr;  // undefined for constant segments
};

struct GroupMetrics {
  std::string axis;
  std::string group;
  std::size_t n_segments = 0;
  std::size_t n_frames = 0;
  double mcd = 0.0;      // frame-weighted over segments
  Summary mcd_segments;  // spread across segments
  Summary mel_corr;      // over segments with a defined value
};

struct PhonemeReport {
  std::vector<SegmentMetrics> segments;
  std::vector<GroupMetrics> groups;  // axis then group order; "unmapped" last

  nlohmann::json to_json() const;
  void write_csv(const std::filesystem::path& path) const;
};

// Frames whose centres (f * hop / fs) fall in [start, end) form a segment;
// segments without frames are skipped.
std::vector<SegmentMetrics> phoneme_segments(const PhonemeItem& item, int n_mcc,
                                             const dsp::DspConfig& dsp = {});

PhonemeReport phoneme_report(const std::vector<PhonemeItem>& items,
                             const PhonemeGroupTable& table, int n_mcc,
                             const dsp::DspConfig& dsp = {});

// Bar chart of group MCD with CI whiskers, one panel per axis.
void write_group_svg(const PhonemeReport& report, const std::filesystem::path& path);

}  // namespace e2s::eval
