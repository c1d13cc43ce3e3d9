#pragma once

// Praat TextGrid interval tiers, as produced by forced aligners. Both the
// long ("item [1]: ...") and short text formats are read.

#include <filesystem>
#include <string>
#include <vector>

#include "e2s/types.hpp"

namespace e2s::data {

struct TextGridTier {
  std::string name;
  std::string tier_class;  // "IntervalTier" or "TextTier"
  double xmin = 0.0;
  double xmax = 0.0;
  std::vector<PhonemeInterval> intervals;  // points: start == end
};

struct TextGrid {
  double xmin = 0.0;
  double xmax = 0.0;
  std::vector<TextGridTier> tiers;

  // First tier named exactly `name` (case-insensitive); nullptr if absent.
  const TextGridTier* tier(const std::string& name) const;
};

TextGrid parse_textgrid(const std::string& text);
TextGrid read_textgrid(const std::filesystem::path& path);  // DataError on failure
void write_textgrid(const std::filesystem::path& path, const TextGrid& tg);

// Phone tier ("phones", else "phone", else the last interval tier) as an
// alignment. Empty labels become "sil".
PhonemeAlignment phone_alignment(const TextGrid& tg);

}  // namespace e2s::data
