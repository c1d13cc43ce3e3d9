#include "e2s/data/textgrid.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <variant>

#include "e2s/error.hpp"

namespace e2s::data {

namespace {

using Value = std::variant<double, std::string>;

// Keeps only quoted strings and free-standing numbers. Keys ("xmin ="),
// bracketed indices ("[3]") and flags ("<exists>") are dropped, which makes
// the long and short formats produce the same value stream.
std::vector<Value> tokenize(const std::string& s) {
  std::vector<Value> out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '"') {
      std::string str;
      ++i;
      while (i < n) {
        if (s[i] == '"') {
          if (i + 1 < n && s[i + 1] == '"') {
            str += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        str += s[i++];
      }
      out.emplace_back(std::move(str));
    } else if (c == '[') {
      while (i < n && s[i] != ']') ++i;
      ++i;
    } else if (c == '<') {
      while (i < n && s[i] != '>') ++i;
      ++i;
    } else if (c == '!') {
      while (i < n && s[i] != '\n') ++i;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s.substr(i, 64), &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0) {
        ++i;
        continue;
      }
      out.emplace_back(v);
      i += used;
    } else {
      while (i < n && !std::isspace(static_cast<unsigned char>(s[i])) && s[i] != '"') ++i;
    }
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::vector<Value> v) : v_(std::move(v)) {}

  double number() {
    if (pos_ >= v_.size() || !std::holds_alternative<double>(v_[pos_])) {
      throw DataError("TextGrid: expected a number at value " + std::to_string(pos_));
    }
    return std::get<double>(v_[pos_++]);
  }
  std::string text() {
    if (pos_ >= v_.size() || !std::holds_alternative<std::string>(v_[pos_])) {
      throw DataError("TextGrid: expected a string at value " + std::to_string(pos_));
    }
    return std::get<std::string>(v_[pos_++]);
  }

 private:
  std::vector<Value> v_;
  std::size_t pos_ = 0;
};

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string quote(const std::string& s) {
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

const TextGridTier* TextGrid::tier(const std::string& name) const {
  for (const auto& t : tiers) {
    if (lower(t.name) == lower(name)) return &t;
  }
  return nullptr;
}

TextGrid parse_textgrid(const std::string& text) {
  Reader r(tokenize(text));
  if (r.text() != "ooTextFile") throw DataError("TextGrid: not an ooTextFile");
  if (r.text() != "TextGrid") throw DataError("TextGrid: object class is not TextGrid");
  TextGrid tg;
  tg.xmin = r.number();
  tg.xmax = r.number();
  const auto n_tiers = static_cast<std::size_t>(r.number());
  for (std::size_t t = 0; t < n_tiers; ++t) {
    TextGridTier tier;
    tier.tier_class = r.text();
    tier.name = r.text();
    tier.xmin = r.number();
    tier.xmax = r.number();
    const auto n = static_cast<std::size_t>(r.number());
    const bool points = tier.tier_class == "TextTier";
    for (std::size_t k = 0; k < n; ++k) {
      PhonemeInterval iv;
      iv.start = r.number();
      iv.end = points ? iv.start : r.number();
      iv.label = r.text();
      tier.intervals.push_back(std::move(iv));
    }
    tg.tiers.push_back(std::move(tier));
  }
  return tg;
}

TextGrid read_textgrid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open TextGrid " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  if (s.size() >= 2 && static_cast<unsigned char>(s[0]) == 0xFE &&
      static_cast<unsigned char>(s[1]) == 0xFF) {
    throw DataError("TextGrid " + path.string() + " is UTF-16; convert to UTF-8 first");
  }
  if (s.size() >= 3 && s.compare(0, 3, "\xEF\xBB\xBF") == 0) s.erase(0, 3);
  try {
    return parse_textgrid(s);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_textgrid(const std::filesystem::path& path, const TextGrid& tg) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write TextGrid " + path.string());
  out.precision(10);
  out << "File type = \"ooTextFile\"\nObject class = \"TextGrid\"\n\n";
  out << "xmin = " << tg.xmin << "\nxmax = " << tg.xmax << "\ntiers? <exists>\n";
  out << "size = " << tg.tiers.size() << "\nitem []:\n";
  for (std::size_t t = 0; t < tg.tiers.size(); ++t) {
    const auto& tier = tg.tiers[t];
    out << "    item [" << t + 1 << "]:\n";
    out << "        class = " << quote(tier.tier_class) << "\n";
    out << "        name = " << quote(tier.name) << "\n";
    out << "        xmin = " << tier.xmin << "\n        xmax = " << tier.xmax << "\n";
    out << "        intervals: size = " << tier.intervals.size() << "\n";
    for (std::size_t k = 0; k < tier.intervals.size(); ++k) {
      const auto& iv = tier.intervals[k];
      out << "        intervals [" << k + 1 << "]:\n";
      out << "            xmin = " << iv.start << "\n            xmax = " << iv.end << "\n";
      out << "            text = " << quote(iv.label) << "\n";
    }
  }
}

PhonemeAlignment phone_alignment(const TextGrid& tg) {
  const TextGridTier* tier = tg.tier("phones");
  if (!tier) tier = tg.tier("phone");
  if (!tier) {
    for (const auto& t : tg.tiers) {
      if (t.tier_class == "IntervalTier") tier = &t;
    }
  }
  if (!tier) throw DataError("TextGrid has no interval tier");
  PhonemeAlignment a;
  for (const auto& iv : tier->intervals) {
    a.entries.push_back({iv.label.empty() ? "sil" : iv.label, iv.start, iv.end});
  }
  a.validate();
  return a;
}

}  // namespace e2s::data
