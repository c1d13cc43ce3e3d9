#include "e2s/data/manifest.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "e2s/error.hpp"

namespace e2s::data {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kRequired{"subject_id", "stimulus_id", "eeg_path",
                                         "audio_path", "transcript", "split"};

// RFC 4180 style: fields may be quoted, quotes doubled inside quotes.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw DataError("unterminated quote in CSV line: " + line);
  out.push_back(field);
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string format_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::UnseenAudio: return "unseen-audio";
    case Split::UnseenSubject: return "unseen-subject";
    case Split::UnseenBoth: return "unseen-both";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  for (auto v : {Split::Train, Split::UnseenAudio, Split::UnseenSubject, Split::UnseenBoth}) {
    if (s == to_string(v)) return v;
  }
  throw DataError("unknown split '" + s + "'");
}

const std::vector<Split>& test_splits() {
  static const std::vector<Split> v{Split::UnseenAudio, Split::UnseenSubject, Split::UnseenBoth};
  return v;
}

fs::path Manifest::resolve(const std::string& relative) const {
  const fs::path p(relative);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<std::size_t> Manifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].split == s) out.push_back(i);
  }
  return out;
}

void Manifest::validate(bool check_paths) const {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : rows) {
    if (!seen.emplace(r.subject_id, r.stimulus_id).second) {
      throw DataError("duplicate manifest row " + r.id());
    }
    if (!check_paths) continue;
    for (const auto* p : {&r.eeg_path, &r.audio_path}) {
      if (!fs::exists(resolve(*p))) throw DataError("row " + r.id() + ": missing file " + *p);
    }
    if (!r.alignment_path.empty() && !fs::exists(resolve(r.alignment_path))) {
      throw DataError("row " + r.id() + ": missing file " + r.alignment_path);
    }
  }
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest " + path.string() + " is empty");
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& name : kRequired) {
    if (!col.count(name)) throw DataError("manifest is missing column '" + name + "'");
  }

  Manifest m;
  m.base_dir = path.parent_path();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError("manifest line " + std::to_string(line_no) + " has " +
                      std::to_string(f.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    auto field = [&](const std::string& name) -> std::string {
      auto it = col.find(name);
      return it == col.end() ? std::string() : f[it->second];
    };
    ManifestRow r;
    r.subject_id = field("subject_id");
    r.stimulus_id = field("stimulus_id");
    r.eeg_path = field("eeg_path");
    r.audio_path = field("audio_path");
    r.transcript = field("transcript");
    r.split = parse_split(field("split"));
    r.alignment_path = field("alignment_path");
    try {
      if (!field("onset").empty()) r.onset = std::stod(field("onset"));
      if (!field("offset").empty()) r.offset = std::stod(field("offset"));
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(line_no) + ": bad onset/offset");
    }
    m.rows.push_back(std::move(r));
  }
  m.validate(false);
  return m;
}

void write_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "subject_id,stimulus_id,eeg_path,audio_path,transcript,split,alignment_path,onset,"
         "offset\n";
  for (const auto& r : m.rows) {
    out << quote(r.subject_id) << ',' << quote(r.stimulus_id) << ',' << quote(r.eeg_path) << ','
        << quote(r.audio_path) << ',' << quote(r.transcript) << ',' << to_string(r.split) << ','
        << quote(r.alignment_path) << ',' << format_optional(r.onset) << ','
        << format_optional(r.offset) << '\n';
  }
}

Manifest build_splits(const Manifest& m, const std::set<std::string>& held_out_subjects,
                      const std::set<std::string>& held_out_stimuli) {
  std::set<std::string> subjects, stimuli;
  for (const auto& r : m.rows) {
    subjects.insert(r.subject_id);
    stimuli.insert(r.stimulus_id);
  }
  for (const auto& s : held_out_subjects) {
    if (!subjects.count(s)) throw InvalidSplit("held-out subject '" + s + "' not in manifest");
  }
  for (const auto& s : held_out_stimuli) {
    if (!stimuli.count(s)) throw InvalidSplit("held-out stimulus '" + s + "' not in manifest");
  }
  if (!held_out_subjects.empty() && held_out_subjects.size() == subjects.size()) {
    throw InvalidSplit("holding out every subject leaves no training subject");
  }
  if (!held_out_stimuli.empty() && held_out_stimuli.size() == stimuli.size()) {
    throw InvalidSplit("holding out every stimulus leaves no training stimulus");
  }

  Manifest out = m;
  for (auto& r : out.rows) {
    const bool subj = held_out_subjects.count(r.subject_id) > 0;
    const bool stim = held_out_stimuli.count(r.stimulus_id) > 0;
    r.split = subj && stim ? Split::UnseenBoth
              : subj       ? Split::UnseenSubject
              : stim       ? Split::UnseenAudio
                           : Split::Train;
  }
  return out;
}

}  // namespace e2s::data
