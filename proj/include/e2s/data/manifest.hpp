#pragma once

// Paired EEG/audio manifest (CSV with header, paths relative to the
// manifest file) and the three-way unseen split design.

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace e2s::data {

enum class Split { Train, UnseenAudio, UnseenSubject, UnseenBoth };

std::string to_string(Split s);  // "train", "unseen-audio", ...
Split parse_split(const std::string& s);
const std::vector<Split>& test_splits();

struct ManifestRow {
  std::string subject_id;
  std::string stimulus_id;
  std::string eeg_path;
  std::string audio_path;
  std::string transcript;
  Split split = Split::Train;
  std::string alignment_path;  // optional TextGrid
  std::optional<double> onset;   // seconds into the EEG file, real data only
  std::optional<double> offset;

  std::string id() const { return subject_id + "/" + stimulus_id; }
};

struct Manifest {
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  // directory relative paths resolve against

  std::filesystem::path resolve(const std::string& relative) const;
  std::vector<std::size_t> indices(Split s) const;

  // (subject, stimulus) unique; with check_paths, every referenced file
  // exists. Throws DataError.
  void validate(bool check_paths) const;
};

// Columns: subject_id, stimulus_id, eeg_path, audio_path, transcript, split
// and optionally alignment_path, onset, offset. Throws DataError.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

// Relabels every row: held-out stimulus with a training subject is
// unseen-audio, held-out subject with a training stimulus is unseen-subject,
// both held out is unseen-both, the rest is train. Throws InvalidSplit when
// a held-out id does not occur in the manifest or when holding out leaves
// no training subject or no training stimulus.
Manifest build_splits(const Manifest& m, const std::set<std::string>& held_out_subjects,
                      const std::set<std::string>& held_out_stimuli);

}  // namespace e2s::data
