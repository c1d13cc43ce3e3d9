#pragma once

#include <filesystem>
#include <span>

#include "e2s/types.hpp"

namespace e2s::dsp {

// Mono PCM WAV, 16-bit integer or 32-bit float. Multichannel files are
// averaged down to mono. Throws DataError on anything else.
SpeechUtterance read_wav(const std::filesystem::path& path);

// 16-bit PCM, samples clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, std::span<const double> samples, int fs);

// EEG arrays: a little-endian float32 file ("*.f32", channel-major) or a
// column text file ("*.txt"/"*.csv", one row per time step, one column per
// channel), each with a JSON sidecar next to it ("<stem>.json") holding
// fs, channel_labels, subject_id and stimulus_id.
EegRecording read_eeg(const std::filesystem::path& path);
void write_eeg(const std::filesystem::path& path, const EegRecording& rec);

std::filesystem::path eeg_sidecar_path(const std::filesystem::path& path);

}  // namespace e2s::dsp
