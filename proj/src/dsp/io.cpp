#include "e2s/dsp/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "e2s/error.hpp"

namespace e2s::dsp {

namespace fs = std::filesystem;

namespace {

template <typename T>
T from_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

template <typename T>
void put_le(std::ostream& os, T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

SpeechUtterance read_wav(const fs::path& path) {
  const auto bytes = slurp(path);
  auto fail = [&](const std::string& why) {
    return DataError(path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const auto size = from_le<std::uint32_t>(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    const std::size_t avail = bytes.size() - pos - 8;
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0 && size >= 16 && avail >= 16) {
      format = from_le<std::uint16_t>(body);
      channels = from_le<std::uint16_t>(body + 2);
      rate = from_le<std::uint32_t>(body + 4);
      bits = from_le<std::uint16_t>(body + 14);
      if (format == 0xFFFE && size >= 26) format = from_le<std::uint16_t>(body + 24);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_size = std::min<std::size_t>(size, avail);
      break;
    }
    pos += 8 + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) throw fail("only 16-bit PCM and 32-bit float WAV are supported");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * bits / 8;
  const std::size_t n = data_size / frame_bytes;
  SpeechUtterance u;
  u.fs = rate;
  u.waveform.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data + i * frame_bytes + c * bits / 8;
      acc += pcm16 ? from_le<std::int16_t>(p) / 32768.0
                   : static_cast<double>(from_le<float>(p));
    }
    u.waveform[i] = acc / channels;
  }
  u.validate();
  return u;
}

void write_wav(const fs::path& path, std::span<const double> samples, int fs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs) * 2);
  put_le<std::uint16_t>(out, 2);
  put_le<std::uint16_t>(out, 16);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_bytes);
  for (double v : samples) {
    // same scale as read_wav, so a round trip is off by half a step at most
    const long q = std::clamp(std::lround(std::clamp(v, -1.0, 1.0) * 32768.0), -32768L, 32767L);
    put_le<std::int16_t>(out, static_cast<std::int16_t>(q));
  }
}

fs::path eeg_sidecar_path(const fs::path& path) {
  fs::path side = path;
  side.replace_extension(".json");
  return side;
}

EegRecording read_eeg(const fs::path& path) {
  const fs::path side = eeg_sidecar_path(path);
  std::ifstream meta_in(side);
  if (!meta_in) throw DataError("missing EEG sidecar " + side.string());
  nlohmann::json meta;
  try {
    meta_in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(side.string() + ": " + e.what());
  }

  EegRecording rec;
  try {
    rec.fs = meta.at("fs").get<double>();
    rec.channel_labels = meta.at("channel_labels").get<std::vector<std::string>>();
    rec.subject_id = meta.value("subject_id", "");
    rec.stimulus_id = meta.value("stimulus_id", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(side.string() + ": " + e.what());
  }
  const std::size_t n_ch = rec.channel_labels.size();
  if (n_ch == 0) throw DataError(side.string() + ": no channel labels");

  const auto ext = path.extension().string();
  if (ext == ".f32") {
    const auto bytes = slurp(path);
    if (bytes.size() % (4 * n_ch) != 0) {
      throw DataError(path.string() + ": size is not a multiple of channels x float32");
    }
    const std::size_t n_t = bytes.size() / (4 * n_ch);
    rec.samples = Matrix(n_ch, n_t);
    for (std::size_t i = 0; i < n_ch * n_t; ++i) {
      rec.samples.data()[i] = from_le<float>(&bytes[4 * i]);
    }
  } else {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<double> values;
    std::string line;
    std::size_t n_t = 0;
    while (std::getline(in, line)) {
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      std::size_t count = 0;
      double v;
      while (ls >> v) {
        values.push_back(v);
        ++count;
      }
      if (count == 0) continue;
      if (count != n_ch) {
        throw DataError(path.string() + ": row " + std::to_string(n_t + 1) + " has " +
                        std::to_string(count) + " columns, expected " +
                        std::to_string(n_ch));
      }
      ++n_t;
    }
    rec.samples = Matrix(n_ch, n_t);
    for (std::size_t t = 0; t < n_t; ++t) {
      for (std::size_t c = 0; c < n_ch; ++c) rec.samples(c, t) = values[t * n_ch + c];
    }
  }
  try {
    rec.validate();
  } catch (const InvalidInput& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return rec;
}

void write_eeg(const fs::path& path, const EegRecording& rec) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (double v : rec.samples.data()) put_le<float>(out, static_cast<float>(v));

  nlohmann::ordered_json meta;
  meta["fs"] = rec.fs;
  meta["channel_labels"] = rec.channel_labels;
  meta["subject_id"] = rec.subject_id;
  meta["stimulus_id"] = rec.stimulus_id;
  meta["n_channels"] = rec.n_channels();
  meta["n_samples"] = rec.n_timesteps();
  meta["layout"] = "channel-major";
  meta["dtype"] = "float32-le";
  std::ofstream side(eeg_sidecar_path(path));
  side << meta.dump(2) << '\n';
}

}  // namespace e2s::dsp
