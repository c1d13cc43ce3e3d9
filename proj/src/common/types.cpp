#include "e2s/types.hpp"

#include <cmath>
#include <set>

#include "e2s/error.hpp"

namespace e2s {

void PhonemeAlignment::validate() const {
  double previous_end = -INFINITY;
  for (const auto& e : entries) {
    if (!(e.end > e.start)) {
      throw InvalidInput("phoneme interval '" + e.label + "' has end <= start");
    }
    if (e.start < previous_end - 1e-9) {
      throw InvalidInput("phoneme intervals overlap or are out of order at '" +
                         e.label + "'");
    }
    previous_end = e.end;
  }
}

void EegRecording::validate() const {
  if (n_channels() < 1) throw InvalidInput("EEG recording has no channels");
  if (!(fs > 0.0)) throw InvalidInput("EEG sampling rate must be positive");
  if (channel_labels.size() != n_channels()) {
    throw InvalidInput("EEG channel label count does not match channel count");
  }
  std::set<std::string> seen(channel_labels.begin(), channel_labels.end());
  if (seen.size() != channel_labels.size()) {
    throw InvalidInput("EEG channel labels are not unique");
  }
  for (double v : samples.data()) {
    if (!std::isfinite(v)) throw InvalidInput("EEG samples contain non-finite values");
  }
}

void SpeechUtterance::validate() const {
  if (!(fs > 0.0)) throw InvalidInput("audio sampling rate must be positive");
  for (double v : waveform) {
    if (!std::isfinite(v)) throw InvalidInput("waveform contains non-finite values");
  }
  if (alignment) alignment->validate();
}

}  // namespace e2s
