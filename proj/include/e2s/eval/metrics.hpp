#pragma once

// Objective metrics: mel-cepstral distortion and mel-spectrogram
// correlation, with per-split summaries and 95% confidence intervals.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2s/dsp/frontend.hpp"
#include "e2s/types.hpp"

namespace e2s::eval {

// 10 * sqrt(2) / ln(10)
double mcd_alpha();

// Per-frame alpha * ||ref_t - gen_t||. gen is cropped to the ref frame count
// or padded with zero frames. Throws InvalidInput for zero frames or a
// coefficient-count mismatch.
std::vector<double> mcd_frames(const MccSequence& ref, const MccSequence& gen);
double mcd(const MccSequence& ref, const MccSequence& gen);
double mcd(const SpeechUtterance& ref, const SpeechUtterance& gen, int n_mcc,
           const dsp::DspConfig& dsp = {});

// Pearson r over the flattened log-mel matrices (cropped to the shorter
// one), times 100. Throws UndefinedCorrelation for zero variance.
double mel_corr(const Spectrogram& ref, const Spectrogram& gen);
double mel_corr(const SpeechUtterance& ref, const SpeechUtterance& gen,
                const dsp::DspConfig& dsp = {});
// Same on raw matrices of equal shape.
double pearson_percent(const Matrix& a, const Matrix& b);

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
  double se = 0.0;
  double ci_low = 0.0;  // mean - 1.96 se
  double ci_high = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct UtteranceMetrics {
  std::string id;
  double mcd = 0.0;
  std::optional<double> mel_corr;  // empty when undefined
};

struct MetricReport {
  std::string split;
  std::vector<UtteranceMetrics> rows;
  Summary mcd;
  Summary mel_corr;

  // Recomputes the summaries from rows, ordered by id.
  void finalize();
  nlohmann::json to_json() const;
};

MetricReport evaluate_pairs(const std::string& split,
                            const std::vector<std::pair<std::string, SpeechUtterance>>& refs,
                            const std::vector<SpeechUtterance>& gens, int n_mcc,
                            const dsp::DspConfig& dsp = {});

void write_metric_csv(const std::vector<MetricReport>& reports, const std::filesystem::path& path);

// Relative degradation in percent: for lower-is-better metrics
// (subset - full) / |full|, otherwise (full - subset) / |full|.
double performance_drop(double full, double subset, bool higher_is_better);

}  // namespace e2s::eval
