#pragma once

// Joint training of the EEG module, speech module and connector under one
// of the five training configurations, plus EEG-only pretraining and the
// EEG -> waveform inference path.

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "e2s/config.hpp"
#include "e2s/data/dataset.hpp"
#include "e2s/train/model.hpp"
#include "e2s/types.hpp"

namespace e2s::train {

struct LossReport {
  double L_EEG = 0.0;
  double L_mel = 0.0;
  double L_KL = 0.0;
  double L_adv_g = 0.0;
  double L_adv_d = 0.0;
  double L_fm = 0.0;
  double total = 0.0;  // generator-side objective actually optimised

  std::map<std::string, double> terms() const;  // the six L_* entries
};

struct TrainState {
  RunConfig cfg;
  Model model{nullptr};
  TrainableGroups groups;
  std::unique_ptr<torch::optim::AdamW> opt_g;  // EEG, speech and connector
  std::unique_ptr<torch::optim::AdamW> opt_d;  // discriminator, when trained
  int64_t iteration = 0;
  std::string sampler_state;

  double learning_rate() const;
  // Puts trainable groups in train mode and frozen ones in eval mode.
  void set_training(bool training);
};

// Seeds torch, builds the model, loads the pretrained checkpoints the
// configuration needs and freezes groups per the configuration table.
// Throws ConfigError naming a missing or mismatched checkpoint.
TrainState configure_run(const RunConfig& cfg);

// One discriminator update and one generator-side update. L_EEG reaches the
// EEG module only; the connector sees detached EEG embeddings. Throws
// NumericalError naming the first non-finite term, before any update.
LossReport train_step(TrainState& state, const data::Batch& batch);

// EEG-autoencoder update with the cosine loss alone (pretraining). Uses
// the same per-iteration seeding as train_step.
double eeg_step(TrainState& state, const data::Batch& batch);

// eeg_encode -> align -> prenet -> sample -> flow inverse -> decode. The
// output has target_frames * hop samples, where target_frames is the frame
// count of audio matching the EEG duration. Throws InvalidInput unless
// x.fs equals the configured EEG rate.
SpeechUtterance infer_waveform(Model& model, const RunConfig& cfg, const EegRecording& x,
                               double temperature, uint64_t seed = 0);

int64_t speech_frames_for_eeg(int64_t eeg_samples, const RunConfig& cfg);

struct TrainLogRecord {
  int64_t iteration = 0;
  LossReport losses;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds since the loop started
};

struct LoopOptions {
  std::filesystem::path run_dir;  // empty: no files written
  std::function<void(const TrainLogRecord&)> on_log;
  bool log_every_step = false;
};

// Runs until cfg.run.max_iterations, writing train_log.jsonl, periodic
// checkpoints and checkpoint.pt under run_dir. Returns every step's report.
std::vector<LossReport> run_training(TrainState& state, data::PairedDataset& dataset,
                                     const std::vector<std::size_t>& indices,
                                     const LoopOptions& options);

// epochs passes over indices with eeg_step; returns per-epoch mean loss.
std::vector<double> pretrain_eeg(TrainState& state, data::PairedDataset& dataset,
                                 const std::vector<std::size_t>& indices, int64_t epochs,
                                 const LoopOptions& options);

// Mean cosine loss over items, eval mode, no updates.
double evaluate_eeg_loss(TrainState& state, data::PairedDataset& dataset,
                         const std::vector<std::size_t>& indices);

}  // namespace e2s::train
