#include "e2s/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <future>

#include "e2s/error.hpp"
#include "e2s/train/checkpoint.hpp"

namespace e2s::train {

namespace {

constexpr uint64_t kIterationStride = 1000003ULL;

void reseed(const RunConfig& cfg, int64_t iteration) {
  torch::manual_seed(cfg.run.seed * kIterationStride + static_cast<uint64_t>(iteration));
}

void check_finite(const char* name, const torch::Tensor& t, int64_t iteration) {
  if (!t.defined()) return;
  const double v = t.item<double>();
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite ") + name + " (" + std::to_string(v) +
                         ") at iteration " + std::to_string(iteration));
  }
}

double value(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

std::vector<torch::Tensor> group_parameters(Model& model, const TrainableGroups& groups,
                                            bool discriminator) {
  std::vector<torch::Tensor> out;
  for (const auto& p : model->named_parameters()) {
    const bool is_disc = in_group(p.key(), Group::Discriminator);
    if (is_disc != discriminator) continue;
    if (groups.trainable(p.key())) out.push_back(p.value());
  }
  return out;
}

torch::optim::AdamWOptions adamw_options(const OptimizerConfig& o) {
  return torch::optim::AdamWOptions(o.lr)
      .betas({o.beta1, o.beta2})
      .eps(o.eps)
      .weight_decay(o.weight_decay);
}

void set_lr(torch::optim::Optimizer* opt, double lr) {
  if (!opt) return;
  for (auto& g : opt->param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(g.options()).lr(lr);
  }
}

// EEG reconstruction loss over the valid samples of each item.
std::pair<nn::EegEncoding, torch::Tensor> eeg_forward(Model& model, const data::Batch& batch) {
  auto enc = model->eeg->encode(batch.eeg, batch.eeg_lengths);
  auto x_hat = model->eeg->decode(enc.embedding, enc.frame_mask).narrow(2, 0, batch.eeg.size(2));
  return {enc, nn::eeg_cosine_loss(batch.eeg, x_hat, batch.eeg_lengths)};
}

// Random window of `frames` latent frames per item, and the matching audio.
std::pair<torch::Tensor, torch::Tensor> random_segments(const torch::Tensor& z,
                                                        const torch::Tensor& wave,
                                                        const torch::Tensor& lengths,
                                                        int64_t frames, int64_t hop) {
  const int64_t b = z.size(0);
  std::vector<torch::Tensor> zs, ws;
  for (int64_t i = 0; i < b; ++i) {
    const int64_t len = lengths[i].item<int64_t>();
    const int64_t span = std::max<int64_t>(std::min(len, z.size(2)) - frames, 0);
    const int64_t start = torch::randint(span + 1, {1}, torch::kLong).item<int64_t>();
    zs.push_back(z[i].narrow(1, start, frames));
    ws.push_back(wave[i].narrow(1, start * hop, frames * hop));
  }
  return {torch::stack(zs), torch::stack(ws)};
}

}  // namespace

std::map<std::string, double> LossReport::terms() const {
  return {{"L_EEG", L_EEG}, {"L_mel", L_mel},     {"L_KL", L_KL},
          {"L_adv_g", L_adv_g}, {"L_adv_d", L_adv_d}, {"L_fm", L_fm}};
}

double TrainState::learning_rate() const {
  return cfg.optimizer.lr * std::pow(cfg.optimizer.lr_decay, static_cast<double>(iteration));
}

void TrainState::set_training(bool training) {
  model->train(training);
  if (!groups.eeg) model->eeg->eval();
  if (!groups.speech) {
    if (model->speech->posterior) model->speech->posterior->eval();
    model->speech->generator->eval();
  }
  if (!groups.discriminator) model->speech->discriminator->eval();
  model->mel->eval();
}

TrainState configure_run(const RunConfig& cfg) {
  cfg.validate();
  torch::manual_seed(cfg.run.seed);
  TrainState s;
  s.cfg = cfg;
  s.model = Model(cfg);
  s.groups = TrainableGroups::for_configuration(cfg.run.name);

  const auto c = cfg.run.name;
  const bool need_speech = c != TrainingConfiguration::Vanilla;
  const bool need_eeg =
      c == TrainingConfiguration::PtAudioEeg || c == TrainingConfiguration::PtAudioEegFz;
  auto require = [&](const std::string& path, const char* key) {
    if (path.empty()) {
      throw ConfigError(to_string(c) + " requires a pretrained checkpoint in run." + key);
    }
    if (!std::filesystem::is_regular_file(path)) {
      throw ConfigError("pretrained checkpoint not found: " + path);
    }
  };
  const std::filesystem::path name_map = cfg.run.pretrained_name_map;
  if (need_speech) {
    require(cfg.run.pretrained_speech, "pretrained_speech");
    load_pretrained(s.model, cfg, cfg.run.pretrained_speech, {"speech."}, name_map);
  }
  if (need_eeg) {
    require(cfg.run.pretrained_eeg, "pretrained_eeg");
    load_pretrained(s.model, cfg, cfg.run.pretrained_eeg, {"eeg."}, name_map);
  }

  for (auto& p : s.model->named_parameters()) {
    p.value().set_requires_grad(s.groups.trainable(p.key()));
  }
  s.opt_g = std::make_unique<torch::optim::AdamW>(group_parameters(s.model, s.groups, false),
                                                  adamw_options(cfg.optimizer));
  if (s.groups.gan()) {
    s.opt_d = std::make_unique<torch::optim::AdamW>(group_parameters(s.model, s.groups, true),
                                                    adamw_options(cfg.optimizer));
  }
  s.set_training(true);
  return s;
}

LossReport train_step(TrainState& state, const data::Batch& batch) {
  auto& cfg = state.cfg;
  auto& m = state.model;
  const auto& g = state.groups;
  const int64_t it = state.iteration;
  reseed(cfg, it);
  state.set_training(true);

  // EEG first: an EEG-only step draws the same random numbers.
  auto [enc, l_eeg] = eeg_forward(m, batch);

  const auto spec_mask = batch.spec_mask();
  const int64_t frames = batch.spec.size(2);
  auto q = m->speech->posterior->forward(batch.spec, batch.spec_lengths);
  auto aligned = nn::align_to_frames(enc.embedding, enc.frame_lengths, batch.spec_lengths, frames);
  auto prior = m->connector->prenet->forward(aligned, spec_mask);
  auto l_kl = nn::kl_loss(q, prior, m->connector->flow);

  const int64_t hop = cfg.dsp.stft.hop_size;
  const int64_t seg = std::min(cfg.speech.segment_frames, frames);
  auto [z_seg, y_seg] = random_segments(q.sample, batch.wave, batch.spec_lengths, seg, hop);

  torch::Tensor y_hat, l_mel;
  if (g.speech) {
    y_hat = m->speech->generator->forward(z_seg);
    l_mel = nn::mel_reconstruction_loss(m->mel, y_seg, y_hat);
  } else {
    torch::NoGradGuard no_grad;
    y_hat = m->speech->generator->forward(z_seg);
    l_mel = nn::mel_reconstruction_loss(m->mel, y_seg, y_hat);
  }

  torch::Tensor l_adv_g, l_adv_d, l_fm;
  if (g.gan()) {
    const auto d_real = m->speech->discriminator->forward(y_seg);
    const auto d_fake_detached = m->speech->discriminator->forward(y_hat.detach());
    l_adv_d = nn::discriminator_loss(d_real, d_fake_detached);
    const auto d_fake = m->speech->discriminator->forward(y_hat);
    l_adv_g = nn::generator_adversarial_loss(d_fake);
    l_fm = nn::feature_matching_loss(d_real, d_fake);
  }

  check_finite("L_EEG", l_eeg, it);
  check_finite("L_mel", l_mel, it);
  check_finite("L_KL", l_kl, it);
  check_finite("L_adv_g", l_adv_g, it);
  check_finite("L_adv_d", l_adv_d, it);
  check_finite("L_fm", l_fm, it);

  const auto& w = cfg.loss;
  torch::Tensor total = w.kl * l_kl;
  if (g.speech) total = total + w.mel * l_mel;
  if (g.gan()) total = total + w.adv * l_adv_g + w.fm * l_fm;
  if (g.eeg && w.eeg > 0.0) total = w.eeg * l_eeg + total;

  const double lr = state.learning_rate();
  set_lr(state.opt_g.get(), lr);
  set_lr(state.opt_d.get(), lr);

  state.opt_g->zero_grad();
  total.backward();
  if (state.opt_d) {
    state.opt_d->zero_grad();
    l_adv_d.backward();
  }
  state.opt_g->step();
  if (state.opt_d) state.opt_d->step();
  ++state.iteration;

  LossReport r;
  r.L_EEG = value(l_eeg);
  r.L_mel = value(l_mel);
  r.L_KL = value(l_kl);
  r.L_adv_g = value(l_adv_g);
  r.L_adv_d = value(l_adv_d);
  r.L_fm = value(l_fm);
  r.total = total.item<double>();
  if (!g.speech) r.total += w.mel * r.L_mel;
  if (!(g.eeg && w.eeg > 0.0)) r.total += w.eeg * r.L_EEG;
  return r;
}

double eeg_step(TrainState& state, const data::Batch& batch) {
  if (!state.groups.eeg) throw ConfigError("EEG module is frozen in this configuration");
  reseed(state.cfg, state.iteration);
  state.set_training(true);
  auto [enc, l_eeg] = eeg_forward(state.model, batch);
  check_finite("L_EEG", l_eeg, state.iteration);
  const double weight = state.cfg.loss.eeg > 0.0 ? state.cfg.loss.eeg : 1.0;
  auto loss = weight * l_eeg;
  set_lr(state.opt_g.get(), state.learning_rate());
  state.opt_g->zero_grad();
  loss.backward();
  state.opt_g->step();
  ++state.iteration;
  return l_eeg.item<double>();
}

int64_t speech_frames_for_eeg(int64_t eeg_samples, const RunConfig& cfg) {
  const double audio = std::round(static_cast<double>(eeg_samples) * cfg.dsp.stft.fs /
                                  cfg.dsp.eeg_fs);
  return static_cast<int64_t>(audio) / cfg.dsp.stft.hop_size + 1;
}

SpeechUtterance infer_waveform(Model& model, const RunConfig& cfg, const EegRecording& x,
                               double temperature, uint64_t seed) {
  if (std::abs(x.fs - cfg.dsp.eeg_fs) > 1e-9) {
    throw InvalidInput("EEG must be preprocessed to " + std::to_string(cfg.dsp.eeg_fs) +
                       " Hz, got " + std::to_string(x.fs) + " Hz");
  }
  if (static_cast<int64_t>(x.n_channels()) != cfg.eeg.n_channels_in) {
    throw InvalidInput("EEG has " + std::to_string(x.n_channels()) + " channels, model expects " +
                       std::to_string(cfg.eeg.n_channels_in));
  }
  if (temperature < 0.0) throw InvalidParameter("temperature must be >= 0");

  std::map<std::string, bool> modes;
  for (const auto& sub : model->named_modules()) modes[sub.key()] = sub.value()->is_training();
  model->eval();
  torch::NoGradGuard no_grad;
  torch::manual_seed(seed);

  const int64_t te = static_cast<int64_t>(x.n_timesteps());
  const int64_t frames = speech_frames_for_eeg(te, cfg);
  auto input = nn::recording_to_tensor(x);
  auto lengths = torch::full({1}, te, torch::kLong);
  auto enc = model->eeg->encode(input, lengths);
  auto dst = torch::full({1}, frames, torch::kLong);
  auto aligned = nn::align_to_frames(enc.embedding, enc.frame_lengths, dst, frames);
  auto mask = torch::ones({1, 1, frames}, aligned.options());
  auto prior = model->connector->prenet->forward(aligned, mask);
  auto w = nn::sample_prior(prior, temperature);
  auto z = model->connector->flow->inverse(w, mask);
  auto y = model->speech->generator->forward(z).reshape({-1}).to(torch::kDouble).contiguous();

  // train() recurses, so restore each module's own flag
  for (const auto& sub : model->named_modules()) {
    if (auto it = modes.find(sub.key()); it != modes.end()) sub.value()->train(it->second);
  }

  SpeechUtterance out;
  out.fs = cfg.dsp.stft.fs;
  out.waveform.assign(y.data_ptr<double>(), y.data_ptr<double>() + y.numel());
  for (auto& v : out.waveform) v = std::clamp(v, -1.0, 1.0);
  return out;
}

namespace {

Json record_json(const TrainLogRecord& rec) {
  Json j;
  j["iteration"] = rec.iteration;
  for (const auto& [k, v] : rec.losses.terms()) j[k] = v;
  j["total"] = rec.losses.total;
  j["lr"] = rec.lr;
  j["wall_time"] = rec.wall_time;
  return j;
}

// Loads the next batch on a worker while the current step runs.
class Prefetcher {
 public:
  Prefetcher(data::PairedDataset& ds, data::BatchSampler& sampler, bool async)
      : ds_(ds), sampler_(sampler), async_(async) {}

  data::Batch next() {
    if (!async_) return ds_.load_batch(sampler_.next());
    if (!pending_.valid()) schedule();
    auto b = pending_.get();
    schedule();
    return b;
  }

  // Sampler state as seen by the consumer (excluding a batch in flight).
  std::string state() const { return consumer_state_; }
  void mark() { consumer_state_ = async_ ? previous_state_ : sampler_.state(); }

 private:
  void schedule() {
    previous_state_ = sampler_.state();
    auto idx = sampler_.next();
    pending_ = std::async(std::launch::async, [this, idx] { return ds_.load_batch(idx); });
  }

  data::PairedDataset& ds_;
  data::BatchSampler& sampler_;
  bool async_;
  std::future<data::Batch> pending_;
  std::string previous_state_, consumer_state_;
};

}  // namespace

std::vector<LossReport> run_training(TrainState& state, data::PairedDataset& dataset,
                                     const std::vector<std::size_t>& indices,
                                     const LoopOptions& options) {
  const auto& cfg = state.cfg;
  data::BatchSampler sampler(indices, static_cast<std::size_t>(cfg.run.batch_size),
                             cfg.run.seed);
  if (!state.sampler_state.empty()) sampler.restore(state.sampler_state);

  std::ofstream log;
  if (!options.run_dir.empty()) {
    std::filesystem::create_directories(options.run_dir);
    log.open(options.run_dir / "train_log.jsonl", std::ios::app);
    if (!log) throw DataError("cannot write " + (options.run_dir / "train_log.jsonl").string());
  }

  Prefetcher prefetch(dataset, sampler, cfg.data.prefetch_workers > 0);
  std::vector<LossReport> reports;
  const auto t0 = std::chrono::steady_clock::now();
  while (state.iteration < cfg.run.max_iterations) {
    auto batch = prefetch.next();
    prefetch.mark();
    const double lr = state.learning_rate();
    auto r = train_step(state, batch);
    state.sampler_state = prefetch.state();
    reports.push_back(r);

    const int64_t it = state.iteration;
    const bool log_now = options.log_every_step || it % std::max<int64_t>(cfg.run.log_every, 1) == 0 ||
                         it == cfg.run.max_iterations;
    if (log_now) {
      TrainLogRecord rec{it, r, lr,
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
      if (log) log << record_json(rec).dump() << '\n' << std::flush;
      if (options.on_log) options.on_log(rec);
    }
    if (!options.run_dir.empty() && cfg.run.checkpoint_every > 0 &&
        it % cfg.run.checkpoint_every == 0) {
      save_checkpoint(state, options.run_dir / ("checkpoint_" + std::to_string(it) + ".pt"));
    }
  }
  if (!options.run_dir.empty()) save_checkpoint(state, options.run_dir / "checkpoint.pt");
  return reports;
}

std::vector<double> pretrain_eeg(TrainState& state, data::PairedDataset& dataset,
                                 const std::vector<std::size_t>& indices, int64_t epochs,
                                 const LoopOptions& options) {
  const auto bs = static_cast<std::size_t>(state.cfg.run.batch_size);
  data::BatchSampler sampler(indices, bs, state.cfg.run.seed);
  const std::size_t per_epoch = (indices.size() + bs - 1) / bs;

  std::ofstream log;
  if (!options.run_dir.empty()) {
    std::filesystem::create_directories(options.run_dir);
    log.open(options.run_dir / "pretrain_log.jsonl", std::ios::app);
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> means;
  for (int64_t e = 0; e < epochs; ++e) {
    double sum = 0.0;
    for (std::size_t k = 0; k < per_epoch; ++k) {
      sum += eeg_step(state, dataset.load_batch(sampler.next()));
    }
    means.push_back(sum / static_cast<double>(per_epoch));
    TrainLogRecord rec;
    rec.iteration = state.iteration;
    rec.losses.L_EEG = means.back();
    rec.losses.total = means.back();
    rec.lr = state.learning_rate();
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) {
      auto j = record_json(rec);
      j["epoch"] = e + 1;
      log << j.dump() << '\n' << std::flush;
    }
    if (options.on_log) options.on_log(rec);
  }
  state.sampler_state = sampler.state();
  if (!options.run_dir.empty()) save_checkpoint(state, options.run_dir / "checkpoint.pt");
  return means;
}

double evaluate_eeg_loss(TrainState& state, data::PairedDataset& dataset,
                         const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidInput("no rows to evaluate");
  const bool was_training = state.model->is_training();
  state.model->eval();
  double sum = 0.0;
  {
    torch::NoGradGuard no_grad;
    for (auto i : indices) sum += eeg_forward(state.model, dataset.load_batch({i})).second.item<double>();
  }
  state.set_training(was_training);
  return sum / static_cast<double>(indices.size());
}

}  // namespace e2s::train
