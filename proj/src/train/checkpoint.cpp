#include "e2s/train/checkpoint.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <fstream>

#include "e2s/error.hpp"

namespace e2s::train {

namespace {

const std::vector<std::string> kModules{"eeg", "speech", "connector"};

std::string encode_name(std::string s) {
  for (std::size_t pos = 0; (pos = s.find('.', pos)) != std::string::npos; pos += 2) {
    s.replace(pos, 1, "__");
  }
  return s;
}

std::string decode_name(std::string s) {
  for (std::size_t pos = 0; (pos = s.find("__", pos)) != std::string::npos; ++pos) {
    s.replace(pos, 2, ".");
  }
  return s;
}

torch::serialize::InputArchive open(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DataError("checkpoint not found: " + path.string());
  }
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  return ar;
}

std::string read_string(torch::serialize::InputArchive& ar, const std::string& key) {
  c10::IValue v;
  if (!ar.try_read(key, v) || !v.isString()) {
    throw DataError("checkpoint lacks " + key);
  }
  return v.toStringRef();
}

// name -> tensor for every stored parameter ("p") or buffer ("b").
std::map<std::string, torch::Tensor> stored_tensors(torch::serialize::InputArchive& ar,
                                                    const std::string& kind) {
  std::map<std::string, torch::Tensor> out;
  const std::string prefix = kind + "__";
  for (const auto& key : ar.keys()) {
    if (!key.starts_with(prefix)) continue;
    torch::Tensor t;
    ar.read(key, t);
    out[decode_name(key.substr(prefix.size()))] = t;
  }
  return out;
}

void copy_into(const torch::Tensor& dst, const torch::Tensor& src, const std::string& name) {
  if (dst.sizes() != src.sizes()) {
    throw ConfigError("shape mismatch for " + name + " when loading checkpoint");
  }
  torch::NoGradGuard no_grad;
  dst.copy_(src);
}

void check_architecture(torch::serialize::InputArchive& ar, const RunConfig& cfg,
                        const std::string& module, const std::filesystem::path& path) {
  const auto stored = read_string(ar, "arch__" + module);
  if (stored != cfg.architecture_hash(module)) {
    throw ConfigError("checkpoint " + path.string() + " has a different " + module +
                      " architecture than the run config");
  }
}

// Loads all parameters and buffers; missing posterior-encoder weights drop
// the posterior from the model.
void load_weights(Model& model, torch::serialize::InputArchive& ar,
                  const std::filesystem::path& path) {
  const auto params = stored_tensors(ar, "p");
  const auto buffers = stored_tensors(ar, "b");
  bool has_posterior = false;
  for (const auto& [k, v] : params) has_posterior |= k.starts_with("speech.posterior.");
  if (!has_posterior) model->speech->drop_posterior();
  for (auto& p : model->named_parameters()) {
    auto it = params.find(p.key());
    if (it == params.end()) {
      throw ConfigError("checkpoint " + path.string() + " lacks parameter " + p.key());
    }
    copy_into(p.value(), it->second, p.key());
  }
  for (auto& b : model->named_buffers()) {
    if (auto it = buffers.find(b.key()); it != buffers.end()) copy_into(b.value(), it->second, b.key());
  }
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  torch::serialize::OutputArchive ar;
  for (const auto& p : state.model->named_parameters()) {
    ar.write("p__" + encode_name(p.key()), p.value().detach(), false);
  }
  for (const auto& b : state.model->named_buffers()) {
    ar.write("b__" + encode_name(b.key()), b.value(), true);
  }
  ar.write("meta__config", c10::IValue(state.cfg.to_json().dump()));
  ar.write("meta__config_hash", c10::IValue(state.cfg.hash()));
  ar.write("meta__training_configuration", c10::IValue(to_string(state.cfg.run.name)));
  ar.write("meta__iteration", c10::IValue(state.iteration));
  ar.write("meta__sampler", c10::IValue(state.sampler_state));
  for (const auto& m : kModules) {
    ar.write("arch__" + m, c10::IValue(state.cfg.architecture_hash(m)));
  }
  ar.write("rng__torch", at::detail::getDefaultCPUGenerator().get_state(), true);
  if (state.opt_g) {
    torch::serialize::OutputArchive sub;
    state.opt_g->save(sub);
    ar.write("opt_g", sub);
  }
  if (state.opt_d) {
    torch::serialize::OutputArchive sub;
    state.opt_d->save(sub);
    ar.write("opt_d", sub);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  try {
    ar.save_to(tmp);
  } catch (const c10::Error& e) {
    throw DataError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(TrainState& state, const std::filesystem::path& path) {
  auto ar = open(path);
  for (const auto& m : kModules) check_architecture(ar, state.cfg, m, path);
  load_weights(state.model, ar, path);

  c10::IValue it;
  if (ar.try_read("meta__iteration", it)) state.iteration = it.toInt();
  c10::IValue sampler;
  if (ar.try_read("meta__sampler", sampler)) state.sampler_state = sampler.toStringRef();
  torch::Tensor rng;
  if (ar.try_read("rng__torch", rng)) {
    auto gen = at::detail::getDefaultCPUGenerator();
    gen.set_state(rng);
  }

  const auto keys = ar.keys();
  auto has = [&](const std::string& k) { return std::find(keys.begin(), keys.end(), k) != keys.end(); };
  if (state.opt_g && has("opt_g")) {
    torch::serialize::InputArchive sub;
    ar.read("opt_g", sub);
    state.opt_g->load(sub);
  }
  if (state.opt_d && has("opt_d")) {
    torch::serialize::InputArchive sub;
    ar.read("opt_d", sub);
    state.opt_d->load(sub);
  }
}

Json checkpoint_config(const std::filesystem::path& path) {
  auto ar = open(path);
  try {
    return Json::parse(read_string(ar, "meta__config"));
  } catch (const Json::exception& e) {
    throw DataError("checkpoint " + path.string() + " holds a malformed config: " + e.what());
  }
}

std::pair<RunConfig, Model> load_model(const std::filesystem::path& path) {
  auto cfg = RunConfig::from_json(merge_config(default_config_tree(), checkpoint_config(path)));
  Model model(cfg);
  auto ar = open(path);
  load_weights(model, ar, path);
  model->eval();
  return {cfg, model};
}

std::size_t load_pretrained(Model& model, const RunConfig& cfg, const std::filesystem::path& path,
                            const std::vector<std::string>& prefixes,
                            const std::filesystem::path& name_map) {
  auto ar = open(path);
  auto params = stored_tensors(ar, "p");
  auto buffers = stored_tensors(ar, "b");

  std::map<std::string, std::string> rename;  // archive name -> model name
  if (!name_map.empty()) {
    std::ifstream in(name_map);
    if (!in) throw ConfigError("name map not found: " + name_map.string());
    Json j;
    try {
      in >> j;
    } catch (const Json::exception& e) {
      throw ConfigError("malformed name map " + name_map.string() + ": " + e.what());
    }
    for (const auto& [k, v] : j.items()) rename[k] = v.get<std::string>();
  } else {
    for (const auto& m : kModules) {
      for (const auto& p : prefixes) {
        if (p.starts_with(m + ".") || p == m) check_architecture(ar, cfg, m, path);
      }
    }
  }
  auto target = [&](const std::string& stored) {
    if (rename.empty()) return stored;
    auto it = rename.find(stored);
    return it == rename.end() ? std::string{} : it->second;
  };
  auto wanted = [&](const std::string& name) {
    if (name.empty()) return false;
    for (const auto& p : prefixes) {
      if (name.starts_with(p)) return true;
    }
    return false;
  };

  auto model_params = model->named_parameters();
  auto model_buffers = model->named_buffers();
  std::size_t loaded = 0;
  for (const auto& [name, t] : params) {
    const auto dst = target(name);
    if (!wanted(dst)) continue;
    auto* p = model_params.find(dst);
    if (!p) continue;
    copy_into(*p, t, dst);
    ++loaded;
  }
  for (const auto& [name, t] : buffers) {
    const auto dst = target(name);
    if (!wanted(dst)) continue;
    if (auto* b = model_buffers.find(dst)) {
      copy_into(*b, t, dst);
      ++loaded;
    }
  }
  if (loaded == 0) {
    throw ConfigError("checkpoint " + path.string() + " has no tensors under the requested prefix");
  }
  // Every wanted parameter must be covered.
  for (const auto& p : model_params) {
    if (!wanted(p.key())) continue;
    bool found = false;
    for (const auto& [name, t] : params) found |= target(name) == p.key();
    if (!found && !p.key().starts_with("speech.posterior.")) {
      throw ConfigError("checkpoint " + path.string() + " lacks " + p.key());
    }
  }
  return loaded;
}

}  // namespace e2s::train
