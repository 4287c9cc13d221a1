#include "bltd/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace bltd {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

}  // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

RunConfig RunConfig::from_pairs(const std::map<std::string, std::string>& pairs) {
  RunConfig c = defaults();
  bool ffn_local_set = false, ffn_global_set = false;
  static const std::set<std::string> known = {
      "model.d_local", "model.d_global", "model.layers_enc", "model.layers_glob",
      "model.layers_dec", "model.heads_enc", "model.heads_glob", "model.heads_dec",
      "model.ffn_hidden_local", "model.ffn_hidden_global", "model.rope_theta",
      "model.attn_window",
      "patch.order", "patch.smoothing", "patch.max", "patch.target_avg",
      "patch.threshold",
      "train.steps", "train.batch_bytes", "train.window_bytes", "train.peak_lr",
      "train.warmup", "train.weight_decay", "train.clip_norm", "train.beta1",
      "train.beta2", "train.adam_eps", "train.block_size",
      "train.mask_loss_weight", "train.seed"};
  for (auto& [key, v] : pairs) {
    if (!known.count(key)) throw std::runtime_error("config: unknown key '" + key + "'");
    if (key == "model.d_local") c.model.d_local = parse_int(key, v);
    else if (key == "model.d_global") c.model.d_global = parse_int(key, v);
    else if (key == "model.layers_enc") c.model.n_layers_enc = parse_int(key, v);
    else if (key == "model.layers_glob") c.model.n_layers_glob = parse_int(key, v);
    else if (key == "model.layers_dec") c.model.n_layers_dec = parse_int(key, v);
    else if (key == "model.heads_enc") c.model.n_heads_enc = parse_int(key, v);
    else if (key == "model.heads_glob") c.model.n_heads_glob = parse_int(key, v);
    else if (key == "model.heads_dec") c.model.n_heads_dec = parse_int(key, v);
    else if (key == "model.ffn_hidden_local") { c.model.ffn_hidden_local = parse_int(key, v); ffn_local_set = true; }
    else if (key == "model.ffn_hidden_global") { c.model.ffn_hidden_global = parse_int(key, v); ffn_global_set = true; }
    else if (key == "model.rope_theta") c.model.rope_theta = static_cast<real>(parse_double(key, v));
    else if (key == "model.attn_window") c.model.attn_window = parse_int(key, v);
    else if (key == "patch.order") c.patch_order = parse_int(key, v);
    else if (key == "patch.smoothing") c.patch_smoothing = parse_double(key, v);
    else if (key == "patch.max") c.patch_max = parse_int(key, v);
    else if (key == "patch.target_avg") c.patch_target_avg = parse_double(key, v);
    else if (key == "patch.threshold") c.patch_threshold = parse_double(key, v);
    else if (key == "train.steps") c.train.steps = parse_int(key, v);
    else if (key == "train.batch_bytes") c.train.batch_bytes = parse_int(key, v);
    else if (key == "train.window_bytes") c.train.window_bytes = parse_int(key, v);
    else if (key == "train.peak_lr") c.train.peak_lr = static_cast<real>(parse_double(key, v));
    else if (key == "train.warmup") c.train.warmup_steps = parse_int(key, v);
    else if (key == "train.weight_decay") c.train.weight_decay = static_cast<real>(parse_double(key, v));
    else if (key == "train.clip_norm") c.train.clip_norm = static_cast<real>(parse_double(key, v));
    else if (key == "train.beta1") c.train.beta1 = static_cast<real>(parse_double(key, v));
    else if (key == "train.beta2") c.train.beta2 = static_cast<real>(parse_double(key, v));
    else if (key == "train.adam_eps") c.train.adam_eps = static_cast<real>(parse_double(key, v));
    else if (key == "train.block_size") c.train.block_size = parse_int(key, v);
    else if (key == "train.mask_loss_weight") c.train.mask_loss_weight = static_cast<real>(parse_double(key, v));
    else if (key == "train.seed") c.train.seed = parse_u64(key, v);
  }
  // FFN widths follow the model widths unless set explicitly.
  if (!ffn_local_set) c.model.ffn_hidden_local = 2 * c.model.d_local;
  if (!ffn_global_set) c.model.ffn_hidden_global = 2 * c.model.d_global;
  c.model.validate();
  c.train.validate();
  if (c.patch_order < 0 || c.patch_order > 6)
    throw std::runtime_error("config: patch.order must be in [0, 6]");
  if (!(c.patch_smoothing > 0))
    throw std::runtime_error("config: patch.smoothing must be > 0");
  if (c.patch_max < 1) throw std::runtime_error("config: patch.max must be >= 1");
  if (!c.patch_threshold &&
      !(c.patch_target_avg > 1.0 && c.patch_target_avg <= c.patch_max))
    throw std::runtime_error("config: patch.target_avg must be in (1, patch.max]");
  return c;
}

RunConfig RunConfig::load(const std::string& path,
                          const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read " + path);
  std::map<std::string, std::string> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not 'key = value'");
    pairs[key] = val;
  }
  for (auto& [k, v] : overrides) pairs[k] = v;
  return from_pairs(pairs);
}

}  // namespace bltd
