#include "bltd/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <map>

namespace bltd {

namespace {

// All integers little-endian; this code assumes a little-endian host.

struct Writer {
  FILE* f;
  explicit Writer(const std::string& path) {
    f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
  }
  ~Writer() {
    if (f) std::fclose(f);
  }
  void bytes(const void* p, size_t n) {
    if (std::fwrite(p, 1, n, f) != n)
      throw std::runtime_error("short write to checkpoint");
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(v));
  }
  void str(const std::string& s) {
    if (s.size() > 0xffff) throw std::runtime_error("string too long");
    pod<uint16_t>(static_cast<uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct Reader {
  FILE* f;
  explicit Reader(const std::string& path) {
    f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open for reading: " + path);
  }
  ~Reader() {
    if (f) std::fclose(f);
  }
  void bytes(void* p, size_t n) {
    if (std::fread(p, 1, n, f) != n)
      throw std::runtime_error("short read from checkpoint");
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(v));
    return v;
  }
  std::string str() {
    uint16_t n = pod<uint16_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
};

std::map<std::string, std::string> config_pairs(const Checkpoint& ckpt) {
  const ModelConfig& c = ckpt.model.config;
  std::map<std::string, std::string> kv;
  auto put = [&](const std::string& k, auto v) { kv[k] = std::to_string(v); };
  put("d_local", c.d_local);
  put("d_global", c.d_global);
  put("n_layers_enc", c.n_layers_enc);
  put("n_layers_glob", c.n_layers_glob);
  put("n_layers_dec", c.n_layers_dec);
  put("n_heads_enc", c.n_heads_enc);
  put("n_heads_glob", c.n_heads_glob);
  put("n_heads_dec", c.n_heads_dec);
  put("ffn_hidden_local", c.ffn_hidden_local);
  put("ffn_hidden_global", c.ffn_hidden_global);
  put("vocab", c.vocab);
  put("rope_theta", static_cast<double>(c.rope_theta));
  put("attn_window", c.attn_window);
  put("patch_order", ckpt.entropy.order);
  put("patch_smoothing", ckpt.entropy.smoothing);
  put("patch_threshold", ckpt.threshold);
  put("patch_max", ckpt.max_patch);
  return kv;
}

void apply_config(Checkpoint& ckpt, const std::map<std::string, std::string>& kv) {
  ModelConfig& c = ckpt.model.config;
  auto geti = [&](const std::string& k) { return std::stoi(kv.at(k)); };
  auto getd = [&](const std::string& k) { return std::stod(kv.at(k)); };
  c.d_local = geti("d_local");
  c.d_global = geti("d_global");
  c.n_layers_enc = geti("n_layers_enc");
  c.n_layers_glob = geti("n_layers_glob");
  c.n_layers_dec = geti("n_layers_dec");
  c.n_heads_enc = geti("n_heads_enc");
  c.n_heads_glob = geti("n_heads_glob");
  c.n_heads_dec = geti("n_heads_dec");
  c.ffn_hidden_local = geti("ffn_hidden_local");
  c.ffn_hidden_global = geti("ffn_hidden_global");
  c.vocab = geti("vocab");
  c.rope_theta = static_cast<real>(getd("rope_theta"));
  c.attn_window = geti("attn_window");
  ckpt.entropy.order = geti("patch_order");
  ckpt.entropy.smoothing = getd("patch_smoothing");
  ckpt.threshold = getd("patch_threshold");
  ckpt.max_patch = geti("patch_max");
}

void write_entropy_blob(Writer& w, const EntropyModel& m) {
  w.pod<uint32_t>(static_cast<uint32_t>(m.order));
  w.pod<double>(m.smoothing);
  std::vector<uint64_t> keys;
  keys.reserve(m.contexts.size());
  for (auto& [k, v] : m.contexts) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  w.pod<uint64_t>(keys.size());
  for (uint64_t k : keys) {
    const auto& counts = m.contexts.at(k);
    w.pod<uint64_t>(k);
    w.pod<uint32_t>(static_cast<uint32_t>(counts.size()));
    for (auto& [sym, cnt] : counts) {
      w.pod<uint16_t>(static_cast<uint16_t>(sym));
      w.pod<int64_t>(cnt);
    }
  }
  for (Symbol s = 0; s < kVocabSize; ++s) w.pod<int64_t>(m.unigram[s]);
  w.pod<int64_t>(m.unigram_total);
}

EntropyModel read_entropy_blob(Reader& r) {
  EntropyModel m;
  m.order = static_cast<int>(r.pod<uint32_t>());
  m.smoothing = r.pod<double>();
  uint64_t n_ctx = r.pod<uint64_t>();
  for (uint64_t i = 0; i < n_ctx; ++i) {
    uint64_t key = r.pod<uint64_t>();
    uint32_t n_syms = r.pod<uint32_t>();
    auto& counts = m.contexts[key];
    int64_t total = 0;
    for (uint32_t j = 0; j < n_syms; ++j) {
      Symbol sym = static_cast<Symbol>(r.pod<uint16_t>());
      int64_t cnt = r.pod<int64_t>();
      counts[sym] = cnt;
      total += cnt;
    }
    m.context_totals[key] = total;
  }
  for (Symbol s = 0; s < kVocabSize; ++s) m.unigram[s] = r.pod<int64_t>();
  m.unigram_total = r.pod<int64_t>();
  return m;
}

template <typename StoreT>
void write_tensors(Writer& w, const HierarchicalModel& model) {
  auto named = model.named_parameters();
  w.pod<uint32_t>(static_cast<uint32_t>(named.size()));
  for (auto& [name, t] : named) {
    w.str(name);
    w.pod<uint8_t>(sizeof(StoreT) == 4 ? 0 : 1);  // dtype tag: 0=f32, 1=f64
    w.pod<uint8_t>(static_cast<uint8_t>(t.shape().size()));
    for (int e : t.shape()) w.pod<uint32_t>(static_cast<uint32_t>(e));
    std::vector<StoreT> buf(t.data().begin(), t.data().end());
    w.bytes(buf.data(), buf.size() * sizeof(StoreT));
  }
}

void read_tensors(Reader& r, HierarchicalModel& model) {
  auto named = model.named_parameters();
  uint32_t n = r.pod<uint32_t>();
  if (n != named.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (auto& [name, t] : named) {
    std::string got = r.str();
    if (got != name)
      throw std::runtime_error("checkpoint: expected tensor " + name +
                               ", found " + got);
    uint8_t dtype = r.pod<uint8_t>();
    uint8_t ndim = r.pod<uint8_t>();
    std::vector<int> shape(ndim);
    for (auto& e : shape) e = static_cast<int>(r.pod<uint32_t>());
    if (shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    Tensor dst = t;
    if (dtype == 0) {
      std::vector<float> buf(dst.numel());
      r.bytes(buf.data(), buf.size() * sizeof(float));
      for (size_t i = 0; i < buf.size(); ++i)
        dst.data()[i] = static_cast<real>(buf[i]);
    } else {
      std::vector<double> buf(dst.numel());
      r.bytes(buf.data(), buf.size() * sizeof(double));
      for (size_t i = 0; i < buf.size(); ++i)
        dst.data()[i] = static_cast<real>(buf[i]);
    }
  }
}

void write_header(Writer& w, const char magic[4], uint32_t version,
                  const std::map<std::string, std::string>& kv) {
  w.bytes(magic, 4);
  w.pod<uint32_t>(version);
  w.pod<uint32_t>(static_cast<uint32_t>(kv.size()));
  for (auto& [k, v] : kv) {
    w.str(k);
    w.str(v);
  }
}

std::map<std::string, std::string> read_header(Reader& r, const char magic[4]) {
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  uint32_t version = r.pod<uint32_t>();
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  uint32_t n = r.pod<uint32_t>();
  std::map<std::string, std::string> kv;
  for (uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    kv[k] = r.str();
  }
  return kv;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  Writer w(path);
  write_header(w, "BLTD", 1, config_pairs(ckpt));
  write_tensors<float>(w, ckpt.model);
  w.pod<uint32_t>(1);  // blob count
  w.str("entropy_model");
  write_entropy_blob(w, ckpt.entropy);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  auto kv = read_header(r, "BLTD");
  Checkpoint ckpt;
  apply_config(ckpt, kv);
  Rng rng(0);
  ckpt.model = init_model(ckpt.model.config, rng);
  read_tensors(r, ckpt.model);
  uint32_t blobs = r.pod<uint32_t>();
  for (uint32_t i = 0; i < blobs; ++i) {
    std::string name = r.str();
    if (name == "entropy_model")
      ckpt.entropy = read_entropy_blob(r);
    else
      throw std::runtime_error("checkpoint: unknown blob " + name);
  }
  return ckpt;
}

void save_train_state(const Checkpoint& ckpt, const TrainState& state,
                      const TrainConfig& cfg, const std::string& path) {
  Writer w(path);
  auto kv = config_pairs(ckpt);
  kv["train_steps"] = std::to_string(cfg.steps);
  kv["train_batch_bytes"] = std::to_string(cfg.batch_bytes);
  kv["train_window_bytes"] = std::to_string(cfg.window_bytes);
  kv["train_peak_lr"] = std::to_string(static_cast<double>(cfg.peak_lr));
  kv["train_warmup"] = std::to_string(cfg.warmup_steps);
  kv["train_weight_decay"] = std::to_string(static_cast<double>(cfg.weight_decay));
  kv["train_clip_norm"] = std::to_string(static_cast<double>(cfg.clip_norm));
  kv["train_beta1"] = std::to_string(static_cast<double>(cfg.beta1));
  kv["train_beta2"] = std::to_string(static_cast<double>(cfg.beta2));
  kv["train_adam_eps"] = std::to_string(static_cast<double>(cfg.adam_eps));
  kv["train_block_size"] = std::to_string(cfg.block_size);
  kv["train_mask_loss_weight"] =
      std::to_string(static_cast<double>(cfg.mask_loss_weight));
  kv["train_seed"] = std::to_string(cfg.seed);
  kv["next_step"] = std::to_string(state.next_step);
  write_header(w, "BLTS", 1, kv);
  write_tensors<double>(w, ckpt.model);
  w.pod<uint64_t>(state.adam.step);
  w.pod<uint32_t>(static_cast<uint32_t>(state.adam.m.size()));
  for (size_t i = 0; i < state.adam.m.size(); ++i) {
    w.pod<uint64_t>(state.adam.m[i].size());
    std::vector<double> mb(state.adam.m[i].begin(), state.adam.m[i].end());
    std::vector<double> vb(state.adam.v[i].begin(), state.adam.v[i].end());
    w.bytes(mb.data(), mb.size() * sizeof(double));
    w.bytes(vb.data(), vb.size() * sizeof(double));
  }
  w.pod<uint32_t>(1);
  w.str("entropy_model");
  write_entropy_blob(w, ckpt.entropy);
}

void load_train_state(const std::string& path, Checkpoint& ckpt,
                      TrainState& state, TrainConfig& cfg) {
  Reader r(path);
  auto kv = read_header(r, "BLTS");
  apply_config(ckpt, kv);
  cfg.steps = std::stoi(kv.at("train_steps"));
  cfg.batch_bytes = std::stoi(kv.at("train_batch_bytes"));
  cfg.window_bytes = std::stoi(kv.at("train_window_bytes"));
  cfg.peak_lr = static_cast<real>(std::stod(kv.at("train_peak_lr")));
  cfg.warmup_steps = std::stoi(kv.at("train_warmup"));
  cfg.weight_decay = static_cast<real>(std::stod(kv.at("train_weight_decay")));
  cfg.clip_norm = static_cast<real>(std::stod(kv.at("train_clip_norm")));
  cfg.beta1 = static_cast<real>(std::stod(kv.at("train_beta1")));
  cfg.beta2 = static_cast<real>(std::stod(kv.at("train_beta2")));
  cfg.adam_eps = static_cast<real>(std::stod(kv.at("train_adam_eps")));
  cfg.block_size = std::stoi(kv.at("train_block_size"));
  cfg.mask_loss_weight =
      static_cast<real>(std::stod(kv.at("train_mask_loss_weight")));
  cfg.seed = std::stoull(kv.at("train_seed"));
  state.next_step = std::stoi(kv.at("next_step"));
  Rng rng(0);
  ckpt.model = init_model(ckpt.model.config, rng);
  read_tensors(r, ckpt.model);
  state.adam.step = static_cast<int64_t>(r.pod<uint64_t>());
  uint32_t n = r.pod<uint32_t>();
  state.adam.m.resize(n);
  state.adam.v.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint64_t sz = r.pod<uint64_t>();
    std::vector<double> mb(sz), vb(sz);
    r.bytes(mb.data(), sz * sizeof(double));
    r.bytes(vb.data(), sz * sizeof(double));
    state.adam.m[i].assign(mb.begin(), mb.end());
    state.adam.v[i].assign(vb.begin(), vb.end());
  }
  uint32_t blobs = r.pod<uint32_t>();
  for (uint32_t i = 0; i < blobs; ++i) {
    std::string name = r.str();
    if (name == "entropy_model") ckpt.entropy = read_entropy_blob(r);
  }
}

}  // namespace bltd
