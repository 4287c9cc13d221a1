#include "bltd/model.hpp"

#include <cmath>

namespace bltd {

void ModelConfig::validate() const {
  if (d_global % d_local != 0)
    throw std::runtime_error("ModelConfig: d_global must divide by d_local");
  if (d_local % n_heads_enc || d_local % n_heads_dec || d_global % n_heads_glob)
    throw std::runtime_error("ModelConfig: widths must divide by head counts");
  if ((d_local / n_heads_enc) % 2 || (d_local / n_heads_dec) % 2 ||
      (d_global / n_heads_glob) % 2)
    throw std::runtime_error("ModelConfig: head dims must be even for rotary");
  if (rope_theta <= 0) throw std::runtime_error("ModelConfig: rope_theta <= 0");
  if (n_layers_dec < 1)
    throw std::runtime_error("ModelConfig: decoder needs at least one layer");
}

namespace {

constexpr real kInitStd = static_cast<real>(0.02);

LayerParams init_layer(int d, int hidden, Rng& rng) {
  LayerParams p;
  p.attn_norm_gain = Tensor::from_data({d}, std::vector<real>(d, 1), true);
  p.attn.wq = Tensor::randn({d, d}, rng, kInitStd);
  p.attn.wk = Tensor::randn({d, d}, rng, kInitStd);
  p.attn.wv = Tensor::randn({d, d}, rng, kInitStd);
  p.attn.wo = Tensor::randn({d, d}, rng, kInitStd);
  p.ffn_norm_gain = Tensor::from_data({d}, std::vector<real>(d, 1), true);
  p.w_gate = Tensor::randn({d, hidden}, rng, kInitStd);
  p.w_up = Tensor::randn({d, hidden}, rng, kInitStd);
  p.w_down = Tensor::randn({hidden, d}, rng, kInitStd);
  return p;
}

void collect_layer(const std::string& prefix, const LayerParams& p,
                   std::vector<std::pair<std::string, Tensor>>& out) {
  out.emplace_back(prefix + ".attn_norm", p.attn_norm_gain);
  out.emplace_back(prefix + ".wq", p.attn.wq);
  out.emplace_back(prefix + ".wk", p.attn.wk);
  out.emplace_back(prefix + ".wv", p.attn.wv);
  out.emplace_back(prefix + ".wo", p.attn.wo);
  out.emplace_back(prefix + ".ffn_norm", p.ffn_norm_gain);
  out.emplace_back(prefix + ".w_gate", p.w_gate);
  out.emplace_back(prefix + ".w_up", p.w_up);
  out.emplace_back(prefix + ".w_down", p.w_down);
}

int64_t count(const std::vector<std::pair<std::string, Tensor>>& named,
              const std::string& prefix) {
  int64_t n = 0;
  for (const auto& [name, t] : named)
    if (name.rfind(prefix, 0) == 0) n += t.numel();
  return n;
}

// Causal attention admissibility with a fixed window.
BoolMat windowed_causal(int n, int window) {
  BoolMat m(n, n, 0);
  for (int i = 0; i < n; ++i) {
    int j0 = window > 0 ? std::max(0, i - window + 1) : 0;
    for (int j = j0; j <= i; ++j) m.set(i, j, 1);
  }
  return m;
}

Tensor transformer_layer(const LayerParams& p, const Tensor& x,
                         const BoolMat& mask, const std::vector<int>& positions,
                         int heads, real theta) {
  Tensor xn = rmsnorm(x, p.attn_norm_gain);
  const int dh = x.cols() / heads;
  Tensor q = rope_apply(matmul(xn, p.attn.wq), positions, theta, dh);
  Tensor k = rope_apply(matmul(xn, p.attn.wk), positions, theta, dh);
  Tensor v = matmul(xn, p.attn.wv);
  Tensor att = multihead_attention(q, k, v, mask, heads);
  Tensor h = add(x, matmul(att, p.attn.wo));
  Tensor hn = rmsnorm(h, p.ffn_norm_gain);
  return add(h, swiglu_ffn(hn, p.w_gate, p.w_up, p.w_down));
}

}  // namespace

HierarchicalModel init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  HierarchicalModel m;
  m.config = config;
  m.enc_embed = Tensor::randn({config.vocab, config.d_local}, rng, kInitStd);
  for (int l = 0; l < config.n_layers_enc; ++l)
    m.enc_layers.push_back(init_layer(config.d_local, config.ffn_hidden_local, rng));
  m.enc_proj = Tensor::randn({config.d_local, config.d_global}, rng, kInitStd);
  for (int l = 0; l < config.n_layers_glob; ++l)
    m.glob_layers.push_back(
        init_layer(config.d_global, config.ffn_hidden_global, rng));
  m.dec_embed = Tensor::randn({config.vocab, config.d_local}, rng, kInitStd);
  for (int l = 0; l < config.n_layers_dec; ++l) {
    DecoderLayerParams d;
    d.w_dc = Tensor::randn({config.d_global, config.d_global}, rng, kInitStd);
    d.cross.wq = Tensor::randn({config.d_local, config.d_local}, rng, kInitStd);
    d.cross.wk = Tensor::randn({config.d_local, config.d_local}, rng, kInitStd);
    d.cross.wv = Tensor::randn({config.d_local, config.d_local}, rng, kInitStd);
    d.cross.wo = Tensor::randn({config.d_local, config.d_local}, rng, kInitStd);
    d.layer = init_layer(config.d_local, config.ffn_hidden_local, rng);
    m.dec_layers.push_back(d);
  }
  m.dec_final_norm_gain =
      Tensor::from_data({config.d_local}, std::vector<real>(config.d_local, 1), true);
  m.head = Tensor::randn({config.d_local, config.vocab}, rng, kInitStd);
  return m;
}

std::vector<std::pair<std::string, Tensor>> HierarchicalModel::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("enc.embed", enc_embed);
  for (size_t l = 0; l < enc_layers.size(); ++l)
    collect_layer("enc.layer" + std::to_string(l), enc_layers[l], out);
  out.emplace_back("enc.proj", enc_proj);
  for (size_t l = 0; l < glob_layers.size(); ++l)
    collect_layer("glob.layer" + std::to_string(l), glob_layers[l], out);
  out.emplace_back("dec.embed", dec_embed);
  for (size_t l = 0; l < dec_layers.size(); ++l) {
    std::string prefix = "dec.layer" + std::to_string(l);
    out.emplace_back(prefix + ".w_dc", dec_layers[l].w_dc);
    out.emplace_back(prefix + ".cross.wq", dec_layers[l].cross.wq);
    out.emplace_back(prefix + ".cross.wk", dec_layers[l].cross.wk);
    out.emplace_back(prefix + ".cross.wv", dec_layers[l].cross.wv);
    out.emplace_back(prefix + ".cross.wo", dec_layers[l].cross.wo);
    collect_layer(prefix, dec_layers[l].layer, out);
  }
  out.emplace_back("dec.final_norm", dec_final_norm_gain);
  out.emplace_back("dec.head", head);
  return out;
}

std::vector<Tensor> HierarchicalModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

int64_t HierarchicalModel::param_count_encoder() const {
  return count(named_parameters(), "enc.");
}
int64_t HierarchicalModel::param_count_global() const {
  return count(named_parameters(), "glob.");
}
int64_t HierarchicalModel::param_count_decoder() const {
  return count(named_parameters(), "dec.");
}

HierarchicalModel clone_model(const HierarchicalModel& m) {
  HierarchicalModel c;
  c.config = m.config;
  auto copy = [](const Tensor& t) {
    return Tensor::from_data(t.shape(), t.data(), t.requires_grad());
  };
  c.enc_embed = copy(m.enc_embed);
  auto copy_layer = [&](const LayerParams& p) {
    LayerParams o;
    o.attn_norm_gain = copy(p.attn_norm_gain);
    o.attn = {copy(p.attn.wq), copy(p.attn.wk), copy(p.attn.wv), copy(p.attn.wo)};
    o.ffn_norm_gain = copy(p.ffn_norm_gain);
    o.w_gate = copy(p.w_gate);
    o.w_up = copy(p.w_up);
    o.w_down = copy(p.w_down);
    return o;
  };
  for (auto& l : m.enc_layers) c.enc_layers.push_back(copy_layer(l));
  c.enc_proj = copy(m.enc_proj);
  for (auto& l : m.glob_layers) c.glob_layers.push_back(copy_layer(l));
  c.dec_embed = copy(m.dec_embed);
  for (auto& l : m.dec_layers) {
    DecoderLayerParams d;
    d.w_dc = copy(l.w_dc);
    d.cross = {copy(l.cross.wq), copy(l.cross.wk), copy(l.cross.wv),
               copy(l.cross.wo)};
    d.layer = copy_layer(l.layer);
    c.dec_layers.push_back(d);
  }
  c.dec_final_norm_gain = copy(m.dec_final_norm_gain);
  c.head = copy(m.head);
  return c;
}

Tensor encode_bytes(const HierarchicalModel& m, const ByteSeq& x,
                    const PatchSegmentation& seg) {
  const int n = static_cast<int>(x.size());
  if (seg.sequence_length != n)
    throw std::runtime_error("encode_bytes: segmentation does not tile input");
  Tensor h = embedding_lookup(m.enc_embed, x);
  if (!m.enc_layers.empty()) {
    BoolMat mask = windowed_causal(n, m.config.attn_window);
    std::vector<int> positions(n);
    for (int i = 0; i < n; ++i) positions[i] = i + 1;
    for (const auto& layer : m.enc_layers)
      h = transformer_layer(layer, h, mask, positions, m.config.n_heads_enc,
                            m.config.rope_theta);
  }
  Tensor pooled = row_mean_segments(h, seg.starts, n);
  return matmul(pooled, m.enc_proj);
}

Tensor global_forward(const HierarchicalModel& m, const Tensor& t) {
  if (m.glob_layers.empty()) return t;
  const int rows = t.rows();
  BoolMat mask = windowed_causal(rows, m.config.attn_window);
  std::vector<int> positions(rows);
  for (int i = 0; i < rows; ++i) positions[i] = i + 1;
  Tensor h = t;
  for (const auto& layer : m.glob_layers)
    h = transformer_layer(layer, h, mask, positions, m.config.n_heads_glob,
                          m.config.rope_theta);
  return h;
}

Tensor split_latent(const Tensor& w_dc, const Tensor& latent_row, int u) {
  Tensor s = matmul(latent_row, w_dc);
  return reshape(s, {latent_row.rows() * u, s.cols() / u});
}

Tensor decoder_forward(const HierarchicalModel& m, const ByteSeq& input,
                       const Tensor& latents, const AttentionMaskSpec& masks,
                       Tensor* embedded_out) {
  const int n = static_cast<int>(input.size());
  if (masks.n != n)
    throw std::runtime_error("decoder_forward: mask size mismatch");
  const int mrows = latents.rows();
  for (int a : masks.cross_assign)
    if (a < 1 || a > mrows)
      throw std::runtime_error("decoder_forward: cross assignment out of range");
  const int u = m.config.latent_splits();
  Tensor h = embedding_lookup(m.dec_embed, input);
  if (embedded_out) *embedded_out = h;
  for (const auto& dl : m.dec_layers) {
    // Eq.-style cross-attention block: queries from the raw hidden state,
    // keys/values from the split slices of each position's assigned latent.
    Tensor slices = split_latent(dl.w_dc, latents, u);  // [M*U x d_local]
    Tensor k = matmul(slices, dl.cross.wk);
    Tensor v = matmul(slices, dl.cross.wv);
    Tensor q = matmul(h, dl.cross.wq);
    Tensor att =
        grouped_cross_attention(q, k, v, masks.cross_assign, u, m.config.n_heads_dec);
    Tensor b = add(h, matmul(att, dl.cross.wo));
    h = transformer_layer(dl.layer, b, masks.self_mask, masks.positions,
                          m.config.n_heads_dec, m.config.rope_theta);
  }
  return matmul(rmsnorm(h, m.dec_final_norm_gain), m.head);
}

}  // namespace bltd
