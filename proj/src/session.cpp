#include "bltd/session.hpp"

#include <algorithm>
#include <cstring>

#include "bltd/kernels.hpp"

namespace bltd {

namespace k = kernels;

namespace {

// One transformer layer applied to a single new row r, attending to the
// layer's cached keys/values over columns [j0, r]. Appends this row's k/v to
// the cache and returns the layer output row.
struct RowWork {
  std::vector<real> xn, q, kk, vv, att, o, h, hn, gate, up, probs, ffn;
  void resize(int d, int hidden, int max_keys) {
    xn.resize(d);
    q.resize(d);
    kk.resize(d);
    vv.resize(d);
    att.resize(d);
    o.resize(d);
    h.resize(d);
    hn.resize(d);
    gate.resize(hidden);
    up.resize(hidden);
    ffn.resize(d);
    probs.resize(max_keys);
  }
};

void ffn_row(const LayerParams& p, const real* h, int d, int hidden,
             RowWork& w, real* out) {
  k::rmsnorm_row(h, p.ffn_norm_gain.data().data(), d, k::kRmsNormEps,
                 w.hn.data());
  k::matvec(w.hn.data(), p.w_gate.data().data(), d, hidden, w.gate.data());
  k::matvec(w.hn.data(), p.w_up.data().data(), d, hidden, w.up.data());
  for (int j = 0; j < hidden; ++j) w.gate[j] = k::silu(w.gate[j]) * w.up[j];
  k::matvec(w.gate.data(), p.w_down.data().data(), hidden, d, w.ffn.data());
  for (int j = 0; j < d; ++j) out[j] = h[j] + w.ffn[j];
}

}  // namespace

InferenceSession::InferenceSession(const HierarchicalModel& model,
                                   const EntropyModel& entropy,
                                   double threshold, int max_patch,
                                   bool use_cache)
    : model_(model),
      patcher_(&entropy, threshold, max_patch),
      use_cache_(use_cache) {
  enc_cache_.resize(model.config.n_layers_enc);
  glob_cache_.resize(model.config.n_layers_glob);
  dec_cache_.resize(model.config.n_layers_dec);
}

void InferenceSession::set_sequence(const ByteSeq& x) {
  if (x.empty() || x[0] != kBos)
    throw std::runtime_error("InferenceSession: sequence must begin with BOS");
  seq_.clear();
  patcher_.reset();
  invalidate_from(1);
  latents_.clear();
  latent_rows_ = 0;
  latent_gen_.clear();
  for (Symbol s : x) append(s);
}

void InferenceSession::append(Symbol s) {
  if (s < 0 || s >= model_.config.vocab)
    throw std::runtime_error("InferenceSession: symbol out of range");
  seq_.push_back(s);
  patcher_.push(s);
}

void InferenceSession::replace_tail(int pos, const ByteSeq& symbols) {
  if (pos < 1 || pos > size() + 1)
    throw std::runtime_error("replace_tail: bad position");
  ByteSeq next(seq_.begin(), seq_.begin() + (pos - 1));
  next.insert(next.end(), symbols.begin(), symbols.end());
  size_t common = 0;
  while (common < next.size() && common < seq_.size() &&
         next[common] == seq_[common])
    ++common;
  if (common == next.size() && common == seq_.size()) return;
  invalidate_from(static_cast<int>(common) + 1);
  patcher_.truncate_to(static_cast<int>(common));
  seq_.resize(common);
  for (size_t i = common; i < next.size(); ++i) append(next[i]);
}

void InferenceSession::invalidate_from(int pos) {
  const int keep = pos - 1;
  const int dl = model_.config.d_local;
  const int dg = model_.config.d_global;
  enc_rows_ = std::min(enc_rows_, keep);
  enc_embed_rows_.resize(static_cast<size_t>(enc_rows_) * dl);
  for (auto& c : enc_cache_) c.truncate(std::min(c.rows, enc_rows_), dl);
  // latent spans touching invalidated bytes must be rebuilt on next encode
  int keep_latents = 0;
  while (keep_latents < static_cast<int>(latent_spans_.size()) &&
         latent_spans_[keep_latents].second <= keep)
    ++keep_latents;
  latent_spans_.resize(keep_latents);
  glob_rows_ = std::min(glob_rows_, keep_latents);
  glob_in_rows_.resize(static_cast<size_t>(glob_rows_) * dg);
  for (auto& c : glob_cache_) c.truncate(std::min(c.rows, glob_rows_), dg);
  // decoder rows at or past the edit point depend on changed content
  int dec_keep = std::min<int>(static_cast<int>(dec_meta_.size()), keep);
  dec_meta_.resize(dec_keep);
  for (auto& c : dec_cache_) c.truncate(std::min(c.rows, dec_keep), dl);
}

void InferenceSession::extend_encoder_rows() {
  const auto& cfg = model_.config;
  const int dl = cfg.d_local;
  const int n = size();
  if (enc_rows_ >= n) return;
  enc_embed_rows_.resize(static_cast<size_t>(n) * dl);
  for (auto& c : enc_cache_) {
    c.k.resize(static_cast<size_t>(n) * dl);
    c.v.resize(static_cast<size_t>(n) * dl);
    c.out.resize(static_cast<size_t>(n) * dl);
  }
  const int heads = cfg.n_heads_enc;
  const int dh = dl / heads;
  RowWork w;
  w.resize(dl, cfg.ffn_hidden_local, n);
  for (int r = enc_rows_; r < n; ++r) {
    real* embed = enc_embed_rows_.data() + static_cast<size_t>(r) * dl;
    std::memcpy(embed,
                model_.enc_embed.data().data() +
                    static_cast<size_t>(seq_[r]) * dl,
                sizeof(real) * dl);
    const real* x = embed;
    for (size_t l = 0; l < enc_cache_.size(); ++l) {
      const LayerParams& p = model_.enc_layers[l];
      LayerCache& c = enc_cache_[l];
      k::rmsnorm_row(x, p.attn_norm_gain.data().data(), dl, k::kRmsNormEps,
                     w.xn.data());
      k::matvec(w.xn.data(), p.attn.wq.data().data(), dl, dl, w.q.data());
      k::matvec(w.xn.data(), p.attn.wk.data().data(), dl, dl, w.kk.data());
      k::matvec(w.xn.data(), p.attn.wv.data().data(), dl, dl, w.vv.data());
      k::rope_row(w.q.data(), dl, dh, r + 1, cfg.rope_theta);
      k::rope_row(w.kk.data(), dl, dh, r + 1, cfg.rope_theta);
      std::memcpy(c.k.data() + static_cast<size_t>(r) * dl, w.kk.data(),
                  sizeof(real) * dl);
      std::memcpy(c.v.data() + static_cast<size_t>(r) * dl, w.vv.data(),
                  sizeof(real) * dl);
      int j0 = cfg.attn_window > 0 ? std::max(0, r - cfg.attn_window + 1) : 0;
      int m = r - j0 + 1;
      for (int h = 0; h < heads; ++h)
        k::attention_row(w.q.data() + h * dh,
                         c.k.data() + static_cast<size_t>(j0) * dl + h * dh, dl,
                         c.v.data() + static_cast<size_t>(j0) * dl + h * dh, dl,
                         nullptr, m, dh, w.probs.data(), w.att.data() + h * dh);
      k::matvec(w.att.data(), p.attn.wo.data().data(), dl, dl, w.o.data());
      for (int j = 0; j < dl; ++j) w.h[j] = x[j] + w.o[j];
      ffn_row(p, w.h.data(), dl, cfg.ffn_hidden_local, w,
              c.out.data() + static_cast<size_t>(r) * dl);
      c.rows = r + 1;
      x = c.out.data() + static_cast<size_t>(r) * dl;
    }
  }
  enc_rows_ = n;
}

void InferenceSession::encode_global() {
  counters_.encoder_global_calls += 1;
  const auto& cfg = model_.config;
  const int dl = cfg.d_local;
  const int dg = cfg.d_global;
  PatchSegmentation seg = patcher_.segmentation();
  const int m = seg.patch_count();

  if (!use_cache_) {
    NoGradGuard ng;
    Tensor t = encode_bytes(model_, seq_, seg);
    Tensor o = global_forward(model_, t);
    latents_ = o.data();
    latent_rows_ = m;
    latent_gen_.assign(m, ++gen_counter_);
    latents_computed_ += m;
    return;
  }

  extend_encoder_rows();
  // first patch whose span changed since the last refresh
  int p0 = 0;
  while (p0 < static_cast<int>(latent_spans_.size()) && p0 < m) {
    int s = seg.starts[p0], e = seg.patch_end(p0 + 1);
    if (latent_spans_[p0] != std::make_pair(s, e)) break;
    ++p0;
  }
  latent_spans_.resize(p0);
  glob_rows_ = p0;
  glob_in_rows_.resize(static_cast<size_t>(p0) * dg);
  for (auto& c : glob_cache_) c.truncate(p0, dg);

  const real* final_rows =
      enc_cache_.empty() ? enc_embed_rows_.data() : enc_cache_.back().out.data();
  std::vector<real> pooled(dl);
  glob_in_rows_.resize(static_cast<size_t>(m) * dg);
  for (int j = p0; j < m; ++j) {
    int s = seg.starts[j], e = seg.patch_end(j + 1);
    k::mean_rows(final_rows, s - 1, e, dl, pooled.data());
    k::matvec(pooled.data(), model_.enc_proj.data().data(), dl, dg,
              glob_in_rows_.data() + static_cast<size_t>(j) * dg);
    latent_spans_.emplace_back(s, e);
  }
  latents_computed_ += m - p0;

  // global layers over latent rows [p0, m)
  const int heads = cfg.n_heads_glob;
  const int dh = dg / heads;
  for (auto& c : glob_cache_) {
    c.k.resize(static_cast<size_t>(m) * dg);
    c.v.resize(static_cast<size_t>(m) * dg);
    c.out.resize(static_cast<size_t>(m) * dg);
  }
  RowWork w;
  w.resize(dg, cfg.ffn_hidden_global, m);
  for (int r = p0; r < m; ++r) {
    const real* x = glob_in_rows_.data() + static_cast<size_t>(r) * dg;
    for (size_t l = 0; l < glob_cache_.size(); ++l) {
      const LayerParams& p = model_.glob_layers[l];
      LayerCache& c = glob_cache_[l];
      k::rmsnorm_row(x, p.attn_norm_gain.data().data(), dg, k::kRmsNormEps,
                     w.xn.data());
      k::matvec(w.xn.data(), p.attn.wq.data().data(), dg, dg, w.q.data());
      k::matvec(w.xn.data(), p.attn.wk.data().data(), dg, dg, w.kk.data());
      k::matvec(w.xn.data(), p.attn.wv.data().data(), dg, dg, w.vv.data());
      k::rope_row(w.q.data(), dg, dh, r + 1, cfg.rope_theta);
      k::rope_row(w.kk.data(), dg, dh, r + 1, cfg.rope_theta);
      std::memcpy(c.k.data() + static_cast<size_t>(r) * dg, w.kk.data(),
                  sizeof(real) * dg);
      std::memcpy(c.v.data() + static_cast<size_t>(r) * dg, w.vv.data(),
                  sizeof(real) * dg);
      int j0 = cfg.attn_window > 0 ? std::max(0, r - cfg.attn_window + 1) : 0;
      int keys = r - j0 + 1;
      for (int h = 0; h < heads; ++h)
        k::attention_row(w.q.data() + h * dh,
                         c.k.data() + static_cast<size_t>(j0) * dg + h * dh, dg,
                         c.v.data() + static_cast<size_t>(j0) * dg + h * dh, dg,
                         nullptr, keys, dh, w.probs.data(),
                         w.att.data() + h * dh);
      k::matvec(w.att.data(), p.attn.wo.data().data(), dg, dg, w.o.data());
      for (int j = 0; j < dg; ++j) w.h[j] = x[j] + w.o[j];
      ffn_row(p, w.h.data(), dg, cfg.ffn_hidden_global, w,
              c.out.data() + static_cast<size_t>(r) * dg);
      c.rows = r + 1;
      x = c.out.data() + static_cast<size_t>(r) * dg;
    }
  }
  glob_rows_ = m;

  const real* out_rows =
      glob_cache_.empty() ? glob_in_rows_.data() : glob_cache_.back().out.data();
  latents_.resize(static_cast<size_t>(m) * dg);
  latent_gen_.resize(m, 0);
  ++gen_counter_;
  for (int j = p0; j < m; ++j) {
    std::memcpy(latents_.data() + static_cast<size_t>(j) * dg,
                out_rows + static_cast<size_t>(j) * dg, sizeof(real) * dg);
    latent_gen_[j] = gen_counter_;
  }
  latent_rows_ = m;
}

void InferenceSession::clamp_assignments(AttentionMaskSpec& spec) const {
  for (int& a : spec.cross_assign) a = std::min(a, latent_rows_);
  spec.latent_count = latent_rows_;
}

AttentionMaskSpec InferenceSession::causal_masks() const {
  AttentionMaskSpec spec =
      build_inference_masks(size(), 0, segmentation(), !use_cache_);
  clamp_assignments(spec);
  return spec;
}

AttentionMaskSpec InferenceSession::block_masks(int block) const {
  AttentionMaskSpec spec =
      build_inference_masks(size(), block, segmentation(), !use_cache_);
  clamp_assignments(spec);
  return spec;
}

AttentionMaskSpec InferenceSession::draft_masks(int draft_len) const {
  const int n = size();
  PatchSegmentation seg = segmentation();
  AttentionMaskSpec spec = build_inference_masks(n, 0, seg, false);
  const int total = n + draft_len;
  spec.n = total;
  spec.prefix_len = total;  // draft rows are causal and cacheable
  if (!use_cache_) {
    BoolMat mask(total, total, 0);
    for (int i = 0; i < total; ++i)
      for (int j = 0; j <= i; ++j) mask.set(i, j, 1);
    spec.self_mask = std::move(mask);
  }
  for (int i = n; i < total; ++i) {
    spec.cross_assign.push_back(seg.patch_count());
    spec.positions.push_back(i + 1);
  }
  clamp_assignments(spec);
  return spec;
}

std::vector<real> InferenceSession::decoder_uncached(
    const AttentionMaskSpec& masks, const ByteSeq& input, int want_row0,
    int want_rows) {
  NoGradGuard ng;
  Tensor lat = Tensor::from_data(
      {latent_rows_, model_.config.d_global}, latents_, false);
  Tensor logits = decoder_forward(model_, input, lat, masks);
  const int v = model_.config.vocab;
  std::vector<real> out(static_cast<size_t>(want_rows) * v);
  std::memcpy(out.data(),
              logits.data().data() + static_cast<size_t>(want_row0) * v,
              sizeof(real) * out.size());
  return out;
}

std::vector<real> InferenceSession::decoder_forward_rows(
    const AttentionMaskSpec& masks, const ByteSeq& input, int want_row0,
    int want_rows) {
  counters_.decoder_calls += 1;
  if (!use_cache_) return decoder_uncached(masks, input, want_row0, want_rows);

  const auto& cfg = model_.config;
  const int dl = cfg.d_local;
  const int dg = cfg.d_global;
  const int u = cfg.latent_splits();
  const int heads = cfg.n_heads_dec;
  const int dh = dl / heads;
  const int n = masks.n;
  const int cacheable = masks.prefix_len;

  // how much of the cached prefix is still valid
  int valid = 0;
  while (valid < static_cast<int>(dec_meta_.size()) && valid < cacheable) {
    const DecRowMeta& mrow = dec_meta_[valid];
    int assign = masks.cross_assign[valid];
    if (mrow.symbol != input[valid] || mrow.assign != assign ||
        mrow.position != masks.positions[valid] ||
        mrow.latent_gen != latent_gen_[assign - 1])
      break;
    ++valid;
  }
  dec_meta_.resize(valid);
  for (auto& c : dec_cache_) c.truncate(valid, dl);

  for (auto& c : dec_cache_) {
    c.k.resize(static_cast<size_t>(cacheable) * dl);
    c.v.resize(static_cast<size_t>(cacheable) * dl);
    c.out.resize(static_cast<size_t>(cacheable) * dl);
  }

  RowWork w;
  w.resize(dl, cfg.ffn_hidden_local, n);
  std::vector<real> slice_src(static_cast<size_t>(u) * dl);
  std::vector<real> ck(static_cast<size_t>(u) * dl), cv(static_cast<size_t>(u) * dl);
  std::vector<real> cq(dl), catt(dl), cprobs(u), brow(dl);

  auto cross_row = [&](const DecoderLayerParams& dlp, const real* x, int assign,
                       real* out_row) {
    // split slices of the assigned latent, then per-head attention over them
    k::matvec(latents_.data() + static_cast<size_t>(assign - 1) * dg,
              dlp.w_dc.data().data(), dg, dg, slice_src.data());
    for (int s = 0; s < u; ++s) {
      k::matvec(slice_src.data() + static_cast<size_t>(s) * dl,
                dlp.cross.wk.data().data(), dl, dl,
                ck.data() + static_cast<size_t>(s) * dl);
      k::matvec(slice_src.data() + static_cast<size_t>(s) * dl,
                dlp.cross.wv.data().data(), dl, dl,
                cv.data() + static_cast<size_t>(s) * dl);
    }
    k::matvec(x, dlp.cross.wq.data().data(), dl, dl, cq.data());
    for (int h = 0; h < heads; ++h)
      k::attention_row(cq.data() + h * dh, ck.data() + h * dh, dl,
                       cv.data() + h * dh, dl, nullptr, u, dh, cprobs.data(),
                       catt.data() + h * dh);
    k::matvec(catt.data(), dlp.cross.wo.data().data(), dl, dl, w.o.data());
    for (int j = 0; j < dl; ++j) out_row[j] = x[j] + w.o[j];
  };

  std::vector<real> embed(dl);
  // cached prefix rows, row-synchronous through the layers
  for (int r = valid; r < cacheable; ++r) {
    std::memcpy(embed.data(),
                model_.dec_embed.data().data() +
                    static_cast<size_t>(input[r]) * dl,
                sizeof(real) * dl);
    const real* x = embed.data();
    for (size_t l = 0; l < dec_cache_.size(); ++l) {
      const DecoderLayerParams& dlp = model_.dec_layers[l];
      LayerCache& c = dec_cache_[l];
      cross_row(dlp, x, masks.cross_assign[r], brow.data());
      const LayerParams& p = dlp.layer;
      k::rmsnorm_row(brow.data(), p.attn_norm_gain.data().data(), dl,
                     k::kRmsNormEps, w.xn.data());
      k::matvec(w.xn.data(), p.attn.wq.data().data(), dl, dl, w.q.data());
      k::matvec(w.xn.data(), p.attn.wk.data().data(), dl, dl, w.kk.data());
      k::matvec(w.xn.data(), p.attn.wv.data().data(), dl, dl, w.vv.data());
      k::rope_row(w.q.data(), dl, dh, masks.positions[r], cfg.rope_theta);
      k::rope_row(w.kk.data(), dl, dh, masks.positions[r], cfg.rope_theta);
      std::memcpy(c.k.data() + static_cast<size_t>(r) * dl, w.kk.data(),
                  sizeof(real) * dl);
      std::memcpy(c.v.data() + static_cast<size_t>(r) * dl, w.vv.data(),
                  sizeof(real) * dl);
      // causal prefix rows admit exactly columns [0, r]
      for (int h = 0; h < heads; ++h)
        k::attention_row(w.q.data() + h * dh, c.k.data() + h * dh, dl,
                         c.v.data() + h * dh, dl, nullptr, r + 1, dh,
                         w.probs.data(), w.att.data() + h * dh);
      k::matvec(w.att.data(), p.attn.wo.data().data(), dl, dl, w.o.data());
      for (int j = 0; j < dl; ++j) w.h[j] = brow[j] + w.o[j];
      ffn_row(p, w.h.data(), dl, cfg.ffn_hidden_local, w,
              c.out.data() + static_cast<size_t>(r) * dl);
      c.rows = r + 1;
      x = c.out.data() + static_cast<size_t>(r) * dl;
    }
    DecRowMeta meta;
    meta.symbol = input[r];
    meta.assign = masks.cross_assign[r];
    meta.position = masks.positions[r];
    meta.latent_gen = latent_gen_[meta.assign - 1];
    dec_meta_.push_back(meta);
    ++dec_rows_computed_;
  }

  // volatile rows (masked block), layer-synchronous: they attend each other
  const int vol = n - cacheable;
  std::vector<real> vol_x, vol_b, vol_next, vol_k, vol_v, scratch_k, scratch_v;
  if (vol > 0) {
    vol_x.resize(static_cast<size_t>(vol) * dl);
    vol_b.resize(static_cast<size_t>(vol) * dl);
    vol_next.resize(static_cast<size_t>(vol) * dl);
    vol_k.resize(static_cast<size_t>(vol) * dl);
    vol_v.resize(static_cast<size_t>(vol) * dl);
    scratch_k.resize(static_cast<size_t>(n) * dl);
    scratch_v.resize(static_cast<size_t>(n) * dl);
    for (int r = 0; r < vol; ++r)
      std::memcpy(vol_x.data() + static_cast<size_t>(r) * dl,
                  model_.dec_embed.data().data() +
                      static_cast<size_t>(input[cacheable + r]) * dl,
                  sizeof(real) * dl);
    for (size_t l = 0; l < dec_cache_.size(); ++l) {
      const DecoderLayerParams& dlp = model_.dec_layers[l];
      const LayerParams& p = dlp.layer;
      LayerCache& c = dec_cache_[l];
      for (int r = 0; r < vol; ++r) {
        cross_row(dlp, vol_x.data() + static_cast<size_t>(r) * dl,
                  masks.cross_assign[cacheable + r],
                  vol_b.data() + static_cast<size_t>(r) * dl);
        const real* b = vol_b.data() + static_cast<size_t>(r) * dl;
        k::rmsnorm_row(b, p.attn_norm_gain.data().data(), dl, k::kRmsNormEps,
                       w.xn.data());
        k::matvec(w.xn.data(), p.attn.wk.data().data(), dl, dl,
                  vol_k.data() + static_cast<size_t>(r) * dl);
        k::matvec(w.xn.data(), p.attn.wv.data().data(), dl, dl,
                  vol_v.data() + static_cast<size_t>(r) * dl);
        k::rope_row(vol_k.data() + static_cast<size_t>(r) * dl, dl, dh,
                    masks.positions[cacheable + r], cfg.rope_theta);
      }
      std::memcpy(scratch_k.data(), c.k.data(),
                  sizeof(real) * static_cast<size_t>(cacheable) * dl);
      std::memcpy(scratch_v.data(), c.v.data(),
                  sizeof(real) * static_cast<size_t>(cacheable) * dl);
      std::memcpy(scratch_k.data() + static_cast<size_t>(cacheable) * dl,
                  vol_k.data(), sizeof(real) * static_cast<size_t>(vol) * dl);
      std::memcpy(scratch_v.data() + static_cast<size_t>(cacheable) * dl,
                  vol_v.data(), sizeof(real) * static_cast<size_t>(vol) * dl);
      for (int r = 0; r < vol; ++r) {
        const real* b = vol_b.data() + static_cast<size_t>(r) * dl;
        k::rmsnorm_row(b, p.attn_norm_gain.data().data(), dl, k::kRmsNormEps,
                       w.xn.data());
        k::matvec(w.xn.data(), p.attn.wq.data().data(), dl, dl, w.q.data());
        k::rope_row(w.q.data(), dl, dh, masks.positions[cacheable + r],
                    cfg.rope_theta);
        // block rows admit every column
        for (int h = 0; h < heads; ++h)
          k::attention_row(w.q.data() + h * dh, scratch_k.data() + h * dh, dl,
                           scratch_v.data() + h * dh, dl, nullptr, n, dh,
                           w.probs.data(), w.att.data() + h * dh);
        k::matvec(w.att.data(), p.attn.wo.data().data(), dl, dl, w.o.data());
        for (int j = 0; j < dl; ++j) w.h[j] = b[j] + w.o[j];
        ffn_row(p, w.h.data(), dl, cfg.ffn_hidden_local, w,
                vol_next.data() + static_cast<size_t>(r) * dl);
      }
      vol_x.swap(vol_next);
    }
  }

  // head over the requested rows
  const int v = cfg.vocab;
  std::vector<real> logits(static_cast<size_t>(want_rows) * v);
  const real* final_prefix =
      dec_cache_.empty() ? nullptr : dec_cache_.back().out.data();
  std::vector<real> normed(dl);
  for (int i = 0; i < want_rows; ++i) {
    int r = want_row0 + i;
    const real* row;
    if (r < cacheable) {
      row = final_prefix + static_cast<size_t>(r) * dl;
    } else {
      row = vol_x.data() + static_cast<size_t>(r - cacheable) * dl;
    }
    k::rmsnorm_row(row, model_.dec_final_norm_gain.data().data(), dl,
                   k::kRmsNormEps, normed.data());
    k::matvec(normed.data(), model_.head.data().data(), dl, v,
              logits.data() + static_cast<size_t>(i) * v);
  }
  return logits;
}

std::vector<real> InferenceSession::causal_logits_all() {
  if (latent_rows_ == 0)
    throw std::runtime_error("decoder forward before any encode_global");
  AttentionMaskSpec masks = causal_masks();
  return decoder_forward_rows(masks, seq_, 0, size());
}

std::vector<real> InferenceSession::causal_logits_last() {
  if (latent_rows_ == 0)
    throw std::runtime_error("decoder forward before any encode_global");
  AttentionMaskSpec masks = causal_masks();
  return decoder_forward_rows(masks, seq_, size() - 1, 1);
}

std::vector<real> InferenceSession::block_logits(const ByteSeq& block) {
  if (latent_rows_ == 0)
    throw std::runtime_error("decoder forward before any encode_global");
  const int b = static_cast<int>(block.size());
  AttentionMaskSpec masks = block_masks(b);
  ByteSeq input = seq_;
  input.insert(input.end(), block.begin(), block.end());
  return decoder_forward_rows(masks, input, size(), b);
}

std::vector<real> InferenceSession::draft_logits(const ByteSeq& draft) {
  if (latent_rows_ == 0)
    throw std::runtime_error("decoder forward before any encode_global");
  const int d = static_cast<int>(draft.size());
  AttentionMaskSpec masks = draft_masks(d);
  ByteSeq input = seq_;
  input.insert(input.end(), draft.begin(), draft.end());
  return decoder_forward_rows(masks, input, size() + d - 1, 1);
}

}  // namespace bltd
