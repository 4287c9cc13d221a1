#pragma once

#include <vector>

#include "bltd/masks.hpp"
#include "bltd/model.hpp"
#include "bltd/patching.hpp"

namespace bltd {

// Counts actual component invocations, independently of the engines' own
// bookkeeping; traces are checked against these in tests.
struct ComponentCounters {
  int64_t encoder_global_calls = 0;
  int64_t decoder_calls = 0;
};

// Inference-time state for one generation: the committed sequence, its
// segmentation, the latest latent snapshot, and (when caching is enabled)
// incremental per-layer states for encoder, global model and decoder prefix.
//
// With caching on, re-encoding recomputes only byte rows and latent rows
// appended or invalidated since the previous call, and decoder forwards reuse
// prefix rows whose (symbol, assigned latent, rotary position, latent
// generation) tuple is unchanged. Cached and uncached paths produce
// bit-identical values: they share the same row kernels and summation order.
class InferenceSession {
 public:
  InferenceSession(const HierarchicalModel& model, const EntropyModel& entropy,
                   double threshold, int max_patch, bool use_cache = true);

  void set_sequence(const ByteSeq& x);
  void append(Symbol s);
  // Replace everything from 1-based position pos with the given symbols;
  // cached state for an unchanged prefix is kept.
  void replace_tail(int pos, const ByteSeq& symbols);

  const ByteSeq& sequence() const { return seq_; }
  int size() const { return static_cast<int>(seq_.size()); }
  bool boundary_next() const { return patcher_.boundary_next(); }
  PatchSegmentation segmentation() const { return patcher_.segmentation(); }

  // Refresh the latent snapshot for the current sequence; one encoder/global
  // invocation.
  void encode_global();
  int latent_count() const { return latent_rows_; }

  // Decoder forwards; each counts one decoder invocation.
  std::vector<real> causal_logits_all();   // n rows x vocab
  std::vector<real> causal_logits_last();  // vocab
  // Logits at the B block rows for [x ; block] under the block-diffusion
  // inference masks.
  std::vector<real> block_logits(const ByteSeq& block);
  // Logits at the final row of [x ; draft]: causal, draft rows tied to the
  // last available latent.
  std::vector<real> draft_logits(const ByteSeq& draft);

  const ComponentCounters& counters() const { return counters_; }

  // Cache audit hooks.
  int64_t latents_computed() const { return latents_computed_; }
  int64_t decoder_rows_computed() const { return dec_rows_computed_; }

 private:
  // Flat row-major per-layer state; k/v hold post-rotary keys and values,
  // out holds the layer's output rows.
  struct LayerCache {
    std::vector<real> k, v, out;
    int rows = 0;
    void truncate(int n, int d) {
      rows = n;
      k.resize(static_cast<size_t>(n) * d);
      v.resize(static_cast<size_t>(n) * d);
      out.resize(static_cast<size_t>(n) * d);
    }
  };
  struct DecRowMeta {
    Symbol symbol = -1;
    int assign = 0;
    int position = 0;
    int64_t latent_gen = 0;
  };

  void invalidate_from(int pos);  // 1-based byte position
  void extend_encoder_rows();
  AttentionMaskSpec causal_masks() const;
  AttentionMaskSpec block_masks(int block) const;
  AttentionMaskSpec draft_masks(int draft_len) const;
  void clamp_assignments(AttentionMaskSpec& spec) const;
  // Compute decoder rows under `masks` for the full input symbol list; rows
  // below masks.prefix_len are cacheable, the rest are recomputed each call.
  // Returns logits for rows [want_row0, want_row0 + want_rows).
  std::vector<real> decoder_forward_rows(const AttentionMaskSpec& masks,
                                         const ByteSeq& input, int want_row0,
                                         int want_rows);
  std::vector<real> decoder_uncached(const AttentionMaskSpec& masks,
                                     const ByteSeq& input, int want_row0,
                                     int want_rows);

  const HierarchicalModel& model_;
  IncrementalPatcher patcher_;
  bool use_cache_;
  ByteSeq seq_;

  // latent snapshot (kept as-is between encodes; engines may deliberately
  // condition drafts on a stale snapshot)
  std::vector<real> latents_;
  int latent_rows_ = 0;
  std::vector<int64_t> latent_gen_;
  int64_t gen_counter_ = 0;

  // encoder state
  std::vector<real> enc_embed_rows_;
  std::vector<LayerCache> enc_cache_;
  int enc_rows_ = 0;
  // patch layout at the last latent refresh: (start, end) pairs
  std::vector<std::pair<int, int>> latent_spans_;

  // global state
  std::vector<real> glob_in_rows_;  // encoder-pooled latent inputs
  std::vector<LayerCache> glob_cache_;
  int glob_rows_ = 0;

  // decoder prefix state
  std::vector<LayerCache> dec_cache_;
  std::vector<DecRowMeta> dec_meta_;

  ComponentCounters counters_;
  int64_t latents_computed_ = 0;
  int64_t dec_rows_computed_ = 0;
};

}  // namespace bltd
