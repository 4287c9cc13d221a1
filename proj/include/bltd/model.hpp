#pragma once

#include <string>
#include <vector>

#include "bltd/masks.hpp"
#include "bltd/patching.hpp"
#include "bltd/tensor.hpp"

namespace bltd {

struct ModelConfig {
  int d_local = 64;
  int d_global = 128;
  int n_layers_enc = 1;
  int n_layers_glob = 2;
  int n_layers_dec = 2;
  int n_heads_enc = 4;
  int n_heads_glob = 4;
  int n_heads_dec = 4;
  int ffn_hidden_local = 128;   // 2 * d_local unless overridden
  int ffn_hidden_global = 256;  // 2 * d_global unless overridden
  int vocab = kVocabSize;
  real rope_theta = 500000;
  int attn_window = 512;

  int latent_splits() const { return d_global / d_local; }  // U
  void validate() const;
};

struct AttentionParams {
  Tensor wq, wk, wv, wo;
};

struct LayerParams {
  Tensor attn_norm_gain;
  AttentionParams attn;
  Tensor ffn_norm_gain;
  Tensor w_gate, w_up, w_down;
};

struct DecoderLayerParams {
  Tensor w_dc;  // latent split projection, [d_global x d_global]
  AttentionParams cross;
  LayerParams layer;
};

struct HierarchicalModel {
  ModelConfig config;
  Tensor enc_embed;
  std::vector<LayerParams> enc_layers;
  Tensor enc_proj;  // patch pooling projection, [d_local x d_global]
  std::vector<LayerParams> glob_layers;
  Tensor dec_embed;
  std::vector<DecoderLayerParams> dec_layers;
  Tensor dec_final_norm_gain;
  Tensor head;  // [d_local x vocab], untied from the embedding

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  int64_t param_count_encoder() const;
  int64_t param_count_global() const;
  int64_t param_count_decoder() const;
};

HierarchicalModel init_model(const ModelConfig& config, Rng& rng);

// Deep value copy (fresh parameter tensors), used for snapshots.
HierarchicalModel clone_model(const HierarchicalModel& m);

// Local encoder: windowed-causal byte transformer, then mean-pool per patch
// and project to d_global. One latent row per patch.
Tensor encode_bytes(const HierarchicalModel& m, const ByteSeq& x,
                    const PatchSegmentation& seg);

// Global model: causal transformer over latent rows with rotary positions
// equal to patch indices. Zero layers is the identity.
Tensor global_forward(const HierarchicalModel& m, const Tensor& t);

// Linear map d_global -> U*d_local followed by the split into U rows.
Tensor split_latent(const Tensor& w_dc, const Tensor& latent_row, int u);

// Local decoder over an input that may mix clean bytes, MASK and PAD, under
// an explicit mask spec. Returns logits [n x vocab]. When embedded_out is
// given it receives the embedded input rows (a graph node, so per-position
// input gradients can be inspected).
Tensor decoder_forward(const HierarchicalModel& m, const ByteSeq& input,
                       const Tensor& latents, const AttentionMaskSpec& masks,
                       Tensor* embedded_out = nullptr);

}  // namespace bltd
