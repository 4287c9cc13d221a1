#pragma once

#include <vector>

#include "bltd/diffusion.hpp"
#include "bltd/patching.hpp"
#include "bltd/tensor.hpp"

namespace bltd {

// Decoder attention layout: per-pair self-attention admissibility, the
// 1-based latent token each position may cross-attend to, and the 1-based
// original position index used for rotary encoding.
struct AttentionMaskSpec {
  int n = 0;           // total decoder input positions
  int prefix_len = 0;  // clean positions come first
  int latent_count = 0;
  BoolMat self_mask;
  std::vector<int> cross_assign;
  std::vector<int> positions;
};

// Generation-time masks over [x_1..x_N ; MASK^B]: causal prefix, fully
// bidirectional block rows, block rows tied to the last latent token. B = 0
// gives the plain causal (autoregressive) configuration. The incremental
// decoder derives admissibility structurally and may skip materializing the
// per-pair matrix.
AttentionMaskSpec build_inference_masks(int n, int b,
                                        const PatchSegmentation& seg,
                                        bool include_self_mask = true);

// Training-time masks over [x ; x_block]: causal clean positions, blocks
// bidirectional within themselves plus causal into the clean bytes before
// their patch start, no attention between distinct blocks and none from
// clean into corrupted positions.
AttentionMaskSpec build_training_masks(const PatchSegmentation& seg,
                                       const BlockPlan& plan);

}  // namespace bltd
