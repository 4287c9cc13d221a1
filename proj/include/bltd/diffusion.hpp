#pragma once

#include <vector>

#include "bltd/common.hpp"
#include "bltd/patching.hpp"
#include "bltd/tensor.hpp"

namespace bltd {

// Fixed-size byte blocks aligned to patch starts. Block k (0-based) covers
// original positions starts[k+1] .. starts[k+1]+B-1 of the clean sequence,
// padded with PAD past the end of the sequence. Patch 1 has no block.
struct BlockPlan {
  int block_size = 0;
  std::vector<int> source_start;        // per block, 1-based start s_i
  std::vector<Symbol> values;           // flattened blocks, (M-1) * B
  std::vector<uint8_t> pad_mask;        // 1 where the slot is PAD

  int block_count() const { return static_cast<int>(source_start.size()); }
  int total() const { return block_count() * block_size; }
};

// Blocks after absorbing corruption at timestep t.
struct CorruptedBlocks {
  double t = 0;
  std::vector<Symbol> values;      // same layout as BlockPlan::values
  std::vector<uint8_t> mask_bitmap;  // 1 where the slot was replaced by MASK
};

BlockPlan build_blocks(const ByteSeq& x, const PatchSegmentation& seg, int b);

// One uniform draw on the open interval (0,1) per training example.
double sample_timestep(Rng& rng);

// Each non-PAD block position independently becomes MASK with probability t.
CorruptedBlocks corrupt(const BlockPlan& plan, double t, Rng& rng);

struct HierarchicalModel;

struct LossTerms {
  Tensor clean;  // autoregressive next-byte loss over the clean sequence
  Tensor mask;   // 1/t-weighted masked reconstruction loss over the blocks
  Tensor total;
};

// One decoder forward over [x; corrupted blocks] under the training masks.
LossTerms combined_loss(const HierarchicalModel& model, const ByteSeq& x,
                        const PatchSegmentation& seg, const BlockPlan& plan,
                        const CorruptedBlocks& corrupted,
                        real mask_loss_weight = 1);

}  // namespace bltd
