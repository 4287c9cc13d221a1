#include "bltd/diffusion.hpp"

#include "bltd/masks.hpp"
#include "bltd/model.hpp"

namespace bltd {

BlockPlan build_blocks(const ByteSeq& x, const PatchSegmentation& seg, int b) {
  if (b < 1) throw std::runtime_error("build_blocks: block size must be >= 1");
  const int n = static_cast<int>(x.size());
  if (seg.sequence_length != n)
    throw std::runtime_error("build_blocks: segmentation does not tile input");
  const int m = seg.patch_count();
  if (m < 2) throw std::runtime_error("build_blocks: need at least two patches");

  BlockPlan plan;
  plan.block_size = b;
  plan.source_start.reserve(m - 1);
  plan.values.reserve(static_cast<size_t>(m - 1) * b);
  plan.pad_mask.reserve(static_cast<size_t>(m - 1) * b);
  for (int i = 2; i <= m; ++i) {
    const int s = seg.starts[i - 1];
    plan.source_start.push_back(s);
    for (int off = 0; off < b; ++off) {
      int pos = s + off;  // 1-based source position
      if (pos <= n) {
        plan.values.push_back(x[pos - 1]);
        plan.pad_mask.push_back(0);
      } else {
        plan.values.push_back(kPad);
        plan.pad_mask.push_back(1);
      }
    }
  }
  return plan;
}

double sample_timestep(Rng& rng) { return rng.u01_open(); }

CorruptedBlocks corrupt(const BlockPlan& plan, double t, Rng& rng) {
  if (!(t > 0.0) || !(t < 1.0))
    throw std::runtime_error("corrupt: timestep must lie in (0,1)");
  CorruptedBlocks out;
  out.t = t;
  out.values = plan.values;
  out.mask_bitmap.assign(plan.values.size(), 0);
  for (size_t i = 0; i < plan.values.size(); ++i) {
    if (plan.pad_mask[i]) continue;
    if (rng.u01() < t) {
      out.values[i] = kMask;
      out.mask_bitmap[i] = 1;
    }
  }
  return out;
}

LossTerms combined_loss(const HierarchicalModel& model, const ByteSeq& x,
                        const PatchSegmentation& seg, const BlockPlan& plan,
                        const CorruptedBlocks& corrupted,
                        real mask_loss_weight) {
  if (!(corrupted.t > 0.0) || !(corrupted.t < 1.0))
    throw std::runtime_error("combined_loss: timestep must lie in (0,1)");
  const int n = static_cast<int>(x.size());
  const int b = plan.block_size;

  ByteSeq input = x;
  input.insert(input.end(), corrupted.values.begin(), corrupted.values.end());
  AttentionMaskSpec masks = build_training_masks(seg, plan);

  Tensor latents = global_forward(model, encode_bytes(model, x, seg));
  Tensor logits = decoder_forward(model, input, latents, masks);

  const int total = masks.n;
  ByteSeq clean_targets(total, 0);
  std::vector<real> clean_weights(total, 0);
  for (int i = 1; i < n; ++i) {  // row i predicts x_{i+1}; BOS is never a target
    clean_targets[i - 1] = x[i];
    clean_weights[i - 1] = 1;
  }
  ByteSeq mask_targets(total, 0);
  std::vector<real> mask_weights(total, 0);
  for (int k = 0; k < plan.block_count(); ++k) {
    const int s = plan.source_start[k];
    for (int off = 0; off < b; ++off) {
      const size_t slot = static_cast<size_t>(k) * b + off;
      if (!corrupted.mask_bitmap[slot] || plan.pad_mask[slot]) continue;
      const int row = n + k * b + off;
      mask_targets[row] = x[s + off - 1];
      mask_weights[row] = 1;
    }
  }

  LossTerms out;
  out.clean = cross_entropy_from_logits(logits, clean_targets, clean_weights);
  out.mask = div_scalar(
      cross_entropy_from_logits(logits, mask_targets, mask_weights),
      static_cast<real>(corrupted.t));
  Tensor weighted =
      mask_loss_weight == real(1) ? out.mask : scale(out.mask, mask_loss_weight);
  out.total = add(out.clean, weighted);
  return out;
}

}  // namespace bltd
