#include "bltd/masks.hpp"

namespace bltd {

namespace {

// Position i is patch-final when the next position starts a new patch; for
// the last position that is the patcher's pending-boundary decision, which
// only depends on the first N symbols.
bool patch_final(const PatchSegmentation& seg, int i, int patch) {
  if (i < seg.sequence_length) return seg.patch_of(i + 1) != patch;
  return seg.last_patch_closed;
}

}  // namespace

AttentionMaskSpec build_inference_masks(int n, int b,
                                        const PatchSegmentation& seg,
                                        bool include_self_mask) {
  if (n < 1) throw std::runtime_error("build_inference_masks: empty prefix");
  if (b < 0) throw std::runtime_error("build_inference_masks: negative block");
  if (seg.sequence_length != n)
    throw std::runtime_error("build_inference_masks: segmentation length mismatch");
  const int m = seg.patch_count();
  const int total = n + b;

  AttentionMaskSpec spec;
  spec.n = total;
  spec.prefix_len = n;
  spec.latent_count = m;
  if (include_self_mask) spec.self_mask = BoolMat(total, total, 0);
  spec.cross_assign.resize(total);
  spec.positions.resize(total);

  for (int i = 1; i <= n; ++i) {
    if (include_self_mask)
      for (int j = 1; j <= i; ++j) spec.self_mask.set(i - 1, j - 1, 1);
    int p = seg.patch_of(i);
    spec.cross_assign[i - 1] = patch_final(seg, i, p) ? p : p - 1;
    spec.positions[i - 1] = i;
  }
  for (int i = n + 1; i <= total; ++i) {
    if (include_self_mask)
      for (int j = 1; j <= total; ++j) spec.self_mask.set(i - 1, j - 1, 1);
    spec.cross_assign[i - 1] = m;
    spec.positions[i - 1] = i;
  }
  return spec;
}

AttentionMaskSpec build_training_masks(const PatchSegmentation& seg,
                                       const BlockPlan& plan) {
  const int n = seg.sequence_length;
  const int m = seg.patch_count();
  const int b = plan.block_size;
  if (plan.block_count() != m - 1)
    throw std::runtime_error("build_training_masks: plan/segmentation mismatch");
  for (int k = 0; k < plan.block_count(); ++k)
    if (plan.source_start[k] != seg.starts[k + 1])
      throw std::runtime_error("build_training_masks: plan/segmentation mismatch");
  const int total = n + b * (m - 1);

  AttentionMaskSpec spec;
  spec.n = total;
  spec.prefix_len = n;
  spec.latent_count = m;
  spec.self_mask = BoolMat(total, total, 0);
  spec.cross_assign.resize(total);
  spec.positions.resize(total);

  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= i; ++j) spec.self_mask.set(i - 1, j - 1, 1);
    int p = seg.patch_of(i);
    spec.cross_assign[i - 1] = patch_final(seg, i, p) ? p : p - 1;
    spec.positions[i - 1] = i;
  }
  for (int k = 0; k < m - 1; ++k) {
    const int s = plan.source_start[k];  // patch k+2 starts here
    const int row0 = n + k * b;          // 0-based first row of this block
    for (int off = 0; off < b; ++off) {
      const int r = row0 + off;
      for (int j = 1; j < s; ++j) spec.self_mask.set(r, j - 1, 1);
      for (int j = row0; j < row0 + b; ++j) spec.self_mask.set(r, j, 1);
      spec.cross_assign[r] = k + 1;
      spec.positions[r] = s + off;
    }
  }
  return spec;
}

}  // namespace bltd
