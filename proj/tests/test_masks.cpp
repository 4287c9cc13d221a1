#include <doctest.h>

#include "bltd/masks.hpp"
#include "mask_oracle.hpp"

using namespace bltd;
using namespace bltd::testing;

TEST_CASE("inference masks: B=0 is the plain causal configuration") {
  PatchSegmentation seg;
  seg.sequence_length = 6;
  seg.starts = {1, 2, 5};
  seg.last_patch_closed = false;
  AttentionMaskSpec spec = build_inference_masks(6, 0, seg);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(static_cast<bool>(spec.self_mask.at(i, j)) == (j <= i));
}

TEST_CASE("inference masks: block rows admit every column") {
  PatchSegmentation seg;
  seg.sequence_length = 5;
  seg.starts = {1, 2, 4};
  seg.last_patch_closed = true;
  AttentionMaskSpec spec = build_inference_masks(5, 3, seg);
  for (int i = 5; i < 8; ++i) {
    CHECK(spec.cross_assign[i] == 3);
    for (int j = 0; j < 8; ++j) CHECK(spec.self_mask.at(i, j) == 1);
  }
}

TEST_CASE("inference masks: last-byte latent follows the closed flag") {
  PatchSegmentation seg;
  seg.sequence_length = 5;
  seg.starts = {1, 2, 4};
  seg.last_patch_closed = false;
  AttentionMaskSpec open_spec = build_inference_masks(5, 0, seg);
  CHECK(open_spec.cross_assign[4] == 2);  // inside the still-open patch 3
  seg.last_patch_closed = true;
  AttentionMaskSpec closed_spec = build_inference_masks(5, 0, seg);
  CHECK(closed_spec.cross_assign[4] == 3);  // patch 3 just completed
}

TEST_CASE("inference masks: empty prefix is rejected") {
  PatchSegmentation seg;
  seg.sequence_length = 0;
  CHECK_THROWS(build_inference_masks(0, 4, seg));
}

TEST_CASE("training masks: smallest case M=2, one block") {
  PatchSegmentation seg;
  seg.sequence_length = 4;
  seg.starts = {1, 2};  // patch 2 covers 2..4
  seg.last_patch_closed = true;
  BlockPlan plan = build_blocks(dummy_clean_bytes(4), seg, 3);
  AttentionMaskSpec spec = build_training_masks(seg, plan);
  REQUIRE(spec.n == 7);
  for (int r = 4; r < 7; ++r) {
    // block rows admit their own block plus clean positions before start 2
    for (int j = 0; j < 7; ++j)
      CHECK(static_cast<bool>(spec.self_mask.at(r, j)) == (j == 0 || j >= 4));
    CHECK(spec.cross_assign[r] == 1);
    CHECK(spec.positions[r] == 2 + (r - 4));
  }
}

TEST_CASE("training masks: clean rows never admit corrupted columns") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    PatchSegmentation seg = random_segmentation(rng);
    int b = 1 + static_cast<int>(rng.below(8));
    BlockPlan plan = build_blocks(dummy_clean_bytes(seg.sequence_length), seg, b);
    AttentionMaskSpec spec = build_training_masks(seg, plan);
    for (int i = 0; i < seg.sequence_length; ++i)
      for (int j = seg.sequence_length; j < spec.n; ++j)
        CHECK(spec.self_mask.at(i, j) == 0);
  }
}

TEST_CASE("training masks: inconsistent plan is rejected") {
  PatchSegmentation seg;
  seg.sequence_length = 6;
  seg.starts = {1, 2, 4};
  BlockPlan plan = build_blocks(dummy_clean_bytes(6), seg, 2);
  plan.source_start[1] = 5;  // no longer matches the segmentation
  CHECK_THROWS(build_training_masks(seg, plan));
}

TEST_CASE("mask builders agree with the per-pair rule oracle (fuzz)") {
  Rng rng(2024);
  for (int trial = 0; trial < 150; ++trial) {
    PatchSegmentation seg = random_segmentation(rng);
    int b = 1 + static_cast<int>(rng.below(8));
    CHECK(inference_masks_match_oracle(seg, b));
    CHECK(inference_masks_match_oracle(seg, 0));
    CHECK(training_masks_match_oracle(seg, b));
  }
}

TEST_CASE("self mask admits the diagonal everywhere") {
  Rng rng(31337);
  for (int trial = 0; trial < 20; ++trial) {
    PatchSegmentation seg = random_segmentation(rng);
    int b = 1 + static_cast<int>(rng.below(8));
    AttentionMaskSpec inf = build_inference_masks(seg.sequence_length, b, seg);
    for (int i = 0; i < inf.n; ++i) CHECK(inf.self_mask.at(i, i) == 1);
    BlockPlan plan = build_blocks(dummy_clean_bytes(seg.sequence_length), seg, b);
    AttentionMaskSpec tr = build_training_masks(seg, plan);
    for (int i = 0; i < tr.n; ++i) CHECK(tr.self_mask.at(i, i) == 1);
  }
}
