#pragma once

#include <string>

#include "bltd/model.hpp"
#include "bltd/patching.hpp"
#include "bltd/training.hpp"

namespace bltd {

// Everything needed to run inference: the model, its patcher, and the
// calibrated entropy threshold.
struct Checkpoint {
  HierarchicalModel model;
  EntropyModel entropy;
  double threshold = 0;
  int max_patch = 8;
};

// Versioned binary container ("BLTD"): header with format version and the
// configuration as key-value pairs, then named parameter tensors in
// declaration order as 32-bit little-endian floats, then named blobs (the
// entropy model). Layout documented in docs/formats.md.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Full-precision training snapshot ("BLTS"): model and AdamW moments at
// native precision plus the step counter, for bit-exact resume.
void save_train_state(const Checkpoint& ckpt, const TrainState& state,
                      const TrainConfig& cfg, const std::string& path);
void load_train_state(const std::string& path, Checkpoint& ckpt,
                      TrainState& state, TrainConfig& cfg);

}  // namespace bltd
