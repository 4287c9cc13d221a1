#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bltd/diffusion.hpp"
#include "bltd/model.hpp"

namespace bltd {

struct TrainConfig {
  int steps = 2000;
  int batch_bytes = 4096;    // bytes consumed per optimizer step
  int window_bytes = 256;    // example length before the BOS is prepended
  real peak_lr = static_cast<real>(3e-3);
  int warmup_steps = 100;
  real weight_decay = static_cast<real>(0.1);
  real clip_norm = 1;
  real beta1 = static_cast<real>(0.9);
  real beta2 = static_cast<real>(0.95);
  real adam_eps = static_cast<real>(1e-8);
  int block_size = 8;
  real mask_loss_weight = 1;
  uint64_t seed = 0;

  int examples_per_step() const {
    return std::max(1, batch_bytes / window_bytes);
  }
  void validate() const;
};

// Linear warmup to the peak, cosine decay to zero at the final step.
real lr_at(int step, const TrainConfig& cfg);

struct AdamState {
  std::vector<std::vector<real>> m, v;
  int64_t step = 0;
};

// Global-norm clip; returns the pre-clip norm.
real clip_gradients(const std::vector<Tensor>& params, real max_norm);

// Decoupled weight decay update. Gradients must be finite.
void adamw_step(const std::vector<Tensor>& params, AdamState& state, real lr,
                const TrainConfig& cfg);

struct LossRecord {
  int step = 0;
  real l_clean = 0, l_mask = 0, l_total = 0, lr = 0;
};

struct TrainResult {
  bool ok = true;
  std::string error;
  std::vector<LossRecord> curve;
};

// Full training-state snapshot for exact resume (parameters and optimizer
// moments at native precision plus the step counter).
struct TrainState {
  int next_step = 1;  // 1-based step about to run
  AdamState adam;
};

using StepCallback = std::function<void(const LossRecord&)>;

// Desk-scale loop: sample fixed-length windows, segment, build and corrupt
// blocks, one forward/backward of the combined loss per example, clip, AdamW.
// On divergence the model is rolled back to the last finite step and
// result.ok is false. `state` may carry a snapshot from a previous run to
// resume exactly. `until_step` pauses after that step while keeping the full
// cfg.steps schedule (0 runs to the end).
TrainResult train(HierarchicalModel& model, const EntropyModel& entropy,
                  double threshold, int max_patch,
                  const std::vector<uint8_t>& corpus, const TrainConfig& cfg,
                  TrainState* state = nullptr,
                  const StepCallback& on_step = nullptr, int until_step = 0);

}  // namespace bltd
