#include "bltd/training.hpp"

#include <algorithm>
#include <cmath>

namespace bltd {

void TrainConfig::validate() const {
  if (steps < 1) throw std::runtime_error("TrainConfig: steps must be >= 1");
  if (warmup_steps > steps)
    throw std::runtime_error("TrainConfig: warmup must not exceed steps");
  if (!(clip_norm > 0)) throw std::runtime_error("TrainConfig: clip_norm must be > 0");
  if (window_bytes < 2)
    throw std::runtime_error("TrainConfig: window_bytes must be >= 2");
  if (block_size < 1) throw std::runtime_error("TrainConfig: block_size must be >= 1");
}

real lr_at(int step, const TrainConfig& cfg) {
  if (step < 0 || step > cfg.steps) throw std::runtime_error("lr_at: step out of range");
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<real>(step) /
           static_cast<real>(cfg.warmup_steps);
  if (step >= cfg.steps) return 0;
  real progress = static_cast<real>(step - cfg.warmup_steps) /
                  static_cast<real>(cfg.steps - cfg.warmup_steps);
  constexpr real kPi = static_cast<real>(3.14159265358979323846);
  return cfg.peak_lr * static_cast<real>(0.5) *
         (real(1) + std::cos(kPi * progress));
}

real clip_gradients(const std::vector<Tensor>& params, real max_norm) {
  real sq = 0;
  for (Tensor p : params) {
    if (!p.has_grad()) continue;
    for (real g : p.grad()) sq += g * g;
  }
  real norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    real s = max_norm / norm;
    for (Tensor p : params) {
      if (!p.has_grad()) continue;
      for (real& g : p.grad()) g *= s;
    }
  }
  return norm;
}

void adamw_step(const std::vector<Tensor>& params, AdamState& state, real lr,
                const TrainConfig& cfg) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0);
      state.v[i].assign(params[i].numel(), 0);
    }
  }
  state.step += 1;
  const real b1 = cfg.beta1, b2 = cfg.beta2;
  const real bc1 = real(1) - std::pow(b1, static_cast<real>(state.step));
  const real bc2 = real(1) - std::pow(b2, static_cast<real>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    const auto& g = p.grad();
    auto& pv = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < pv.size(); ++j) {
      if (!std::isfinite(g[j]))
        throw std::runtime_error("adamw_step: non-finite gradient");
      m[j] = b1 * m[j] + (real(1) - b1) * g[j];
      v[j] = b2 * v[j] + (real(1) - b2) * g[j] * g[j];
      real mhat = m[j] / bc1;
      real vhat = v[j] / bc2;
      pv[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                     cfg.weight_decay * pv[j]);
    }
  }
}

namespace {

void restore(HierarchicalModel& model, const HierarchicalModel& snapshot) {
  auto dst = model.parameters();
  auto src = snapshot.parameters();
  for (size_t i = 0; i < dst.size(); ++i) dst[i].data() = src[i].data();
}

}  // namespace

TrainResult train(HierarchicalModel& model, const EntropyModel& entropy,
                  double threshold, int max_patch,
                  const std::vector<uint8_t>& corpus, const TrainConfig& cfg,
                  TrainState* state, const StepCallback& on_step,
                  int until_step) {
  cfg.validate();
  if (corpus.empty()) throw std::runtime_error("train: empty corpus");
  if (static_cast<int>(corpus.size()) < cfg.window_bytes)
    throw std::runtime_error("train: corpus shorter than the example window");

  TrainResult result;
  std::vector<Tensor> params = model.parameters();
  TrainState local;
  TrainState& st = state ? *state : local;
  const int examples = cfg.examples_per_step();
  HierarchicalModel snapshot = clone_model(model);
  AdamState adam_snapshot = st.adam;
  const int last_step = until_step > 0 ? std::min(until_step, cfg.steps) : cfg.steps;

  for (int step = st.next_step; step <= last_step; ++step) {
    for (Tensor& p : params) p.zero_grad();
    real sum_clean = 0, sum_mask = 0, sum_total = 0;
    bool finite = true;
    for (int e = 0; e < examples && finite; ++e) {
      Rng rng = Rng::stream(cfg.seed, static_cast<uint64_t>(step),
                            static_cast<uint64_t>(e));
      size_t offset = rng.below(corpus.size() - cfg.window_bytes + 1);
      ByteSeq x;
      x.reserve(cfg.window_bytes + 1);
      x.push_back(kBos);
      for (int i = 0; i < cfg.window_bytes; ++i)
        x.push_back(static_cast<Symbol>(corpus[offset + i]));
      PatchSegmentation seg = segment(x, entropy, threshold, max_patch);
      BlockPlan plan = build_blocks(x, seg, cfg.block_size);
      double t = sample_timestep(rng);
      CorruptedBlocks corrupted = corrupt(plan, t, rng);
      LossTerms loss =
          combined_loss(model, x, seg, plan, corrupted, cfg.mask_loss_weight);
      if (!std::isfinite(loss.total.item())) {
        finite = false;
        break;
      }
      backward(div_scalar(loss.total, static_cast<real>(examples)));
      sum_clean += loss.clean.item();
      sum_mask += loss.mask.item();
      sum_total += loss.total.item();
    }
    if (!finite) {
      restore(model, snapshot);
      st.adam = adam_snapshot;
      st.next_step = step;
      result.ok = false;
      result.error = "divergence at step " + std::to_string(step) +
                     "; restored last good parameters";
      return result;
    }
    clip_gradients(params, cfg.clip_norm);
    real lr = lr_at(step, cfg);
    adamw_step(params, st.adam, lr, cfg);

    LossRecord rec;
    rec.step = step;
    rec.l_clean = sum_clean / examples;
    rec.l_mask = sum_mask / examples;
    rec.l_total = sum_total / examples;
    rec.lr = lr;
    result.curve.push_back(rec);
    if (on_step) on_step(rec);

    snapshot = clone_model(model);
    adam_snapshot = st.adam;
    st.next_step = step + 1;
  }
  return result;
}

}  // namespace bltd
