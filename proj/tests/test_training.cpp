#include <doctest.h>

#include <cmath>

#include "bltd/masks.hpp"
#include "bltd/training.hpp"

using namespace bltd;

namespace {

ModelConfig micro_config() {
  ModelConfig c;
  c.d_local = 4;
  c.d_global = 8;
  c.n_layers_enc = 1;
  c.n_layers_glob = 1;
  c.n_layers_dec = 1;
  c.n_heads_enc = 2;
  c.n_heads_glob = 2;
  c.n_heads_dec = 2;
  c.ffn_hidden_local = 8;
  c.ffn_hidden_global = 16;
  return c;
}

std::vector<uint8_t> repeated_corpus(const std::string& s, size_t total) {
  std::vector<uint8_t> out;
  while (out.size() < total)
    for (char c : s) out.push_back(static_cast<uint8_t>(c));
  out.resize(total);
  return out;
}

bool params_equal(const HierarchicalModel& a, const HierarchicalModel& b) {
  auto pa = a.parameters(), pb = b.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i].data() != pb[i].data()) return false;
  return true;
}

}  // namespace

TEST_CASE("lr schedule: ramp endpoints and cosine endpoint") {
  TrainConfig cfg;
  cfg.steps = 1000;
  cfg.warmup_steps = 100;
  cfg.peak_lr = static_cast<real>(3e-3);
  CHECK(lr_at(0, cfg) == 0.0);
  CHECK(lr_at(100, cfg) == cfg.peak_lr);
  CHECK(lr_at(50, cfg) == doctest::Approx(cfg.peak_lr * 0.5).epsilon(1e-12));
  CHECK(lr_at(1000, cfg) == 0.0);
  CHECK(lr_at(550, cfg) ==
        doctest::Approx(cfg.peak_lr * 0.5).epsilon(1e-9));  // cosine midpoint
  CHECK_THROWS(lr_at(1001, cfg));
}

TEST_CASE("adamw: zero gradient and zero decay leave parameters alone") {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  Tensor p = Tensor::from_data({2}, {1.5, -2.5}, true);
  p.zero_grad();
  AdamState st;
  adamw_step({p}, st, static_cast<real>(0.1), cfg);
  CHECK(p.data()[0] == 1.5);
  CHECK(p.data()[1] == -2.5);
}

TEST_CASE("adamw: single scalar step matches the hand-computed update") {
  TrainConfig cfg;
  cfg.beta1 = static_cast<real>(0.9);
  cfg.beta2 = static_cast<real>(0.95);
  cfg.adam_eps = static_cast<real>(1e-8);
  cfg.weight_decay = static_cast<real>(0.1);
  Tensor p = Tensor::from_data({1}, {2.0}, true);
  p.grad()[0] = static_cast<real>(0.5);
  AdamState st;
  const real lr = static_cast<real>(0.01);
  adamw_step({p}, st, lr, cfg);
  // m = 0.1*0.5 ; v = 0.05*0.25 ; mhat = m/0.1 ; vhat = v/0.05
  double m = 0.1 * 0.5, v = 0.05 * 0.25;
  double mhat = m / 0.1, vhat = v / 0.05;
  double expect = 2.0 - 0.01 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.1 * 2.0);
  CHECK(p.data()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adamw: non-finite gradients abort") {
  TrainConfig cfg;
  Tensor p = Tensor::from_data({1}, {1.0}, true);
  p.grad()[0] = std::numeric_limits<real>::quiet_NaN();
  AdamState st;
  CHECK_THROWS(adamw_step({p}, st, static_cast<real>(0.01), cfg));
}

TEST_CASE("gradient clipping: global norm 10 scales gradients by 0.1") {
  Tensor a = Tensor::from_data({2}, {0.0, 0.0}, true);
  Tensor b = Tensor::from_data({1}, {0.0}, true);
  a.grad() = {6.0, 8.0};
  b.grad() = {0.0};
  real norm = clip_gradients({a, b}, 1.0);
  CHECK(norm == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(a.grad()[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(a.grad()[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("train: one step at zero learning rate changes nothing") {
  Rng rng(1);
  HierarchicalModel model = init_model(micro_config(), rng);
  HierarchicalModel before = clone_model(model);
  auto corpus = repeated_corpus("abcdefgh", 512);
  EntropyModel em = fit_entropy_model(
      {ByteSeq(corpus.begin(), corpus.end())}, 2, 0.1);
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.warmup_steps = 0;
  cfg.peak_lr = 0;
  cfg.batch_bytes = 64;
  cfg.window_bytes = 32;
  cfg.block_size = 4;
  TrainResult r = train(model, em, 1.0, 8, corpus, cfg);
  CHECK(r.ok);
  REQUIRE(r.curve.size() == 1);
  CHECK(std::isfinite(r.curve[0].l_total));
  CHECK(params_equal(model, before));
}

TEST_CASE("train: same seed twice gives bit-identical parameters") {
  auto corpus = repeated_corpus("the cat sat on the mat. ", 2048);
  EntropyModel em =
      fit_entropy_model({ByteSeq(corpus.begin(), corpus.end())}, 2, 0.1);
  TrainConfig cfg;
  cfg.steps = 8;
  cfg.warmup_steps = 2;
  cfg.batch_bytes = 96;
  cfg.window_bytes = 48;
  cfg.block_size = 4;
  cfg.seed = 777;
  Rng r1(5), r2(5);
  HierarchicalModel m1 = init_model(micro_config(), r1);
  HierarchicalModel m2 = init_model(micro_config(), r2);
  TrainResult a = train(m1, em, 0.8, 8, corpus, cfg);
  TrainResult b = train(m2, em, 0.8, 8, corpus, cfg);
  CHECK(a.ok);
  CHECK(b.ok);
  CHECK(params_equal(m1, m2));
  for (size_t i = 0; i < a.curve.size(); ++i)
    CHECK(a.curve[i].l_total == b.curve[i].l_total);
}

TEST_CASE("train: loss curve is complete and makes progress on a loop") {
  auto corpus = repeated_corpus("round and round it goes. ", 4096);
  EntropyModel em =
      fit_entropy_model({ByteSeq(corpus.begin(), corpus.end())}, 2, 0.1);
  TrainConfig cfg;
  cfg.steps = 250;
  cfg.warmup_steps = 20;
  cfg.peak_lr = static_cast<real>(5e-3);
  cfg.batch_bytes = 128;
  cfg.window_bytes = 64;
  cfg.block_size = 4;
  cfg.seed = 3;
  Rng rng(9);
  HierarchicalModel model = init_model(micro_config(), rng);
  TrainResult r = train(model, em, 0.8, 8, corpus, cfg);
  CHECK(r.ok);
  REQUIRE(r.curve.size() == 250);
  for (int i = 0; i < 250; ++i) CHECK(r.curve[i].step == i + 1);
  double first_clean = r.curve[0].l_clean;
  double last_clean = r.curve.back().l_clean;
  double first_mask = r.curve[0].l_mask;
  double last_mask = r.curve.back().l_mask;
  CHECK(last_clean < first_clean / 2);
  CHECK(last_mask < first_mask / 2);
}

TEST_CASE("train: resuming mid-run reproduces the uninterrupted run exactly") {
  auto corpus = repeated_corpus("resume me precisely, please. ", 2048);
  EntropyModel em =
      fit_entropy_model({ByteSeq(corpus.begin(), corpus.end())}, 2, 0.1);
  TrainConfig cfg;
  cfg.steps = 12;
  cfg.warmup_steps = 2;
  cfg.batch_bytes = 96;
  cfg.window_bytes = 48;
  cfg.block_size = 4;
  cfg.seed = 42;

  Rng r1(6), r2(6);
  HierarchicalModel full = init_model(micro_config(), r1);
  TrainResult a = train(full, em, 0.8, 8, corpus, cfg);
  CHECK(a.ok);

  HierarchicalModel split = init_model(micro_config(), r2);
  TrainState state;
  TrainResult b1 = train(split, em, 0.8, 8, corpus, cfg, &state, nullptr,
                         /*until_step=*/6);
  CHECK(b1.ok);
  CHECK(state.next_step == 7);
  TrainResult b2 = train(split, em, 0.8, 8, corpus, cfg, &state);
  CHECK(b2.ok);
  CHECK(params_equal(full, split));
}

TEST_CASE("combined loss gradients match central finite differences") {
  Rng rng(23);
  HierarchicalModel model = init_model(micro_config(), rng);
  ByteSeq x = {kBos, 'a', 'b', 'a', 'c', 'a', 'b'};
  PatchSegmentation seg;
  seg.sequence_length = 7;
  seg.starts = {1, 2, 5};
  seg.last_patch_closed = true;
  BlockPlan plan = build_blocks(x, seg, 3);
  Rng crng(4);
  CorruptedBlocks c = corrupt(plan, 0.5, crng);

  auto loss_value = [&]() {
    NoGradGuard ng;
    return combined_loss(model, x, seg, plan, c).total.item();
  };
  for (Tensor p : model.parameters()) p.zero_grad();
  backward(combined_loss(model, x, seg, plan, c).total);

  const real h = static_cast<real>(1e-5);
  for (auto& [name, p] : model.named_parameters()) {
    Tensor t = p;
    for (int64_t i = 0; i < t.numel(); ++i) {
      real orig = t.data()[i];
      t.data()[i] = orig + h;
      real up = loss_value();
      t.data()[i] = orig - h;
      real down = loss_value();
      t.data()[i] = orig;
      real fd = (up - down) / (2 * h);
      real an = t.grad()[i];
      // near-zero gradients are compared with an absolute floor so that
      // finite-difference roundoff does not masquerade as a mismatch
      real denom = std::max<real>(std::max(std::fabs(fd), std::fabs(an)), 1e-4);
      CAPTURE(name);
      CAPTURE(i);
      CHECK(std::fabs(fd - an) / denom < 1e-3);
    }
  }
}
