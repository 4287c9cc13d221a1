#include <doctest.h>

#include <cmath>
#include <vector>

#include "bltd/tensor.hpp"

using namespace bltd;

namespace {

BoolMat all_mask(int n, int m) { return BoolMat(n, m, 1); }

// Central finite differences of f with respect to every element of t.
template <typename F>
std::vector<real> finite_diff(Tensor t, F f, real h = 1e-5) {
  std::vector<real> g(t.numel());
  for (int64_t i = 0; i < t.numel(); ++i) {
    real orig = t.data()[i];
    t.data()[i] = orig + h;
    real up = f();
    t.data()[i] = orig - h;
    real down = f();
    t.data()[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void check_grads_close(const Tensor& t, const std::vector<real>& fd,
                       real tol = 1e-3) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    real a = t.grad()[i], b = fd[i];
    real denom = std::max<real>(std::max(std::fabs(a), std::fabs(b)), 1e-6);
    CAPTURE(i);
    CHECK(std::fabs(a - b) / denom < tol);
  }
}

}  // namespace

TEST_CASE("masked attention: singleton softmax returns the value row") {
  Tensor q = Tensor::from_data({1, 2}, {0.3, -0.7});
  Tensor k = Tensor::from_data({1, 2}, {1.5, 2.0});
  Tensor v = Tensor::from_data({1, 2}, {4.0, -9.0});
  Tensor out = masked_attention(q, k, v, all_mask(1, 1));
  CHECK(out.data()[0] == 4.0);
  CHECK(out.data()[1] == -9.0);
}

TEST_CASE("masked attention: 2x2 all-admissible matches hand computation") {
  // d_k = 1: scores s_ij = q_i * k_j, weights softmax over j
  Tensor q = Tensor::from_data({2, 1}, {1.0, -2.0});
  Tensor k = Tensor::from_data({2, 1}, {0.5, -1.0});
  Tensor v = Tensor::from_data({2, 1}, {3.0, 7.0});
  Tensor out = masked_attention(q, k, v, all_mask(2, 2));
  for (int i = 0; i < 2; ++i) {
    double qi = q.data()[i];
    double s0 = qi * 0.5, s1 = qi * -1.0;
    double m = std::max(s0, s1);
    double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m);
    double expect = (e0 * 3.0 + e1 * 7.0) / (e0 + e1);
    CHECK(out.data()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("masked attention: causal row is independent of later keys") {
  BoolMat causal(3, 3, 0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j) causal.set(i, j, 1);
  Rng rng(7);
  auto randmat = [&](int r, int c) {
    Tensor t = Tensor::zeros({r, c});
    for (auto& x : t.data()) x = rng.normal();
    return t;
  };
  Tensor q = randmat(3, 4), k = randmat(3, 4), v = randmat(3, 4);
  Tensor out1 = masked_attention(q, k, v, causal);
  // perturb keys/values at positions 2 and 3
  for (int j = 1; j < 3; ++j)
    for (int c = 0; c < 4; ++c) {
      k.data()[j * 4 + c] += 3.25;
      v.data()[j * 4 + c] -= 1.5;
    }
  Tensor out2 = masked_attention(q, k, v, causal);
  for (int c = 0; c < 4; ++c) CHECK(out1.data()[c] == out2.data()[c]);
}

TEST_CASE("masked attention: row with no admissible keys is a hard error") {
  Tensor q = Tensor::from_data({1, 2}, {0.0, 0.0});
  Tensor k = Tensor::from_data({1, 2}, {0.0, 0.0});
  Tensor v = Tensor::from_data({1, 2}, {0.0, 0.0});
  BoolMat none(1, 1, 0);
  CHECK_THROWS(masked_attention(q, k, v, none));
}

TEST_CASE("masked attention: output bit-invariant to masked key values") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    int n = 2 + static_cast<int>(rng.below(4));
    int m = 2 + static_cast<int>(rng.below(5));
    int d = 2 + 2 * static_cast<int>(rng.below(3));
    BoolMat mask(n, m, 0);
    for (int i = 0; i < n; ++i) {
      int always = static_cast<int>(rng.below(m));
      for (int j = 0; j < m; ++j)
        mask.set(i, j, j == always || rng.u01() < 0.5 ? 1 : 0);
    }
    auto randmat = [&](int r, int c) {
      Tensor t = Tensor::zeros({r, c});
      for (auto& x : t.data()) x = rng.normal();
      return t;
    };
    Tensor q = randmat(n, d), k = randmat(m, d), v = randmat(m, d);
    Tensor base = masked_attention(q, k, v, mask);
    // perturb every fully-masked key/value column position
    for (int j = 0; j < m; ++j) {
      bool used = false;
      for (int i = 0; i < n; ++i) used |= mask.at(i, j) != 0;
      if (used) continue;
      for (int c = 0; c < d; ++c) {
        k.data()[j * d + c] = rng.normal() * 100;
        v.data()[j * d + c] = rng.normal() * 100;
      }
    }
    Tensor pert = masked_attention(q, k, v, mask);
    for (int64_t i = 0; i < base.numel(); ++i)
      CHECK(base.data()[i] == pert.data()[i]);
  }
}

TEST_CASE("rope: position zero is the identity") {
  Tensor x = Tensor::from_data({1, 4}, {1.0, 2.0, 3.0, 4.0});
  Tensor y = rope_apply(x, {0}, 500000.0);
  for (int i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("rope: rows at positions 5..7 equal the tail of positions 0..7") {
  Rng rng(3);
  Tensor big = Tensor::zeros({8, 4});
  for (auto& v : big.data()) v = rng.normal();
  std::vector<int> all(8);
  for (int i = 0; i < 8; ++i) all[i] = i;
  Tensor full = rope_apply(big, all, 500000.0);
  Tensor tail = Tensor::from_data(
      {3, 4}, std::vector<real>(big.data().begin() + 5 * 4, big.data().end()));
  Tensor rotated = rope_apply(tail, {5, 6, 7}, 500000.0);
  for (int i = 0; i < 12; ++i)
    CHECK(rotated.data()[i] == full.data()[5 * 4 + i]);
}

TEST_CASE("rope: d=4 position 1 theta=500000 matches direct rotation") {
  Tensor x = Tensor::from_data({1, 4}, {1.0, 2.0, 3.0, 4.0});
  Tensor y = rope_apply(x, {1}, 500000.0);
  // pair 0 rotates by angle 1, pair 1 by 500000^(-2/4)
  double a0 = 1.0;
  double a1 = std::pow(500000.0, -0.5);
  CHECK(y.data()[0] ==
        doctest::Approx(1.0 * std::cos(a0) - 2.0 * std::sin(a0)).epsilon(1e-12));
  CHECK(y.data()[1] ==
        doctest::Approx(1.0 * std::sin(a0) + 2.0 * std::cos(a0)).epsilon(1e-12));
  CHECK(y.data()[2] ==
        doctest::Approx(3.0 * std::cos(a1) - 4.0 * std::sin(a1)).epsilon(1e-12));
  CHECK(y.data()[3] ==
        doctest::Approx(3.0 * std::sin(a1) + 4.0 * std::cos(a1)).epsilon(1e-12));
}

TEST_CASE("rope: negative positions are rejected") {
  Tensor x = Tensor::from_data({1, 2}, {1.0, 2.0});
  CHECK_THROWS(rope_apply(x, {-1}, 500000.0));
}

TEST_CASE("rmsnorm: ones row with unit gain stays ones") {
  Tensor x = Tensor::from_data({1, 4}, {1.0, 1.0, 1.0, 1.0});
  Tensor g = Tensor::from_data({4}, {1.0, 1.0, 1.0, 1.0});
  Tensor y = rmsnorm(x, g);
  for (int i = 0; i < 4; ++i)
    CHECK(y.data()[i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rmsnorm: scale invariance") {
  Tensor x = Tensor::from_data({1, 3}, {0.4, -1.2, 2.5});
  Tensor xs = Tensor::from_data({1, 3}, {0.4 * 37, -1.2 * 37, 2.5 * 37});
  Tensor g = Tensor::from_data({3}, {1.0, 2.0, 0.5});
  // equality holds up to the 1e-6 epsilon inside the root mean square
  Tensor a = rmsnorm(x, g), b = rmsnorm(xs, g);
  for (int i = 0; i < 3; ++i)
    CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-5));
}

TEST_CASE("rmsnorm: matches direct formula") {
  Rng rng(5);
  Tensor x = Tensor::zeros({1, 6});
  Tensor g = Tensor::zeros({6});
  for (auto& v : x.data()) v = rng.normal();
  for (auto& v : g.data()) v = rng.normal();
  Tensor y = rmsnorm(x, g);
  double ms = 0;
  for (int i = 0; i < 6; ++i) ms += x.data()[i] * x.data()[i];
  ms /= 6;
  for (int i = 0; i < 6; ++i) {
    double expect = x.data()[i] / std::sqrt(ms + 1e-6) * g.data()[i];
    CHECK(y.data()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("swiglu: zero input gives zero output") {
  Tensor x = Tensor::from_data({1, 2}, {0.0, 0.0});
  Rng rng(9);
  Tensor wg = Tensor::randn({2, 3}, rng, 0.5, false);
  Tensor wu = Tensor::randn({2, 3}, rng, 0.5, false);
  Tensor wd = Tensor::randn({3, 2}, rng, 0.5, false);
  Tensor y = swiglu_ffn(x, wg, wu, wd);
  for (int i = 0; i < 2; ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("swiglu: identity weights in one dimension give x*silu(x)") {
  Tensor x = Tensor::from_data({1, 1}, {0.7});
  Tensor one = Tensor::from_data({1, 1}, {1.0});
  Tensor y = swiglu_ffn(x, one, one, one);
  double silu = 0.7 / (1.0 + std::exp(-0.7));
  CHECK(y.data()[0] == doctest::Approx(silu * 0.7).epsilon(1e-12));
}

TEST_CASE("swiglu: gradient matches central finite differences") {
  Rng rng(13);
  Tensor x = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor wg = Tensor::randn({4, 6}, rng, 0.5, true);
  Tensor wu = Tensor::randn({4, 6}, rng, 0.5, true);
  Tensor wd = Tensor::randn({6, 4}, rng, 0.5, true);
  Tensor mixer = Tensor::randn({4, 1}, rng, 1.0, false);
  Tensor ones = Tensor::from_data({1, 3}, {1.0, 1.0, 1.0});
  auto loss_fn = [&]() {
    NoGradGuard ng;
    Tensor proj = matmul(swiglu_ffn(x, wg, wu, wd), mixer);
    real s = 0;
    for (real v : proj.data()) s += v;
    return s;
  };
  Tensor total = matmul(ones, matmul(swiglu_ffn(x, wg, wu, wd), mixer));
  backward(total);
  for (Tensor* t : {&x, &wg, &wu, &wd}) {
    auto fd = finite_diff(*t, loss_fn);
    check_grads_close(*t, fd, 1e-4);
  }
}

TEST_CASE("cross entropy: uniform logits cost log V per unit weight") {
  const int v = 260;
  Tensor logits = Tensor::zeros({3, v});
  ByteSeq targets = {5, 100, 259};
  std::vector<real> w = {1.0, 1.0, 1.0};
  Tensor loss = cross_entropy_from_logits(logits, targets, w);
  CHECK(loss.item() == doctest::Approx(3 * std::log(260.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy: zero weights give zero loss and zero gradients") {
  Rng rng(17);
  Tensor logits = Tensor::randn({4, 10}, rng, 1.0, true);
  ByteSeq targets = {1, 2, 3, 4};
  std::vector<real> w(4, 0.0);
  Tensor loss = cross_entropy_from_logits(logits, targets, w);
  CHECK(loss.item() == 0.0);
  backward(loss);
  for (real g : logits.grad()) CHECK(g == 0.0);
}

TEST_CASE("cross entropy: matches independent log-sum-exp evaluation") {
  Rng rng(19);
  Tensor logits = Tensor::randn({5, 7}, rng, 2.0, false);
  ByteSeq targets = {6, 0, 3, 2, 5};
  std::vector<real> w = {1.0, 0.5, 0.0, 2.0, 1.0};
  Tensor loss = cross_entropy_from_logits(logits, targets, w);
  double expect = 0;
  for (int i = 0; i < 5; ++i) {
    if (w[i] == 0) continue;
    double mx = -1e30, sum = 0;
    for (int j = 0; j < 7; ++j) mx = std::max(mx, (double)logits.data()[i * 7 + j]);
    for (int j = 0; j < 7; ++j) sum += std::exp(logits.data()[i * 7 + j] - mx);
    double lse = mx + std::log(sum);
    expect += w[i] * (lse - logits.data()[i * 7 + targets[i]]);
  }
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cross entropy: out-of-range target is rejected") {
  Tensor logits = Tensor::zeros({1, 10});
  CHECK_THROWS(cross_entropy_from_logits(logits, {10}, {1.0}));
  CHECK_THROWS(cross_entropy_from_logits(logits, {-1}, {1.0}));
}

TEST_CASE("backward: parameter not reaching the loss keeps a zero gradient") {
  Rng rng(23);
  Tensor used = Tensor::randn({2, 2}, rng, 1.0, true);
  Tensor unused = Tensor::randn({2, 2}, rng, 1.0, true);
  Tensor x = Tensor::from_data({1, 2}, {1.0, 2.0});
  Tensor y = matmul(x, used);
  Tensor loss = cross_entropy_from_logits(y, {1}, {1.0});
  backward(loss);
  for (real g : unused.grad()) CHECK(g == 0.0);
  bool any = false;
  for (real g : used.grad()) any |= g != 0.0;
  CHECK(any);
}

TEST_CASE("backward: sum of losses gives sum of gradients") {
  Rng rng(29);
  Tensor w = Tensor::randn({2, 3}, rng, 1.0, true);
  Tensor x = Tensor::from_data({1, 2}, {0.5, -1.5});
  auto make_loss = [&](Symbol t) {
    return cross_entropy_from_logits(matmul(x, w), {t}, {1.0});
  };
  w.zero_grad();
  backward(make_loss(0));
  std::vector<real> g0 = w.grad();
  w.zero_grad();
  backward(make_loss(2));
  std::vector<real> g2 = w.grad();
  w.zero_grad();
  backward(add(make_loss(0), make_loss(2)));
  for (size_t i = 0; i < g0.size(); ++i)
    CHECK(w.grad()[i] == doctest::Approx(g0[i] + g2[i]).epsilon(1e-12));
}

TEST_CASE("backward: non-finite loss aborts with a diagnostic") {
  Tensor bad = Tensor::from_data({1}, {std::nan("")}, true);
  CHECK_THROWS_WITH_AS(backward(bad), doctest::Contains("not finite"),
                       std::runtime_error);
}

TEST_CASE("determinism: repeated forward passes are bit-identical") {
  Rng rng(31);
  Tensor x = Tensor::randn({4, 8}, rng, 1.0, false);
  Tensor g = Tensor::from_data({8}, std::vector<real>(8, 1.0));
  BoolMat mask(4, 4, 1);
  auto run = [&]() {
    Tensor n = rmsnorm(x, g);
    return masked_attention(n, n, n, mask);
  };
  Tensor a = run(), b = run();
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}
