#include "bltd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "bltd/kernels.hpp"

namespace bltd {

namespace {

std::atomic<uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) n *= e;
  return n;
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor make_tensor(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->id = g_next_id.fetch_add(1);
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(shape_numel(n->shape)), real(0));
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return make_tensor(std::move(shape), requires_grad);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<real> data,
                         bool requires_grad) {
  Tensor t = make_tensor(std::move(shape), requires_grad);
  if (static_cast<int64_t>(data.size()) != t.numel())
    throw std::runtime_error("Tensor::from_data: size does not match shape");
  t.node_->value = std::move(data);
  return t;
}

Tensor Tensor::scalar(real v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, real stddev,
                     bool requires_grad) {
  Tensor t = make_tensor(std::move(shape), requires_grad);
  for (real& x : t.node_->value) x = static_cast<real>(rng.normal()) * stddev;
  return t;
}

const std::vector<int>& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(node_->value.size()); }
int Tensor::rows() const { return node_->shape.at(0); }
int Tensor::cols() const { return node_->shape.at(1); }

std::vector<real>& Tensor::data() { return node_->value; }
const std::vector<real>& Tensor::data() const { return node_->value; }

std::vector<real>& Tensor::grad() {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), real(0));
  return node_->grad;
}
const std::vector<real>& Tensor::grad() const {
  const_cast<Tensor*>(this)->grad();
  return node_->grad;
}
bool Tensor::has_grad() const { return !node_->grad.empty(); }
void Tensor::zero_grad() {
  node_->grad.assign(node_->value.size(), real(0));
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

real Tensor::item() const {
  if (numel() != 1) throw std::runtime_error("Tensor::item: not a scalar");
  return node_->value[0];
}

namespace {

bool want_grad(const Tensor& t) { return g_grad_enabled && t.requires_grad(); }

Tensor result_like(std::vector<int> shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

std::vector<real>& grad_of(Tensor& t) { return t.grad(); }

void check_2d(const Tensor& t, const char* op) {
  if (t.shape().size() != 2)
    throw std::runtime_error(std::string(op) + ": tensor must be 2-D");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::runtime_error("add: shape mismatch");
  Tensor out = result_like(a.shape(), want_grad(a) || want_grad(b));
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    out.node()->parents = {a, b};
    out.node()->backward = [](TensorNode& o) {
      for (int p = 0; p < 2; ++p) {
        Tensor& t = o.parents[p];
        if (!t.requires_grad()) continue;
        auto& g = grad_of(t);
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw std::runtime_error("mul: shape mismatch");
  Tensor out = result_like(a.shape(), want_grad(a) || want_grad(b));
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (out.requires_grad()) {
    out.node()->parents = {a, b};
    out.node()->backward = [](TensorNode& o) {
      Tensor& a2 = o.parents[0];
      Tensor& b2 = o.parents[1];
      if (a2.requires_grad()) {
        auto& g = grad_of(a2);
        const auto& bv2 = b2.data();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bv2[i];
      }
      if (b2.requires_grad()) {
        auto& g = grad_of(b2);
        const auto& av2 = a2.data();
        for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * av2[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, real s) {
  Tensor out = result_like(a.shape(), want_grad(a));
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
  if (out.requires_grad()) {
    out.node()->parents = {a};
    out.node()->backward = [s](TensorNode& o) {
      Tensor& a2 = o.parents[0];
      auto& g = grad_of(a2);
      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * s;
    };
  }
  return out;
}

Tensor div_scalar(const Tensor& a, real s) {
  Tensor out = result_like(a.shape(), want_grad(a));
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / s;
  if (out.requires_grad()) {
    out.node()->parents = {a};
    out.node()->backward = [s](TensorNode& o) {
      Tensor& a2 = o.parents[0];
      auto& g = grad_of(a2);
      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / s;
    };
  }
  return out;
}

Tensor silu(const Tensor& a) {
  Tensor out = result_like(a.shape(), want_grad(a));
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = kernels::silu(av[i]);
  if (out.requires_grad()) {
    out.node()->parents = {a};
    out.node()->backward = [](TensorNode& o) {
      Tensor& a2 = o.parents[0];
      auto& g = grad_of(a2);
      const auto& av2 = a2.data();
      for (size_t i = 0; i < g.size(); ++i) {
        real sig = real(1) / (real(1) + std::exp(-av2[i]));
        g[i] += o.grad[i] * (sig + av2[i] * sig * (real(1) - sig));
      }
    };
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) throw std::runtime_error("matmul: inner extent mismatch");
  Tensor out = result_like({m, n}, want_grad(a) || want_grad(b));
  kernels::matmul(a.data().data(), b.data().data(), m, k, n, out.data().data());
  if (out.requires_grad()) {
    out.node()->parents = {a, b};
    out.node()->backward = [m, k, n](TensorNode& o) {
      Tensor& a2 = o.parents[0];
      Tensor& b2 = o.parents[1];
      if (a2.requires_grad()) {
        auto& ga = grad_of(a2);
        const real* bv = b2.data().data();
        for (int i = 0; i < m; ++i) {
          const real* grow = o.grad.data() + static_cast<size_t>(i) * n;
          for (int kk = 0; kk < k; ++kk)
            ga[static_cast<size_t>(i) * k + kk] +=
                kernels::dot(grow, bv + static_cast<size_t>(kk) * n, n);
        }
      }
      if (b2.requires_grad()) {
        auto& gb = grad_of(b2);
        const real* av = a2.data().data();
        for (int i = 0; i < m; ++i) {
          const real* grow = o.grad.data() + static_cast<size_t>(i) * n;
          for (int kk = 0; kk < k; ++kk)
            kernels::axpy(av[static_cast<size_t>(i) * k + kk], grow,
                          gb.data() + static_cast<size_t>(kk) * n, n);
        }
      }
    };
  }
  return out;
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (shape_numel(shape) != a.numel())
    throw std::runtime_error("reshape: element count mismatch");
  Tensor out = result_like(std::move(shape), want_grad(a));
  out.data() = a.data();
  if (out.requires_grad()) {
    out.node()->parents = {a};
    out.node()->backward = [](TensorNode& o) {
      Tensor& a2 = o.parents[0];
      auto& g = grad_of(a2);
      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    };
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const ByteSeq& ids) {
  check_2d(table, "embedding_lookup");
  const int v = table.rows(), d = table.cols();
  const int n = static_cast<int>(ids.size());
  for (Symbol s : ids)
    if (s < 0 || s >= v)
      throw std::runtime_error("embedding_lookup: id out of range");
  Tensor out = result_like({n, d}, want_grad(table));
  for (int i = 0; i < n; ++i)
    std::memcpy(out.data().data() + static_cast<size_t>(i) * d,
                table.data().data() + static_cast<size_t>(ids[i]) * d,
                sizeof(real) * d);
  if (out.requires_grad()) {
    out.node()->parents = {table};
    out.node()->backward = [ids, d](TensorNode& o) {
      Tensor& t = o.parents[0];
      auto& g = grad_of(t);
      for (size_t i = 0; i < ids.size(); ++i)
        kernels::axpy(real(1), o.grad.data() + i * d,
                      g.data() + static_cast<size_t>(ids[i]) * d, d);
    };
  }
  return out;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain) {
  check_2d(x, "rmsnorm");
  const int n = x.rows(), d = x.cols();
  if (gain.numel() != d)
    throw std::runtime_error("rmsnorm: gain length must equal feature extent");
  Tensor out = result_like(x.shape(), want_grad(x) || want_grad(gain));
  for (int i = 0; i < n; ++i)
    kernels::rmsnorm_row(x.data().data() + static_cast<size_t>(i) * d,
                         gain.data().data(), d, kernels::kRmsNormEps,
                         out.data().data() + static_cast<size_t>(i) * d);
  if (out.requires_grad()) {
    out.node()->parents = {x, gain};
    out.node()->backward = [n, d](TensorNode& o) {
      Tensor& x2 = o.parents[0];
      Tensor& g2 = o.parents[1];
      const auto& xv = x2.data();
      const auto& gv = g2.data();
      for (int i = 0; i < n; ++i) {
        const real* xr = xv.data() + static_cast<size_t>(i) * d;
        const real* gr = o.grad.data() + static_cast<size_t>(i) * d;
        real ms = 0;
        for (int j = 0; j < d; ++j) ms += xr[j] * xr[j];
        ms /= d;
        real inv = real(1) / std::sqrt(ms + kernels::kRmsNormEps);
        if (g2.requires_grad()) {
          auto& gg = grad_of(g2);
          for (int j = 0; j < d; ++j) gg[j] += gr[j] * xr[j] * inv;
        }
        if (x2.requires_grad()) {
          auto& gx = grad_of(x2);
          real* gxr = gx.data() + static_cast<size_t>(i) * d;
          real sum_ux = 0;
          for (int j = 0; j < d; ++j) sum_ux += gr[j] * gv[j] * xr[j];
          real c = inv * inv * inv / d * sum_ux;
          for (int j = 0; j < d; ++j)
            gxr[j] += gr[j] * gv[j] * inv - xr[j] * c;
        }
      }
    };
  }
  return out;
}

Tensor rope_apply(const Tensor& x, const std::vector<int>& positions,
                  real theta, int head_dim) {
  check_2d(x, "rope_apply");
  const int n = x.rows(), d = x.cols();
  if (static_cast<int>(positions.size()) != n)
    throw std::runtime_error("rope_apply: positions length must equal rows");
  if (theta <= 0) throw std::runtime_error("rope_apply: theta must be > 0");
  for (int p : positions)
    if (p < 0) throw std::runtime_error("rope_apply: negative position");
  const int hd = head_dim > 0 ? head_dim : d;
  if (d % hd != 0 || hd % 2 != 0)
    throw std::runtime_error("rope_apply: head_dim must be even and divide d");
  Tensor out = result_like(x.shape(), want_grad(x));
  out.data() = x.data();
  for (int i = 0; i < n; ++i)
    kernels::rope_row(out.data().data() + static_cast<size_t>(i) * d, d, hd,
                      positions[i], theta);
  if (out.requires_grad()) {
    out.node()->parents = {x};
    out.node()->backward = [positions, theta, d, hd](TensorNode& o) {
      Tensor& x2 = o.parents[0];
      auto& gx = grad_of(x2);
      std::vector<real> tmp(static_cast<size_t>(d));
      for (size_t i = 0; i < positions.size(); ++i) {
        std::memcpy(tmp.data(), o.grad.data() + i * d, sizeof(real) * d);
        kernels::rope_row_inverse(tmp.data(), d, hd, positions[i], theta);
        kernels::axpy(real(1), tmp.data(), gx.data() + i * d, d);
      }
    };
  }
  return out;
}

namespace {

// Shared core for the masked, multi-head and grouped attention variants.
// Computing probabilities with attention_row keeps inadmissible weights at
// exactly zero, so masked keys/values never contribute to values or grads.
struct AttentionPlan {
  int n = 0, m = 0, d = 0, heads = 1, dh = 0;
  // per query row: admissible flags over m (or group window)
  const BoolMat* mask = nullptr;
  const std::vector<int>* assign = nullptr;  // grouped variant, 1-based
  int group = 0;
};

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                      const AttentionPlan& plan) {
  const int n = plan.n, m = plan.m, d = plan.d, heads = plan.heads,
            dh = plan.dh;
  Tensor out =
      result_like({n, d}, want_grad(q) || want_grad(k) || want_grad(v));
  // probs: per row, per head, the weight over its key window
  const int win = plan.assign ? plan.group : m;
  auto probs = std::make_shared<std::vector<real>>(
      static_cast<size_t>(n) * heads * win, real(0));
  const real* qv = q.data().data();
  const real* kv = k.data().data();
  const real* vv = v.data().data();
  for (int i = 0; i < n; ++i) {
    int k0 = 0;
    if (plan.assign) {
      int a = (*plan.assign)[i];
      if (a < 1 || a * plan.group > m)
        throw std::runtime_error("grouped_cross_attention: assignment out of range");
      k0 = (a - 1) * plan.group;
    }
    const uint8_t* adm = plan.mask ? plan.mask->row(i) : nullptr;
    for (int h = 0; h < heads; ++h) {
      kernels::attention_row(
          qv + static_cast<size_t>(i) * d + h * dh,
          kv + static_cast<size_t>(k0) * d + h * dh, d,
          vv + static_cast<size_t>(k0) * d + h * dh, d, adm ? adm + 0 : nullptr,
          win, dh,
          probs->data() + (static_cast<size_t>(i) * heads + h) * win,
          out.data().data() + static_cast<size_t>(i) * d + h * dh);
    }
  }
  if (out.requires_grad()) {
    out.node()->parents = {q, k, v};
    auto assign = plan.assign ? *plan.assign : std::vector<int>();
    const int group = plan.group;
    out.node()->backward = [n, m, d, heads, dh, win, probs, assign,
                            group](TensorNode& o) {
      Tensor& q2 = o.parents[0];
      Tensor& k2 = o.parents[1];
      Tensor& v2 = o.parents[2];
      const real* qv2 = q2.data().data();
      const real* kv2 = k2.data().data();
      const real* vv2 = v2.data().data();
      real* gq = q2.requires_grad() ? grad_of(q2).data() : nullptr;
      real* gk = k2.requires_grad() ? grad_of(k2).data() : nullptr;
      real* gv = v2.requires_grad() ? grad_of(v2).data() : nullptr;
      const real inv_sqrt = real(1) / std::sqrt(static_cast<real>(dh));
      std::vector<real> dp(static_cast<size_t>(win));
      for (int i = 0; i < n; ++i) {
        int k0 = assign.empty() ? 0 : (assign[i] - 1) * group;
        for (int h = 0; h < heads; ++h) {
          const real* p =
              probs->data() + (static_cast<size_t>(i) * heads + h) * win;
          const real* go = o.grad.data() + static_cast<size_t>(i) * d + h * dh;
          const real* qrow = qv2 + static_cast<size_t>(i) * d + h * dh;
          // dp_j = go . v_j ; ds_j = p_j (dp_j - sum p dp)
          real sum_pdp = 0;
          for (int j = 0; j < win; ++j) {
            if (p[j] == real(0)) {
              dp[j] = 0;
              continue;
            }
            dp[j] = kernels::dot(
                go, vv2 + static_cast<size_t>(k0 + j) * d + h * dh, dh);
            sum_pdp += p[j] * dp[j];
          }
          for (int j = 0; j < win; ++j) {
            if (p[j] == real(0)) continue;
            real ds = p[j] * (dp[j] - sum_pdp) * inv_sqrt;
            if (gq)
              kernels::axpy(ds, kv2 + static_cast<size_t>(k0 + j) * d + h * dh,
                            gq + static_cast<size_t>(i) * d + h * dh, dh);
            if (gk)
              kernels::axpy(ds, qrow,
                            gk + static_cast<size_t>(k0 + j) * d + h * dh, dh);
            if (gv)
              kernels::axpy(p[j], go,
                            gv + static_cast<size_t>(k0 + j) * d + h * dh, dh);
          }
        }
      }
      (void)m;
    };
  }
  return out;
}

}  // namespace

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const BoolMat& mask) {
  check_2d(q, "masked_attention");
  check_2d(k, "masked_attention");
  check_2d(v, "masked_attention");
  if (q.cols() != k.cols())
    throw std::runtime_error("masked_attention: q/k width mismatch");
  if (k.rows() != v.rows())
    throw std::runtime_error("masked_attention: k/v row mismatch");
  if (q.cols() <= 0) throw std::runtime_error("masked_attention: d_k must be > 0");
  if (mask.rows != q.rows() || mask.cols != k.rows())
    throw std::runtime_error("masked_attention: mask shape mismatch");
  if (k.cols() != v.cols())
    throw std::runtime_error("masked_attention: k/v width mismatch");
  AttentionPlan plan;
  plan.n = q.rows();
  plan.m = k.rows();
  plan.d = q.cols();
  plan.heads = 1;
  plan.dh = q.cols();
  plan.mask = &mask;
  return attention_core(q, k, v, plan);
}

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           const BoolMat& mask, int heads) {
  check_2d(q, "multihead_attention");
  if (q.cols() % heads != 0)
    throw std::runtime_error("multihead_attention: width must divide by heads");
  if (mask.rows != q.rows() || mask.cols != k.rows())
    throw std::runtime_error("multihead_attention: mask shape mismatch");
  AttentionPlan plan;
  plan.n = q.rows();
  plan.m = k.rows();
  plan.d = q.cols();
  plan.heads = heads;
  plan.dh = q.cols() / heads;
  plan.mask = &mask;
  return attention_core(q, k, v, plan);
}

Tensor grouped_cross_attention(const Tensor& q, const Tensor& k,
                               const Tensor& v, const std::vector<int>& assign,
                               int group, int heads) {
  check_2d(q, "grouped_cross_attention");
  if (static_cast<int>(assign.size()) != q.rows())
    throw std::runtime_error("grouped_cross_attention: assignment length");
  if (q.cols() % heads != 0)
    throw std::runtime_error("grouped_cross_attention: width/heads mismatch");
  AttentionPlan plan;
  plan.n = q.rows();
  plan.m = k.rows();
  plan.d = q.cols();
  plan.heads = heads;
  plan.dh = q.cols() / heads;
  plan.assign = &assign;
  plan.group = group;
  return attention_core(q, k, v, plan);
}

Tensor row_mean_segments(const Tensor& x, const std::vector<int>& starts,
                         int n) {
  check_2d(x, "row_mean_segments");
  if (x.rows() != n)
    throw std::runtime_error("row_mean_segments: row count mismatch");
  const int d = x.cols();
  const int m = static_cast<int>(starts.size());
  Tensor out = result_like({m, d}, want_grad(x));
  for (int j = 0; j < m; ++j) {
    int r0 = starts[j] - 1;
    int r1 = (j + 1 < m ? starts[j + 1] - 1 : n);
    if (r0 < 0 || r1 <= r0 || r1 > n)
      throw std::runtime_error("row_mean_segments: bad segment bounds");
    kernels::mean_rows(x.data().data(), r0, r1, d,
                       out.data().data() + static_cast<size_t>(j) * d);
  }
  if (out.requires_grad()) {
    out.node()->parents = {x};
    out.node()->backward = [starts, n, d, m](TensorNode& o) {
      Tensor& x2 = o.parents[0];
      auto& gx = grad_of(x2);
      for (int j = 0; j < m; ++j) {
        int r0 = starts[j] - 1;
        int r1 = (j + 1 < m ? starts[j + 1] - 1 : n);
        real inv = real(1) / static_cast<real>(r1 - r0);
        for (int r = r0; r < r1; ++r)
          kernels::axpy(inv, o.grad.data() + static_cast<size_t>(j) * d,
                        gx.data() + static_cast<size_t>(r) * d, d);
      }
    };
  }
  return out;
}

Tensor swiglu_ffn(const Tensor& x, const Tensor& w_gate, const Tensor& w_up,
                  const Tensor& w_down) {
  return matmul(mul(silu(matmul(x, w_gate)), matmul(x, w_up)), w_down);
}

Tensor cross_entropy_from_logits(const Tensor& logits, const ByteSeq& targets,
                                 const std::vector<real>& weights) {
  check_2d(logits, "cross_entropy_from_logits");
  const int n = logits.rows(), v = logits.cols();
  if (static_cast<int>(targets.size()) != n ||
      static_cast<int>(weights.size()) != n)
    throw std::runtime_error("cross_entropy_from_logits: row count mismatch");
  for (int i = 0; i < n; ++i) {
    if (weights[i] < 0)
      throw std::runtime_error("cross_entropy_from_logits: negative weight");
    if (weights[i] > 0 && (targets[i] < 0 || targets[i] >= v))
      throw std::runtime_error(
          "cross_entropy_from_logits: target out of vocabulary range");
  }
  real loss = 0;
  const real* lv = logits.data().data();
  for (int i = 0; i < n; ++i) {
    if (weights[i] == real(0)) continue;
    const real* row = lv + static_cast<size_t>(i) * v;
    loss += weights[i] * (kernels::logsumexp_row(row, v) - row[targets[i]]);
  }
  Tensor out = Tensor::from_data({1}, {loss}, want_grad(logits));
  if (out.requires_grad()) {
    out.node()->parents = {logits};
    out.node()->backward = [targets, weights, n, v](TensorNode& o) {
      Tensor& l2 = o.parents[0];
      auto& g = grad_of(l2);
      const real* lv2 = l2.data().data();
      const real go = o.grad[0];
      for (int i = 0; i < n; ++i) {
        if (weights[i] == real(0)) continue;
        const real* row = lv2 + static_cast<size_t>(i) * v;
        real lse = kernels::logsumexp_row(row, v);
        real* grow = g.data() + static_cast<size_t>(i) * v;
        for (int j = 0; j < v; ++j)
          grow[j] += go * weights[i] * std::exp(row[j] - lse);
        grow[targets[i]] -= go * weights[i];
      }
    };
  }
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) throw std::runtime_error("backward: loss must be scalar");
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("backward: loss is not finite (value " +
                             std::to_string(loss.item()) + ")");
  // Collect the reachable graph, then replay in descending creation order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{loss.node()};
  seen.insert(loss.node());
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const Tensor& p : n->parents)
      if (seen.insert(p.node()).second) stack.push_back(p.node());
  }
  std::sort(order.begin(), order.end(),
            [](TensorNode* a, TensorNode* b) { return a->id > b->id; });
  loss.node()->grad.assign(1, real(1));
  for (TensorNode* n : order) {
    if (!n->backward) continue;
    if (n->grad.empty()) n->grad.assign(n->value.size(), real(0));
    n->backward(*n);
  }
}

}  // namespace bltd
