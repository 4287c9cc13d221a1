#include "bltd/kernels.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

// Every kernel here must keep a summation order that depends only on its own
// arguments, never on how much surrounding context is being computed. With
// that property a row computed alone (incremental decode) matches the same
// row computed inside a batched forward pass exactly.

namespace bltd::kernels {

#if defined(__GNUC__)
#define BLTD_NOINLINE __attribute__((noinline))
#else
#define BLTD_NOINLINE
#endif

BLTD_NOINLINE void axpy(real a, const real* x, real* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

BLTD_NOINLINE real dot(const real* a, const real* b, int n) {
  real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

BLTD_NOINLINE void matvec(const real* row, const real* w, int k, int n,
                          real* out) {
  std::memset(out, 0, sizeof(real) * static_cast<size_t>(n));
  for (int kk = 0; kk < k; ++kk) axpy(row[kk], w + static_cast<size_t>(kk) * n, out, n);
}

void matmul(const real* a, const real* b, int m, int k, int n, real* c) {
  for (int i = 0; i < m; ++i)
    matvec(a + static_cast<size_t>(i) * k, b, k, n, c + static_cast<size_t>(i) * n);
}

BLTD_NOINLINE void attention_row(const real* q, const real* k_base,
                                 int k_stride, const real* v_base, int v_stride,
                                 const uint8_t* adm, int m, int dh, real* probs,
                                 real* out) {
  const real inv_sqrt = real(1) / std::sqrt(static_cast<real>(dh));
  real max_score = 0;
  bool any = false;
  for (int j = 0; j < m; ++j) {
    if (adm && !adm[j]) {
      probs[j] = 0;
      continue;
    }
    real s = dot(q, k_base + static_cast<size_t>(j) * k_stride, dh) * inv_sqrt;
    probs[j] = s;
    if (!any || s > max_score) max_score = s;
    any = true;
  }
  if (!any) throw std::runtime_error("attention_row: query admits no keys");
  real denom = 0;
  for (int j = 0; j < m; ++j) {
    if (adm && !adm[j]) continue;
    real e = std::exp(probs[j] - max_score);
    probs[j] = e;
    denom += e;
  }
  for (int j = 0; j < m; ++j) {
    if (adm && !adm[j]) continue;
    probs[j] /= denom;
  }
  std::memset(out, 0, sizeof(real) * static_cast<size_t>(dh));
  for (int j = 0; j < m; ++j) {
    if (adm && !adm[j]) continue;
    axpy(probs[j], v_base + static_cast<size_t>(j) * v_stride, out, dh);
  }
}

BLTD_NOINLINE void rmsnorm_row(const real* x, const real* gain, int d, real eps,
                               real* out) {
  real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= d; i += 4) {
    s0 += x[i] * x[i];
    s1 += x[i + 1] * x[i + 1];
    s2 += x[i + 2] * x[i + 2];
    s3 += x[i + 3] * x[i + 3];
  }
  for (; i < d; ++i) s0 += x[i] * x[i];
  real ms = ((s0 + s1) + (s2 + s3)) / static_cast<real>(d);
  real inv = real(1) / std::sqrt(ms + eps);
  for (int j = 0; j < d; ++j) out[j] = x[j] * inv * gain[j];
}

BLTD_NOINLINE void rope_row(real* x, int d, int head_dim, int64_t position,
                            real theta) {
  const int half = head_dim / 2;
  for (int h = 0; h < d / head_dim; ++h) {
    real* slice = x + h * head_dim;
    for (int i = 0; i < half; ++i) {
      real freq = std::pow(theta, static_cast<real>(-2.0 * i / head_dim));
      real angle = static_cast<real>(position) * freq;
      real c = std::cos(angle), s = std::sin(angle);
      real a = slice[2 * i], b = slice[2 * i + 1];
      slice[2 * i] = a * c - b * s;
      slice[2 * i + 1] = a * s + b * c;
    }
  }
}

BLTD_NOINLINE void rope_row_inverse(real* x, int d, int head_dim,
                                    int64_t position, real theta) {
  const int half = head_dim / 2;
  for (int h = 0; h < d / head_dim; ++h) {
    real* slice = x + h * head_dim;
    for (int i = 0; i < half; ++i) {
      real freq = std::pow(theta, static_cast<real>(-2.0 * i / head_dim));
      real angle = static_cast<real>(position) * freq;
      real c = std::cos(angle), s = std::sin(angle);
      real a = slice[2 * i], b = slice[2 * i + 1];
      slice[2 * i] = a * c + b * s;
      slice[2 * i + 1] = -a * s + b * c;
    }
  }
}

BLTD_NOINLINE void mean_rows(const real* x, int row0, int row1, int d,
                             real* out) {
  std::memset(out, 0, sizeof(real) * static_cast<size_t>(d));
  for (int r = row0; r < row1; ++r) axpy(real(1), x + static_cast<size_t>(r) * d, out, d);
  real inv = real(1) / static_cast<real>(row1 - row0);
  for (int j = 0; j < d; ++j) out[j] *= inv;
}

BLTD_NOINLINE real logsumexp_row(const real* row, int n) {
  real mx = row[0];
  for (int i = 1; i < n; ++i)
    if (row[i] > mx) mx = row[i];
  real s = 0;
  for (int i = 0; i < n; ++i) s += std::exp(row[i] - mx);
  return mx + std::log(s);
}

BLTD_NOINLINE real silu(real x) { return x / (real(1) + std::exp(-x)); }

}  // namespace bltd::kernels
