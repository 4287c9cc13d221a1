#pragma once

#include <cstdint>

#include "bltd/common.hpp"

// Row-level numeric primitives. Both the autodiff forward path and the
// incremental (cached) inference path go through these exact functions, and
// each keeps a fixed summation order, so the two paths agree bit for bit.
// They are defined in one translation unit and never inlined elsewhere.

namespace bltd::kernels {

// y += a * x, elementwise over n.
void axpy(real a, const real* x, real* y, int n);

// Fixed-association dot product (4 independent accumulators).
real dot(const real* a, const real* b, int n);

// out = row . W for row-major W [k x n]; accumulates over k in ascending
// order, matching matmul() row by row.
void matvec(const real* row, const real* w, int k, int n, real* out);

// C = A . B for row-major A [m x k], B [k x n].
void matmul(const real* a, const real* b, int m, int k, int n, real* c);

// Masked softmax attention for one query row.
//   q:        dh contiguous values
//   k_base/v_base: first key/value row (dh contiguous values per row),
//                  consecutive rows separated by k_stride/v_stride
//   adm:      m admissibility flags, or nullptr for all-admissible
// Writes softmax weights into probs (0 at inadmissible keys) and the
// attention output into out. Throws if no key is admissible.
void attention_row(const real* q, const real* k_base, int k_stride,
                   const real* v_base, int v_stride, const uint8_t* adm, int m,
                   int dh, real* probs, real* out);

// RMS normalization of one row: out = x / rms(x) * gain, rms uses eps inside
// the square root.
void rmsnorm_row(const real* x, const real* gain, int d, real eps, real* out);

// In-place rotary position embedding on one row, applied per head slice.
void rope_row(real* x, int d, int head_dim, int64_t position, real theta);

// Inverse rotation, used by the backward pass.
void rope_row_inverse(real* x, int d, int head_dim, int64_t position,
                      real theta);

// out = mean of rows [row0, row1) of x (row-major, d columns).
void mean_rows(const real* x, int row0, int row1, int d, real* out);

// log(sum(exp(row))) with max subtraction.
real logsumexp_row(const real* row, int n);

// x * sigmoid(x)
real silu(real x);

inline constexpr real kRmsNormEps = static_cast<real>(1e-6);

}  // namespace bltd::kernels
