#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bltd/common.hpp"

namespace bltd {

// Dense row-major boolean matrix used for per-pair attention admissibility.
struct BoolMat {
  int rows = 0, cols = 0;
  std::vector<uint8_t> v;

  BoolMat() = default;
  BoolMat(int r, int c, uint8_t fill = 0)
      : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

  uint8_t at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  void set(int r, int c, uint8_t x) { v[static_cast<size_t>(r) * cols + c] = x; }
  const uint8_t* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
};

struct TensorNode;

// Value-semantic handle to a node in a dynamically built computation graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, real stddev,
                      bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const;
  int64_t numel() const;
  int rows() const;  // 2-D convenience accessors
  int cols() const;

  std::vector<real>& data();
  const std::vector<real>& data() const;
  std::vector<real>& grad();             // allocated (zero) on first access
  const std::vector<real>& grad() const;
  bool has_grad() const;
  void zero_grad();

  bool requires_grad() const;
  real item() const;

  TensorNode* node() const { return node_.get(); }

 private:
  std::shared_ptr<TensorNode> node_;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  friend Tensor make_tensor(std::vector<int> shape, bool requires_grad);
};

struct TensorNode {
  uint64_t id = 0;  // creation order; the backward tape replays descending ids
  std::vector<int> shape;
  std::vector<real> value;
  std::vector<real> grad;
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void(TensorNode&)> backward;
};

// While a guard is alive, new ops do not record backward closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

// Elementwise and linear algebra ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);
Tensor div_scalar(const Tensor& a, real s);
Tensor silu(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, std::vector<int> shape);
Tensor embedding_lookup(const Tensor& table, const ByteSeq& ids);

// RMS normalization per row; gain length must equal the feature extent.
Tensor rmsnorm(const Tensor& x, const Tensor& gain);

// Rotary embedding at explicit (possibly non-contiguous) integer positions.
// head_dim <= 0 rotates the full feature width as one slice.
Tensor rope_apply(const Tensor& x, const std::vector<int>& positions,
                  real theta, int head_dim = -1);

// softmax(QK^T/sqrt(d_k)) V with exact zero weight at inadmissible pairs.
// A query row admitting no keys is rejected before softmax.
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const BoolMat& mask);

// Multi-head variant over full-width projections; feature width must divide
// evenly into heads.
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           const BoolMat& mask, int heads);

// Cross-attention where query row i attends only to rows
// [(assign[i]-1)*group, assign[i]*group) of k/v; assign is 1-based.
Tensor grouped_cross_attention(const Tensor& q, const Tensor& k,
                               const Tensor& v,
                               const std::vector<int>& assign, int group,
                               int heads);

// Mean of each row segment [starts[j], starts[j+1]) (1-based starts over n
// rows), one output row per segment.
Tensor row_mean_segments(const Tensor& x, const std::vector<int>& starts,
                         int n);

// Gated feed-forward: w_down . (silu(x . w_gate) * (x . w_up)).
Tensor swiglu_ffn(const Tensor& x, const Tensor& w_gate, const Tensor& w_up,
                  const Tensor& w_down);

// Negative weighted log-likelihood summed over rows; rows with weight zero
// are skipped entirely and receive exactly zero gradient.
Tensor cross_entropy_from_logits(const Tensor& logits, const ByteSeq& targets,
                                 const std::vector<real>& weights);

// Reverse-mode sweep from a finite scalar loss; accumulates into .grad() of
// every tensor that requires gradients and reaches the loss.
void backward(const Tensor& loss);

}  // namespace bltd
