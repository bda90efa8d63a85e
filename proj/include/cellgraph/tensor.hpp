#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

// Dense 2-D tensors over double with a reverse-mode gradient tape.
//
// A Tensor is a shared handle to a node holding its value, an optional
// gradient buffer and, when it was produced by an op with at least one
// differentiable input, the parents and a backward closure. Scalars are 1x1.
// A tape is confined to the thread that built it.

namespace cellgraph::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor parameter(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  /// In-place access for optimizers and tests. Must not change the shape.
  Matrix& mutable_value();
  /// Gradient buffer; zeros of the value's shape if nothing was accumulated.
  const Matrix& grad() const;
  bool has_grad() const;

  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  /// Seeds d(this)/d(this) = 1 (requires a 1x1 tensor) and propagates.
  void backward() const;
  void zero_grad();

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend struct TapeAccess;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables tape recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

/// Process-wide accounting of bytes held by tensor values and gradients.
namespace memory {
std::size_t live_bytes();
std::size_t peak_bytes();
void reset_peak();
}  // namespace memory

/// Number of empty segments seen by segment_max since the last reset.
std::size_t empty_segment_max_count();
void reset_empty_segment_max_count();

using IndexList = std::span<const int>;

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a (R x C) + bias (1 x C) broadcast over rows.
Tensor add_rowwise(const Tensor& a, const Tensor& bias);
/// a (R x C) scaled per row by w (R x 1).
Tensor mul_colwise(const Tensor& a, const Tensor& w);
/// a scaled by the 1x1 tensor s.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope = 0.2);
Tensor softmax_rows(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, IndexList rows);
Tensor segment_sum(const Tensor& a, IndexList segment, Index n_segments);
Tensor segment_mean(const Tensor& a, IndexList segment, Index n_segments);
/// Element-wise max per segment. Gradient goes to the lowest-index argmax row.
/// Empty segments produce zeros and bump empty_segment_max_count().
Tensor segment_max(const Tensor& a, IndexList segment, Index n_segments);
/// Column-wise softmax over the rows sharing a segment id.
Tensor segment_softmax(const Tensor& a, IndexList segment, Index n_segments);
Tensor l2_normalize_rows(const Tensor& a, double eps = 1e-12);
/// Row-wise cosine similarity of paired rows, R x 1.
Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps = 1e-12);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean of squared differences over all entries, 1x1.
Tensor mse(const Tensor& prediction, const Tensor& target);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }

/// Compares tape gradients of the scalar `f` against central finite
/// differences over every entry of `params`. Returns the maximum of
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps = 1e-5);

}  // namespace cellgraph::ad
