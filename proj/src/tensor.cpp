#include "cellgraph/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

namespace cellgraph::ad {

namespace {

std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};
std::atomic<std::size_t> g_empty_max_segments{0};
thread_local bool t_grad_enabled = true;

void track_alloc(std::size_t bytes) {
  const std::size_t now = g_live_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

void track_free(std::size_t bytes) { g_live_bytes.fetch_sub(bytes); }

std::size_t bytes_of(const Matrix& m) { return static_cast<std::size_t>(m.size()) * sizeof(double); }

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

namespace detail {

struct Node {
  explicit Node(Matrix v, bool rg) : value(std::move(v)), requires_grad(rg) {
    value_bytes = bytes_of(value);
    track_alloc(value_bytes);
  }
  ~Node() { track_free(value_bytes + grad_bytes); }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  Matrix& ensure_grad() {
    if (grad_bytes == 0 && value.size() > 0) {
      grad = Matrix::Zero(value.rows(), value.cols());
      grad_bytes = bytes_of(grad);
      track_alloc(grad_bytes);
    } else if (grad.size() != value.size()) {
      grad = Matrix::Zero(value.rows(), value.cols());
    }
    return grad;
  }

  void accumulate(const Matrix& g) {
    if (!requires_grad) return;
    ensure_grad() += g;
  }

  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::size_t value_bytes = 0;
  std::size_t grad_bytes = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;

struct TapeAccess {
  static const std::shared_ptr<Node>& node(const Tensor& t) {
    if (!t.node_) throw std::logic_error("use of undefined Tensor");
    return t.node_;
  }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

namespace {

Node& node_of(const Tensor& t) { return *TapeAccess::node(t); }

// Builds an op result; records parents and the backward closure only when the
// tape is on and some input is differentiable.
Tensor make_result(Matrix value, std::initializer_list<const Tensor*> inputs, std::function<void(Node&)> backward) {
  bool needs = false;
  if (t_grad_enabled)
    for (const Tensor* in : inputs) needs = needs || node_of(*in).requires_grad;
  auto n = std::make_shared<Node>(std::move(value), needs);
  if (needs) {
    for (const Tensor* in : inputs) n->parents.push_back(TapeAccess::node(*in));
    n->backward = std::move(backward);
  }
  return TapeAccess::wrap(std::move(n));
}

Tensor make_result(Matrix value, const std::vector<Tensor>& inputs, std::function<void(Node&)> backward) {
  bool needs = false;
  if (t_grad_enabled)
    for (const Tensor& in : inputs) needs = needs || node_of(in).requires_grad;
  auto n = std::make_shared<Node>(std::move(value), needs);
  if (needs) {
    for (const Tensor& in : inputs) n->parents.push_back(TapeAccess::node(in));
    n->backward = std::move(backward);
  }
  return TapeAccess::wrap(std::move(n));
}

void check_segments(const char* op, Index rows, IndexList segment, Index n_segments) {
  if (static_cast<Index>(segment.size()) != rows)
    throw ShapeError(std::string(op) + ": segment list length " + std::to_string(segment.size()) +
                     " != rows " + std::to_string(rows));
  for (int s : segment)
    if (s < 0 || s >= n_segments) throw ShapeError(std::string(op) + ": segment id out of range");
}

}  // namespace

Tensor::Tensor(Matrix value, bool requires_grad)
    : node_(std::make_shared<Node>(std::move(value), requires_grad)) {}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor(Matrix::Constant(1, 1, v), requires_grad); }

const Matrix& Tensor::value() const { return node_of(*this).value; }
Matrix& Tensor::mutable_value() { return node_of(*this).value; }

const Matrix& Tensor::grad() const {
  Node& n = node_of(*this);
  return n.ensure_grad();
}

bool Tensor::has_grad() const { return node_of(*this).grad_bytes > 0; }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(v));
  return v(0, 0);
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }
void Tensor::set_requires_grad(bool on) { node_of(*this).requires_grad = on; }

void Tensor::zero_grad() {
  Node& n = node_of(*this);
  if (n.grad_bytes > 0) n.grad.setZero();
}

void Tensor::backward() const {
  Node& root = node_of(*this);
  if (root.value.size() != 1) throw ShapeError("backward() requires a scalar, got " + shape_str(root.value));
  if (!root.requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  root.ensure_grad().array() += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad_bytes > 0) n->backward(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

namespace memory {
std::size_t live_bytes() { return g_live_bytes.load(); }
std::size_t peak_bytes() { return g_peak_bytes.load(); }
void reset_peak() { g_peak_bytes.store(g_live_bytes.load()); }
}  // namespace memory

std::size_t empty_segment_max_count() { return g_empty_max_segments.load(); }
void reset_empty_segment_max_count() { g_empty_max_segments.store(0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.rows()) shape_fail("matmul", A, B);
  return make_result(A * B, {&a, &b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("add", a.value(), b.value());
  return make_result(a.value() + b.value(), {&a, &b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("sub", a.value(), b.value());
  return make_result(a.value() - b.value(), {&a, &b}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a.value(), b.value());
  return make_result(a.value().cwiseProduct(b.value()), {&a, &b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
  });
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  const Matrix& A = a.value();
  const Matrix& B = bias.value();
  if (B.rows() != 1 || B.cols() != A.cols()) shape_fail("add_rowwise", A, B);
  Matrix out = A.rowwise() + B.row(0);
  return make_result(std::move(out), {&a, &bias}, [](Node& self) {
    self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

Tensor mul_colwise(const Tensor& a, const Tensor& w) {
  const Matrix& A = a.value();
  const Matrix& W = w.value();
  if (W.cols() != 1 || W.rows() != A.rows()) shape_fail("mul_colwise", A, W);
  Matrix out = (A.array().colwise() * W.col(0).array()).matrix();
  return make_result(std::move(out), {&a, &w}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pw = *self.parents[1];
    if (pa.requires_grad) pa.accumulate((self.grad.array().colwise() * pw.value.col(0).array()).matrix());
    if (pw.requires_grad) pw.accumulate(self.grad.cwiseProduct(pa.value).rowwise().sum());
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.value().size() != 1) shape_fail("mul_scalar", a.value(), s.value());
  return make_result(a.value() * s.item(), {&a, &s}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * ps.value(0, 0));
    if (ps.requires_grad) ps.accumulate(Matrix::Constant(1, 1, self.grad.cwiseProduct(pa.value).sum()));
  });
}

Tensor scale(const Tensor& a, double factor) {
  return make_result(a.value() * factor, {&a},
                     [factor](Node& self) { self.parents[0]->accumulate(self.grad * factor); });
}

Tensor relu(const Tensor& a) {
  return make_result(a.value().cwiseMax(0.0), {&a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate((p.value.array() > 0.0).select(self.grad, 0.0).matrix());
  });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  Matrix out = (a.value().array() > 0.0).select(a.value(), a.value() * negative_slope);
  return make_result(std::move(out), {&a}, [negative_slope](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate((p.value.array() > 0.0).select(self.grad, self.grad * negative_slope).matrix());
  });
}

Tensor softmax_rows(const Tensor& a) {
  Matrix y = a.value();
  for (Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Matrix y_copy = t_grad_enabled && a.requires_grad() ? y : Matrix();
  return make_result(std::move(y), {&a}, [y = std::move(y_copy)](Node& self) {
    const Matrix& g = self.grad;
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    self.parents[0]->accumulate((y.array() * (g.colwise() - dot).array()).matrix());
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Tensor& t : parts) {
    if (t.rows() != rows) shape_fail("concat_cols", parts.front().value(), t.value());
    cols += t.cols();
  }
  Matrix out(rows, cols);
  Index off = 0;
  for (const Tensor& t : parts) {
    out.middleCols(off, t.cols()) = t.value();
    off += t.cols();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    Index o = 0;
    for (auto& p : self.parents) {
      const Index c = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(o, c));
      o += c;
    }
  });
}

Tensor gather_rows(const Tensor& a, IndexList rows) {
  const Matrix& A = a.value();
  Matrix out(static_cast<Index>(rows.size()), A.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= A.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(r)) = A.row(rows[r]);
  }
  std::vector<int> idx = t_grad_enabled && a.requires_grad() ? std::vector<int>(rows.begin(), rows.end())
                                                               : std::vector<int>();
  return make_result(std::move(out), {&a}, [idx = std::move(idx)](Node& self) {
    Node& p = *self.parents[0];
    Matrix& g = p.ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) g.row(idx[r]) += self.grad.row(static_cast<Index>(r));
  });
}

Tensor segment_sum(const Tensor& a, IndexList segment, Index n_segments) {
  const Matrix& A = a.value();
  check_segments("segment_sum", A.rows(), segment, n_segments);
  Matrix out = Matrix::Zero(n_segments, A.cols());
  for (Index r = 0; r < A.rows(); ++r) out.row(segment[static_cast<std::size_t>(r)]) += A.row(r);
  std::vector<int> seg =
      t_grad_enabled && a.requires_grad() ? std::vector<int>(segment.begin(), segment.end()) : std::vector<int>();
  return make_result(std::move(out), {&a}, [seg = std::move(seg)](Node& self) {
    Node& p = *self.parents[0];
    Matrix& g = p.ensure_grad();
    for (std::size_t r = 0; r < seg.size(); ++r) g.row(static_cast<Index>(r)) += self.grad.row(seg[r]);
  });
}

Tensor segment_mean(const Tensor& a, IndexList segment, Index n_segments) {
  const Matrix& A = a.value();
  check_segments("segment_mean", A.rows(), segment, n_segments);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n_segments);
  for (int s : segment) count(s) += 1.0;
  Eigen::VectorXd inv = count.unaryExpr([](double c) { return c > 0.0 ? 1.0 / c : 0.0; });
  Tensor weights = Tensor::constant(
      Eigen::VectorXd::NullaryExpr(A.rows(), [&](Index r) { return inv(segment[static_cast<std::size_t>(r)]); }));
  return segment_sum(mul_colwise(a, weights), segment, n_segments);
}

Tensor segment_max(const Tensor& a, IndexList segment, Index n_segments) {
  const Matrix& A = a.value();
  check_segments("segment_max", A.rows(), segment, n_segments);
  const Index cols = A.cols();
  Eigen::MatrixXi arg = Eigen::MatrixXi::Constant(n_segments, cols, -1);
  Matrix out = Matrix::Zero(n_segments, cols);
  for (Index r = 0; r < A.rows(); ++r) {
    const int s = segment[static_cast<std::size_t>(r)];
    for (Index c = 0; c < cols; ++c) {
      // Rows are scanned in ascending order, so strict > keeps the lowest index on ties.
      if (arg(s, c) < 0 || A(r, c) > out(s, c)) {
        arg(s, c) = static_cast<int>(r);
        out(s, c) = A(r, c);
      }
    }
  }
  for (Index s = 0; s < n_segments; ++s)
    if (cols > 0 && arg(s, 0) < 0) g_empty_max_segments.fetch_add(1);
  if (!(t_grad_enabled && a.requires_grad())) arg.resize(0, 0);
  return make_result(std::move(out), {&a}, [arg = std::move(arg)](Node& self) {
    Node& p = *self.parents[0];
    Matrix& g = p.ensure_grad();
    for (Index s = 0; s < arg.rows(); ++s)
      for (Index c = 0; c < arg.cols(); ++c)
        if (arg(s, c) >= 0) g(arg(s, c), c) += self.grad(s, c);
  });
}

Tensor segment_softmax(const Tensor& a, IndexList segment, Index n_segments) {
  const Matrix& A = a.value();
  check_segments("segment_softmax", A.rows(), segment, n_segments);
  const Index cols = A.cols();
  Matrix seg_max = Matrix::Constant(n_segments, cols, -std::numeric_limits<double>::infinity());
  for (Index r = 0; r < A.rows(); ++r)
    seg_max.row(segment[static_cast<std::size_t>(r)]) =
        seg_max.row(segment[static_cast<std::size_t>(r)]).cwiseMax(A.row(r));
  Matrix y(A.rows(), cols);
  Matrix denom = Matrix::Zero(n_segments, cols);
  for (Index r = 0; r < A.rows(); ++r) {
    const int s = segment[static_cast<std::size_t>(r)];
    y.row(r) = (A.row(r) - seg_max.row(s)).array().exp().matrix();
    denom.row(s) += y.row(r);
  }
  for (Index r = 0; r < A.rows(); ++r) y.row(r).array() /= denom.row(segment[static_cast<std::size_t>(r)]).array();

  const bool record = t_grad_enabled && a.requires_grad();
  std::vector<int> seg = record ? std::vector<int>(segment.begin(), segment.end()) : std::vector<int>();
  Matrix y_copy = record ? y : Matrix();
  return make_result(std::move(y), {&a}, [seg = std::move(seg), y = std::move(y_copy), n_segments](Node& self) {
    const Matrix& g = self.grad;
    Matrix dot = Matrix::Zero(n_segments, g.cols());
    for (std::size_t r = 0; r < seg.size(); ++r)
      dot.row(seg[r]) += g.row(static_cast<Index>(r)).cwiseProduct(y.row(static_cast<Index>(r)));
    Matrix dx(g.rows(), g.cols());
    for (std::size_t r = 0; r < seg.size(); ++r) {
      const Index ri = static_cast<Index>(r);
      dx.row(ri) = y.row(ri).cwiseProduct(g.row(ri) - dot.row(seg[r]));
    }
    self.parents[0]->accumulate(dx);
  });
}

Tensor l2_normalize_rows(const Tensor& a, double eps) {
  const Matrix& A = a.value();
  Eigen::VectorXd norm = A.rowwise().norm().cwiseMax(eps);
  Matrix y = (A.array().colwise() / norm.array()).matrix();
  const bool record = t_grad_enabled && a.requires_grad();
  Matrix y_copy = record ? y : Matrix();
  if (!record) norm.resize(0);
  return make_result(std::move(y), {&a}, [y = std::move(y_copy), norm = std::move(norm), eps](Node& self) {
    Node& p = *self.parents[0];
    const Matrix& g = self.grad;
    Matrix dx(g.rows(), g.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      if (p.value.row(r).norm() > eps)
        dx.row(r) = (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norm(r);
      else
        dx.row(r) = g.row(r) / eps;
    }
    p.accumulate(dx);
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (a.shape() != b.shape()) shape_fail("cosine_similarity", A, B);
  const Eigen::VectorXd na = A.rowwise().norm().cwiseMax(eps);
  const Eigen::VectorXd nb = B.rowwise().norm().cwiseMax(eps);
  const Eigen::VectorXd dot = A.cwiseProduct(B).rowwise().sum();
  Matrix c = (dot.array() / (na.array() * nb.array())).matrix();
  Eigen::VectorXd c_vec = c.col(0);
  return make_result(std::move(c), {&a, &b}, [na, nb, c_vec](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const Eigen::VectorXd g = self.grad.col(0);
    if (pa.requires_grad) {
      Matrix da(pa.value.rows(), pa.value.cols());
      for (Index r = 0; r < da.rows(); ++r)
        da.row(r) = g(r) * (pb.value.row(r) / (na(r) * nb(r)) - c_vec(r) * pa.value.row(r) / (na(r) * na(r)));
      pa.accumulate(da);
    }
    if (pb.requires_grad) {
      Matrix db(pb.value.rows(), pb.value.cols());
      for (Index r = 0; r < db.rows(); ++r)
        db.row(r) = g(r) * (pa.value.row(r) / (na(r) * nb(r)) - c_vec(r) * pb.value.row(r) / (nb(r) * nb(r)));
      pb.accumulate(db);
    }
  });
}

Tensor sum(const Tensor& a) {
  return make_result(Matrix::Constant(1, 1, a.value().sum()), {&a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) shape_fail("mse", prediction.value(), target.value());
  const double n = static_cast<double>(prediction.value().size());
  if (n == 0) throw ShapeError("mse of empty tensor");
  const Matrix diff = prediction.value() - target.value();
  return make_result(Matrix::Constant(1, 1, diff.squaredNorm() / n), {&prediction, &target}, [n](Node& self) {
    Node& pp = *self.parents[0];
    Node& pt = *self.parents[1];
    const Matrix g = (pp.value - pt.value) * (2.0 * self.grad(0, 0) / n);
    if (pp.requires_grad) pp.accumulate(g);
    if (pt.requires_grad) pt.accumulate(-g);
  });
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps) {
  std::vector<Tensor> ps = params;
  for (Tensor& p : ps) p.zero_grad();
  const Tensor out = f();
  if (!std::isfinite(out.item())) throw std::domain_error("grad_check: non-finite objective");
  out.backward();

  double worst = 0.0;
  NoGradGuard no_grad;
  for (Tensor& p : ps) {
    const Matrix analytic = p.grad();
    Matrix& v = p.mutable_value();
    for (Index k = 0; k < v.size(); ++k) {
      const double saved = v.data()[k];
      v.data()[k] = saved + eps;
      const double up = f().item();
      v.data()[k] = saved - eps;
      const double down = f().item();
      v.data()[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw std::domain_error("grad_check: non-finite objective");
      const double fd = (up - down) / (2.0 * eps);
      const double ad = analytic.data()[k];
      const double err = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace cellgraph::ad
