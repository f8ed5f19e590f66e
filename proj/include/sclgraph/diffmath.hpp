#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every primitive in execution order; backward() walks the
// records in exact reverse order, so gradient accumulation is deterministic
// for a fixed tape. Tensors are lightweight handles (tape pointer + index).
// Constants live on the tape too but never receive gradients.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sclgraph/errors.hpp"

namespace sclgraph {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using SparseMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

template <typename Scalar>
class Tape;

template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<Scalar>* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Matrix<Scalar>& value() const { return tape_->value(index_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }
  bool requires_grad() const { return tape_->requires_grad(index_); }

  Tape<Scalar>* tape() const { return tape_; }
  std::size_t index() const { return index_; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Gradient buffers produced by backward(), indexed by tensor handle.
template <typename Scalar>
class GradientMap {
 public:
  explicit GradientMap(std::vector<Matrix<Scalar>> grads) : grads_(std::move(grads)) {}

  /// Gradient w.r.t. `t`; zeros of t's shape if nothing flowed into it.
  Matrix<Scalar> operator[](const Tensor<Scalar>& t) const {
    const auto& g = grads_.at(t.index());
    if (g.size() == 0) return Matrix<Scalar>::Zero(t.rows(), t.cols());
    return g;
  }

  bool has(const Tensor<Scalar>& t) const { return grads_.at(t.index()).size() != 0; }

 private:
  std::vector<Matrix<Scalar>> grads_;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;

  /// Accumulates an input gradient during the reverse sweep.
  class Sink {
   public:
    explicit Sink(std::vector<Mat>& grads, const Tape& tape) : grads_(grads), tape_(tape) {}
    void add(std::size_t index, const Mat& g) {
      if (!tape_.requires_grad(index)) return;
      auto& slot = grads_[index];
      if (slot.size() == 0)
        slot = g;
      else
        slot += g;
    }

   private:
    std::vector<Mat>& grads_;
    const Tape& tape_;
  };

  // (tape, upstream gradient of this node, sink)
  using BackwardFn = std::function<void(const Tape&, const Mat&, Sink&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<Scalar> variable(Mat value) { return push(std::move(value), {}, nullptr, true); }
  Tensor<Scalar> constant(Mat value) { return push(std::move(value), {}, nullptr, false); }
  Tensor<Scalar> scalar_constant(Scalar v) { return constant(Mat::Constant(1, 1, v)); }

  /// Records a primitive; it requires grad iff any input does.
  Tensor<Scalar> record(Mat value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_.at(i).requires_grad;
    return push(std::move(value), std::move(inputs), needs ? std::move(fn) : nullptr, needs);
  }

  const Mat& value(std::size_t i) const { return nodes_.at(i).value; }
  bool requires_grad(std::size_t i) const { return nodes_.at(i).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  GradientMap<Scalar> backward(const Tensor<Scalar>& root) const {
    if (root.tape() != this) throw StructuralError("backward: root is not on this tape");
    const auto& r = value(root.index());
    if (r.rows() != 1 || r.cols() != 1)
      throw StructuralError("backward: root must be a 1x1 scalar, got " + std::to_string(r.rows()) +
                            "x" + std::to_string(r.cols()));
    std::vector<Mat> grads(nodes_.size());
    Sink sink(grads, *this);
    if (!requires_grad(root.index())) return GradientMap<Scalar>(std::move(grads));
    grads[root.index()] = Mat::Ones(1, 1);
    for (std::size_t k = root.index() + 1; k-- > 0;) {
      const auto& node = nodes_[k];
      if (!node.backward || grads[k].size() == 0) continue;
      node.backward(*this, grads[k], sink);
    }
    return GradientMap<Scalar>(std::move(grads));
  }

 private:
  struct Node {
    Mat value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Tensor<Scalar> push(Mat value, std::vector<std::size_t> inputs, BackwardFn fn, bool needs) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(fn), needs});
    return Tensor<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

template <typename Scalar>
GradientMap<Scalar> backward(const Tape<Scalar>& tape, const Tensor<Scalar>& root) {
  return tape.backward(root);
}

using Taped = Tape<double>;
using Tensord = Tensor<double>;
using MatrixXd = Matrix<double>;

namespace detail {

template <typename Scalar>
Tape<Scalar>& same_tape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    throw StructuralError(std::string(op) + ": operands live on different tapes");
  return *a.tape();
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
void require_same_shape(const Matrix<Scalar>& a, const Matrix<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw StructuralError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                          " vs " + shape_str(b.rows(), b.cols()));
}

template <typename Scalar>
bool is_scalar(const Matrix<Scalar>& m) {
  return m.rows() == 1 && m.cols() == 1;
}

// Elementwise binary op with scalar-x-matrix broadcasting on either side.
// fwd(a, b) -> value; da(a, b, g) / db(a, b, g) -> per-element gradient
// contributions, summed when the operand was broadcast.
template <typename Scalar, typename Fwd, typename DA, typename DB>
Tensor<Scalar> broadcast_binary(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op,
                                Fwd fwd, DA da, DB db) {
  auto& tape = same_tape(a, b, op);
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool a_bc = is_scalar(av) && !is_scalar(bv);
  const bool b_bc = is_scalar(bv) && !is_scalar(av);
  if (!a_bc && !b_bc) require_same_shape(av, bv, op);
  const Eigen::Index r = a_bc ? bv.rows() : av.rows();
  const Eigen::Index c = a_bc ? bv.cols() : av.cols();
  auto expand = [r, c](const Matrix<Scalar>& m, bool bc) -> Matrix<Scalar> {
    return bc ? Matrix<Scalar>::Constant(r, c, m(0, 0)) : m;
  };
  Matrix<Scalar> out = fwd(expand(av, a_bc), expand(bv, b_bc));
  const auto ia = a.index();
  const auto ib = b.index();
  return tape.record(std::move(out), {ia, ib},
                     [=](const Tape<Scalar>& t, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
                       const Matrix<Scalar> ea = expand(t.value(ia), a_bc);
                       const Matrix<Scalar> eb = expand(t.value(ib), b_bc);
                       if (t.requires_grad(ia)) {
                         Matrix<Scalar> ga = da(ea, eb, g);
                         s.add(ia, a_bc ? Matrix<Scalar>::Constant(1, 1, ga.sum()) : ga);
                       }
                       if (t.requires_grad(ib)) {
                         Matrix<Scalar> gb = db(ea, eb, g);
                         s.add(ib, b_bc ? Matrix<Scalar>::Constant(1, 1, gb.sum()) : gb);
                       }
                     });
}

template <typename Scalar, typename Fwd, typename Deriv>
Tensor<Scalar> unary(const Tensor<Scalar>& a, Fwd fwd, Deriv deriv) {
  auto& tape = *a.tape();
  Matrix<Scalar> out = fwd(a.value());
  const auto ia = a.index();
  const auto io = tape.size();
  return tape.record(std::move(out), {ia},
                     [=](const Tape<Scalar>& t, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
                       s.add(ia, deriv(t.value(ia), t.value(io), g));
                     });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive set
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  auto& tape = detail::same_tape(a, b, "matmul");
  if (a.cols() != b.rows())
    throw StructuralError("matmul: inner dimensions differ " + detail::shape_str(a.rows(), a.cols()) +
                          " * " + detail::shape_str(b.rows(), b.cols()));
  Matrix<Scalar> out = a.value() * b.value();
  const auto ia = a.index();
  const auto ib = b.index();
  return tape.record(std::move(out), {ia, ib},
                     [ia, ib](const Tape<Scalar>& t, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
                       if (t.requires_grad(ia)) s.add(ia, g * t.value(ib).transpose());
                       if (t.requires_grad(ib)) s.add(ib, t.value(ia).transpose() * g);
                     });
}

/// Left-multiplies by a fixed sparse operator. `op` must outlive the tape.
template <typename Scalar>
Tensor<Scalar> spmm(const SparseMatrix<Scalar>& op, const Tensor<Scalar>& x) {
  if (op.cols() != x.rows())
    throw StructuralError("spmm: operator is " + detail::shape_str(op.rows(), op.cols()) + ", operand has " +
                          std::to_string(x.rows()) + " rows");
  Matrix<Scalar> out = op * x.value();
  const auto ix = x.index();
  const SparseMatrix<Scalar>* p = &op;
  return x.tape()->record(std::move(out), {ix},
                          [ix, p](const Tape<Scalar>&, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
                            s.add(ix, p->transpose() * g);
                          });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::broadcast_binary(
      a, b, "add", [](const auto& x, const auto& y) -> Matrix<Scalar> { return x + y; },
      [](const auto&, const auto&, const auto& g) -> Matrix<Scalar> { return g; },
      [](const auto&, const auto&, const auto& g) -> Matrix<Scalar> { return g; });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::broadcast_binary(
      a, b, "sub", [](const auto& x, const auto& y) -> Matrix<Scalar> { return x - y; },
      [](const auto&, const auto&, const auto& g) -> Matrix<Scalar> { return g; },
      [](const auto&, const auto&, const auto& g) -> Matrix<Scalar> { return -g; });
}

template <typename Scalar>
Tensor<Scalar> mul_elem(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return detail::broadcast_binary(
      a, b, "mul_elem", [](const auto& x, const auto& y) -> Matrix<Scalar> { return x.cwiseProduct(y); },
      [](const auto&, const auto& y, const auto& g) -> Matrix<Scalar> { return g.cwiseProduct(y); },
      [](const auto& x, const auto&, const auto& g) -> Matrix<Scalar> { return g.cwiseProduct(x); });
}

/// Elementwise quotient; the divisor must be nonzero everywhere.
template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if ((b.value().array() == Scalar(0)).any()) throw ParameterError("div: zero divisor");
  return detail::broadcast_binary(
      a, b, "div", [](const auto& x, const auto& y) -> Matrix<Scalar> { return x.cwiseQuotient(y); },
      [](const auto&, const auto& y, const auto& g) -> Matrix<Scalar> { return g.cwiseQuotient(y); },
      [](const auto& x, const auto& y, const auto& g) -> Matrix<Scalar> {
        return -g.cwiseProduct(x).cwiseQuotient(y.cwiseProduct(y));
      });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  return detail::unary(
      a, [c](const auto& x) -> Matrix<Scalar> { return c * x; },
      [c](const auto&, const auto&, const auto& g) -> Matrix<Scalar> { return c * g; });
}

/// max(0, x); the subgradient at exactly 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return x.cwiseMax(Scalar(0)); },
      [](const auto& x, const auto&, const auto& g) -> Matrix<Scalar> {
        return (x.array() > Scalar(0)).select(g, Scalar(0));
      });
}

/// Margin floor max(0, x), kept distinct from relu for readability at call sites.
template <typename Scalar>
Tensor<Scalar> hinge(const Tensor<Scalar>& a) {
  return relu(a);
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& a) {
  return detail::unary(
      a,
      [](const auto& x) -> Matrix<Scalar> {
        return x.unaryExpr([](Scalar v) {
          // branch keeps exp() from overflowing for large |v|
          if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-v));
          const Scalar e = std::exp(v);
          return e / (Scalar(1) + e);
        });
      },
      [](const auto&, const auto& y, const auto& g) -> Matrix<Scalar> {
        return g.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
      });
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return x.array().exp().matrix(); },
      [](const auto&, const auto& y, const auto& g) -> Matrix<Scalar> { return g.cwiseProduct(y); });
}

template <typename Scalar>
Tensor<Scalar> log(const Tensor<Scalar>& a) {
  if ((a.value().array() <= Scalar(0)).any()) throw ParameterError("log: input must be strictly positive");
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return x.array().log().matrix(); },
      [](const auto& x, const auto&, const auto& g) -> Matrix<Scalar> { return g.cwiseQuotient(x); });
}

template <typename Scalar>
Tensor<Scalar> sqrt(const Tensor<Scalar>& a) {
  if ((a.value().array() < Scalar(0)).any()) throw ParameterError("sqrt: negative input");
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return x.cwiseSqrt(); },
      [](const auto&, const auto& y, const auto& g) -> Matrix<Scalar> {
        return g.cwiseQuotient(Scalar(2) * y);
      });
}

/// Clamps into [lo, hi]; gradient passes only strictly inside the interval.
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
  return detail::unary(
      a, [lo, hi](const auto& x) -> Matrix<Scalar> { return x.cwiseMax(lo).cwiseMin(hi); },
      [lo, hi](const auto& x, const auto&, const auto& g) -> Matrix<Scalar> {
        return (x.array() > lo && x.array() < hi).select(g, Scalar(0));
      });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return x.transpose(); },
      [](const auto&, const auto&, const auto& g) -> Matrix<Scalar> { return g.transpose(); });
}

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& a) {
  return detail::unary(
      a,
      [](const auto& x) -> Matrix<Scalar> {
        Matrix<Scalar> e = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
        return e.array().colwise() / e.rowwise().sum().array();
      },
      [](const auto&, const auto& y, const auto& g) -> Matrix<Scalar> {
        const auto dot = g.cwiseProduct(y).rowwise().sum();
        return y.cwiseProduct((g.colwise() - dot));
      });
}

/// Row-wise log-softmax through the max-shifted log-sum-exp.
template <typename Scalar>
Tensor<Scalar> log_softmax_rows(const Tensor<Scalar>& a) {
  return detail::unary(
      a,
      [](const auto& x) -> Matrix<Scalar> {
        const auto mx = x.rowwise().maxCoeff();
        Matrix<Scalar> shifted = x.colwise() - mx;
        const auto lse = shifted.array().exp().rowwise().sum().log().matrix();
        return shifted.colwise() - lse;
      },
      [](const auto&, const auto& y, const auto& g) -> Matrix<Scalar> {
        Matrix<Scalar> p = y.array().exp().matrix();
        return g - Matrix<Scalar>(p.array().colwise() * g.rowwise().sum().array());
      });
}

template <typename Scalar>
Tensor<Scalar> trace(const Tensor<Scalar>& a) {
  if (a.rows() != a.cols()) throw StructuralError("trace: input must be square");
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return Matrix<Scalar>::Constant(1, 1, x.trace()); },
      [](const auto& x, const auto&, const auto& g) -> Matrix<Scalar> {
        return g(0, 0) * Matrix<Scalar>::Identity(x.rows(), x.cols());
      });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return Matrix<Scalar>::Constant(1, 1, x.sum()); },
      [](const auto& x, const auto&, const auto& g) -> Matrix<Scalar> {
        return Matrix<Scalar>::Constant(x.rows(), x.cols(), g(0, 0));
      });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  if (a.value().size() == 0) throw ParameterError("mean: empty tensor");
  return detail::unary(
      a, [](const auto& x) -> Matrix<Scalar> { return Matrix<Scalar>::Constant(1, 1, x.mean()); },
      [](const auto& x, const auto&, const auto& g) -> Matrix<Scalar> {
        return Matrix<Scalar>::Constant(x.rows(), x.cols(), g(0, 0) / Scalar(x.size()));
      });
}

/// Gathers rows by index (repeats allowed; gradients scatter-add back).
template <typename Scalar>
Tensor<Scalar> select_rows(const Tensor<Scalar>& a, std::span<const Eigen::Index> rows) {
  const auto& x = a.value();
  Matrix<Scalar> out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw StructuralError("select_rows: row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  }
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  const auto ia = a.index();
  const auto n = x.rows();
  return a.tape()->record(std::move(out), {ia},
                          [ia, idx, n](const Tape<Scalar>&, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
                            Matrix<Scalar> full = Matrix<Scalar>::Zero(n, g.cols());
                            for (std::size_t i = 0; i < idx.size(); ++i)
                              full.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                            s.add(ia, full);
                          });
}

/// Picks one entry per row: out(i) = a(i, cols[i]); result is rows x 1.
template <typename Scalar>
Tensor<Scalar> pick_per_row(const Tensor<Scalar>& a, std::span<const Eigen::Index> cols) {
  const auto& x = a.value();
  if (static_cast<Eigen::Index>(cols.size()) != x.rows())
    throw StructuralError("pick_per_row: need one column index per row");
  Matrix<Scalar> out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (cols[i] < 0 || cols[i] >= x.cols()) throw StructuralError("pick_per_row: column out of range");
    out(i, 0) = x(i, cols[i]);
  }
  std::vector<Eigen::Index> idx(cols.begin(), cols.end());
  const auto ia = a.index();
  const auto c = x.cols();
  return a.tape()->record(std::move(out), {ia},
                          [ia, idx, c](const Tape<Scalar>&, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
                            Matrix<Scalar> full = Matrix<Scalar>::Zero(g.rows(), c);
                            for (Eigen::Index i = 0; i < g.rows(); ++i) full(i, idx[i]) = g(i, 0);
                            s.add(ia, full);
                          });
}

/// Min-max scaling of a column vector into [0, 1]; constant 0.5 when max == min.
/// Gradient flows through the first argmin / argmax.
template <typename Scalar>
Tensor<Scalar> minmax_normalize(const Tensor<Scalar>& a) {
  const auto& x = a.value();
  if (x.cols() != 1 || x.rows() == 0) throw StructuralError("minmax_normalize: expects a nonempty column");
  Eigen::Index imin = 0, imax = 0;
  const Scalar lo = x.col(0).minCoeff(&imin);
  const Scalar hi = x.col(0).maxCoeff(&imax);
  const auto ia = a.index();
  if (!(hi > lo)) {
    return a.tape()->record(Matrix<Scalar>::Constant(x.rows(), 1, Scalar(0.5)), {ia},
                            [ia](const Tape<Scalar>& t, const Matrix<Scalar>&, typename Tape<Scalar>::Sink& s) {
                              s.add(ia, Matrix<Scalar>::Zero(t.value(ia).rows(), 1));
                            });
  }
  const Scalar range = hi - lo;
  Matrix<Scalar> out = (x.array() - lo) / range;
  return a.tape()->record(std::move(out), {ia},
                          [ia, imin, imax, lo, range](const Tape<Scalar>& t, const Matrix<Scalar>& g,
                                                      typename Tape<Scalar>::Sink& s) {
                            const auto& xv = t.value(ia);
                            // y_i = (x_i - lo) / range, lo = x[imin], range = x[imax] - x[imin]
                            Matrix<Scalar> gx = g / range;
                            const Scalar gsum = g.sum();
                            const Scalar weighted = (g.array() * (xv.array() - lo)).sum() / (range * range);
                            gx(imin, 0) += -gsum / range + weighted;
                            gx(imax, 0) += -weighted;
                            s.add(ia, gx);
                          });
}

// ---------------------------------------------------------------------------
// Kernel helpers
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
Matrix<Scalar> squared_distances(const Matrix<Scalar>& x) {
  const Eigen::Index m = x.rows();
  Matrix<Scalar> d2(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    d2(i, i) = Scalar(0);
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const Scalar v = (x.row(i) - x.row(j)).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }
  return d2;
}

struct MedianPairs {
  double median = 0;
  // one pair for odd counts, two (averaged) for even counts
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
};

template <typename Scalar>
MedianPairs median_pair(const Matrix<Scalar>& x) {
  const Eigen::Index m = x.rows();
  std::vector<std::pair<Scalar, std::pair<Eigen::Index, Eigen::Index>>> d;
  d.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) d.push_back({(x.row(i) - x.row(j)).norm(), {i, j}});
  auto by_value = [](const auto& l, const auto& r) { return l.first < r.first || (l.first == r.first && l.second < r.second); };
  std::sort(d.begin(), d.end(), by_value);
  MedianPairs out;
  const std::size_t n = d.size();
  if (n % 2 == 1) {
    out.median = static_cast<double>(d[n / 2].first);
    out.pairs = {d[n / 2].second};
  } else {
    out.median = 0.5 * static_cast<double>(d[n / 2 - 1].first + d[n / 2].first);
    out.pairs = {d[n / 2 - 1].second, d[n / 2].second};
  }
  return out;
}

}  // namespace detail

/// Median pairwise Euclidean distance over the m(m-1)/2 unordered pairs,
/// falling back to 1.0 when the median is zero.
template <typename Scalar>
Scalar median_heuristic_bandwidth(const Matrix<Scalar>& x) {
  if (x.rows() < 2) throw ParameterError("median_heuristic_bandwidth: need at least 2 samples");
  const auto mp = detail::median_pair(x);
  return mp.median > 0 ? static_cast<Scalar>(mp.median) : Scalar(1);
}

/// Taped median heuristic: differentiable through the pair(s) that realise the
/// median (piecewise smooth), constant 1.0 in the degenerate case.
template <typename Scalar>
Tensor<Scalar> median_heuristic_bandwidth(const Tensor<Scalar>& x) {
  if (x.rows() < 2) throw ParameterError("median_heuristic_bandwidth: need at least 2 samples");
  const auto mp = detail::median_pair(x.value());
  if (!(mp.median > 0)) return x.tape()->scalar_constant(Scalar(1));
  const auto ix = x.index();
  const auto pairs = mp.pairs;
  return x.tape()->record(
      Matrix<Scalar>::Constant(1, 1, static_cast<Scalar>(mp.median)), {ix},
      [ix, pairs](const Tape<Scalar>& t, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
        const auto& xv = t.value(ix);
        Matrix<Scalar> gx = Matrix<Scalar>::Zero(xv.rows(), xv.cols());
        const Scalar w = g(0, 0) / Scalar(pairs.size());
        for (auto [i, j] : pairs) {
          const auto diff = (xv.row(i) - xv.row(j)).eval();
          const Scalar dist = diff.norm();
          if (dist == Scalar(0)) continue;
          gx.row(i) += w * diff / dist;
          gx.row(j) -= w * diff / dist;
        }
        s.add(ix, gx);
      });
}

/// Gaussian kernel K_ij = exp(-||x_i - x_j||^2 / (2 bandwidth^2)) over the rows
/// of x. Differentiable w.r.t. both x and the (1x1) bandwidth.
template <typename Scalar>
Tensor<Scalar> gauss_kernel(const Tensor<Scalar>& x, const Tensor<Scalar>& bandwidth) {
  detail::same_tape(x, bandwidth, "gauss_kernel");
  if (!detail::is_scalar(bandwidth.value())) throw StructuralError("gauss_kernel: bandwidth must be 1x1");
  const Scalar sigma = bandwidth.scalar();
  if (!(sigma > Scalar(0))) throw ParameterError("gauss_kernel: bandwidth must be positive");
  const Matrix<Scalar> d2 = detail::squared_distances(x.value());
  Matrix<Scalar> k = (-d2.array() / (Scalar(2) * sigma * sigma)).exp().matrix();
  k.diagonal().setOnes();
  const auto ix = x.index();
  const auto ib = bandwidth.index();
  const auto io = x.tape()->size();
  return x.tape()->record(
      std::move(k), {ix, ib},
      [ix, ib, io](const Tape<Scalar>& t, const Matrix<Scalar>& g, typename Tape<Scalar>::Sink& s) {
        const auto& xv = t.value(ix);
        const auto& kv = t.value(io);
        const Scalar sg = t.value(ib)(0, 0);
        const Matrix<Scalar> a = (g + g.transpose()).cwiseProduct(kv);
        if (t.requires_grad(ix)) {
          // dx_i = sum_j a_ij (x_j - x_i) / sigma^2
          Matrix<Scalar> gx = (a * xv - a.rowwise().sum().asDiagonal() * xv) / (sg * sg);
          s.add(ix, gx);
        }
        if (t.requires_grad(ib)) {
          const Matrix<Scalar> d2v = detail::squared_distances(xv);
          const Scalar gb = (g.cwiseProduct(kv).cwiseProduct(d2v)).sum() / (sg * sg * sg);
          s.add(ib, Matrix<Scalar>::Constant(1, 1, gb));
        }
      });
}

template <typename Scalar>
Tensor<Scalar> gauss_kernel(const Tensor<Scalar>& x, Scalar bandwidth) {
  return gauss_kernel(x, x.tape()->scalar_constant(bandwidth));
}

/// Value-only Gaussian kernel.
template <typename Scalar>
Matrix<Scalar> gauss_kernel(const Matrix<Scalar>& x, Scalar bandwidth) {
  if (!(bandwidth > Scalar(0))) throw ParameterError("gauss_kernel: bandwidth must be positive");
  Matrix<Scalar> k = (-detail::squared_distances(x).array() / (Scalar(2) * bandwidth * bandwidth)).exp().matrix();
  k.diagonal().setOnes();
  return k;
}

}  // namespace sclgraph
