#pragma once

// Biased m-sample HSIC estimator and its CKA-style [0, 1] normalization,
// in both taped (differentiable) and value-only forms.

#include <algorithm>
#include <cmath>

#include "sclgraph/diffmath.hpp"

namespace sclgraph {

/// P = I - (1/m) 1 1^T.
template <typename Scalar>
Matrix<Scalar> centering_matrix(Eigen::Index m) {
  if (m < 1) throw ParameterError("centering_matrix: m must be at least 1");
  return Matrix<Scalar>::Identity(m, m) - Matrix<Scalar>::Constant(m, m, Scalar(1) / Scalar(m));
}

/// (m-1)^-2 tr(U P V P).
template <typename Scalar>
Scalar hsic0(const Matrix<Scalar>& u, const Matrix<Scalar>& v) {
  if (u.rows() != u.cols() || v.rows() != v.cols() || u.rows() != v.rows())
    throw StructuralError("hsic0: kernels must be square and of equal size");
  const Eigen::Index m = u.rows();
  if (m < 2) throw ParameterError("hsic0: need at least 2 samples");
  const Matrix<Scalar> p = centering_matrix<Scalar>(m);
  const Scalar denom = Scalar(m - 1) * Scalar(m - 1);
  return (u * p * v * p).trace() / denom;
}

template <typename Scalar>
Tensor<Scalar> hsic0(const Tensor<Scalar>& u, const Tensor<Scalar>& v) {
  if (u.rows() != u.cols() || v.rows() != v.cols() || u.rows() != v.rows())
    throw StructuralError("hsic0: kernels must be square and of equal size");
  const Eigen::Index m = u.rows();
  if (m < 2) throw ParameterError("hsic0: need at least 2 samples");
  auto& tape = *u.tape();
  auto p = tape.constant(centering_matrix<Scalar>(m));
  auto prod = matmul(matmul(matmul(u, p), v), p);
  return scale(trace(prod), Scalar(1) / (Scalar(m - 1) * Scalar(m - 1)));
}

/// Self-HSIC below this is treated as a degenerate (constant) sample.
inline constexpr double kHsicSelfFloor = 1e-12;

template <typename Scalar>
struct HsicKernels {
  Tensor<Scalar> score_kernel;
  Tensor<Scalar> repr_kernel;
};

/// Gaussian kernels on each side with independent median-heuristic bandwidths.
template <typename Scalar>
HsicKernels<Scalar> hsic_kernels(const Tensor<Scalar>& score_rows, const Tensor<Scalar>& repr_rows) {
  if (score_rows.rows() != repr_rows.rows()) throw StructuralError("hsic: score and representation rows differ");
  if (score_rows.rows() < 2) throw ParameterError("hsic: need at least 2 samples");
  auto ks = gauss_kernel(score_rows, median_heuristic_bandwidth(score_rows));
  auto kr = gauss_kernel(repr_rows, median_heuristic_bandwidth(repr_rows));
  return {ks, kr};
}

/// HSIC0(U, V) / sqrt(HSIC0(U, U) HSIC0(V, V)) clamped into [0, 1]; 0 when
/// either self term is below kHsicSelfFloor.
template <typename Scalar>
Tensor<Scalar> hsic_normalized(const Tensor<Scalar>& score_rows, const Tensor<Scalar>& repr_rows) {
  auto [u, v] = hsic_kernels(score_rows, repr_rows);
  auto uu = hsic0(u, u);
  auto vv = hsic0(v, v);
  auto& tape = *u.tape();
  if (uu.scalar() < Scalar(kHsicSelfFloor) || vv.scalar() < Scalar(kHsicSelfFloor))
    return tape.scalar_constant(Scalar(0));
  auto uv = hsic0(u, v);
  return clamp(div(uv, sqrt(mul_elem(uu, vv))), Scalar(0), Scalar(1));
}

template <typename Scalar>
Scalar hsic_normalized(const Matrix<Scalar>& score_rows, const Matrix<Scalar>& repr_rows) {
  Tape<Scalar> tape;
  return hsic_normalized(tape.constant(score_rows), tape.constant(repr_rows)).scalar();
}

/// Per-sample share of the normalized statistic: row i of the Frobenius
/// inner product <PUP, PVP>, divided by the CKA denominator, then min-max
/// scaled over the batch into [0, 1] (all 0.5 when flat). Used by the
/// correlation-filter ablations.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> hsic_sample_shares(const Matrix<Scalar>& score_rows,
                                                           const Matrix<Scalar>& repr_rows) {
  if (score_rows.rows() != repr_rows.rows()) throw StructuralError("hsic: score and representation rows differ");
  const Eigen::Index m = score_rows.rows();
  if (m < 2) throw ParameterError("hsic: need at least 2 samples");
  const Matrix<Scalar> u = gauss_kernel(score_rows, median_heuristic_bandwidth(score_rows));
  const Matrix<Scalar> v = gauss_kernel(repr_rows, median_heuristic_bandwidth(repr_rows));
  const Matrix<Scalar> p = centering_matrix<Scalar>(m);
  const Matrix<Scalar> cu = p * u * p;
  const Matrix<Scalar> cv = p * v * p;
  // same self-term guard as hsic_normalized: a flat side carries no signal
  const double scale = static_cast<double>((m - 1) * (m - 1)) * kHsicSelfFloor;
  if (static_cast<double>(cu.squaredNorm()) < scale || static_cast<double>(cv.squaredNorm()) < scale)
    return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(m, Scalar(0.5));
  const Scalar norm = std::sqrt(cu.squaredNorm() * cv.squaredNorm());
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> share = cu.cwiseProduct(cv).rowwise().sum() / norm;
  const Scalar lo = share.minCoeff();
  const Scalar hi = share.maxCoeff();
  if (!(hi > lo)) return Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Constant(m, Scalar(0.5));
  return (share.array() - lo) / (hi - lo);
}

}  // namespace sclgraph
