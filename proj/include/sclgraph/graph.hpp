#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sclgraph/diffmath.hpp"
#include "sclgraph/errors.hpp"

namespace sclgraph {

/// Attributed undirected graph. `adjacency` is a dense symmetric 0/1 matrix
/// with zero diagonal; self-loops are added only during normalization.
struct Graph {
  MatrixXd adjacency;
  MatrixXd features;  // N x d
  std::vector<int> labels;
  int n_classes = 0;

  Eigen::Index n_nodes() const { return adjacency.rows(); }
  Eigen::Index n_features() const { return features.cols(); }

  /// Throws StructuralError if any structural invariant is violated.
  void validate() const;
};

enum class Split : std::uint8_t { train, val, test_id, ood1, ood2, unassigned };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// Per-node partition. Nodes carry exactly one tag; `unassigned` marks
/// unlabeled nodes that still belong to the self-supervised pool.
struct SplitMask {
  std::vector<Split> tags;

  std::vector<bool> mask(Split s) const;
  std::vector<Eigen::Index> nodes(Split s) const;
  std::size_t count(Split s) const;

  /// Labeled training nodes (V_L).
  std::vector<Eigen::Index> labeled() const { return nodes(Split::train); }
  /// Every node outside test_id / ood1 / ood2 (V_S).
  std::vector<Eigen::Index> self_supervised_pool() const;
  /// Nodes with usable labels outside the test partitions (train and val).
  std::vector<bool> labeled_non_test() const;

  bool operator==(const SplitMask&) const = default;
};

struct SplitRatios {
  double train = 0.15;
  double val = 0.15;
  double test = 0.70;
};

/// Randomly partitions `id_nodes` into train / val / test_id under `seed`.
/// Sizes are floor(ratio * n) for train and val; the remainder goes to test_id.
/// Nodes outside `id_nodes` are left `unassigned`.
SplitMask make_split(Eigen::Index n_nodes, std::span<const Eigen::Index> id_nodes, SplitRatios ratios,
                     std::uint64_t seed);

namespace detail {

template <typename Scalar>
void check_undirected(const Matrix<Scalar>& a) {
  if (a.rows() != a.cols()) throw StructuralError("adjacency must be square");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a(i, i) != Scalar(0)) throw StructuralError("adjacency diagonal must be zero");
    for (Eigen::Index j = i + 1; j < a.cols(); ++j)
      if (a(i, j) != a(j, i)) throw StructuralError("adjacency must be symmetric (directed graphs are rejected)");
  }
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> augmented_inv_sqrt_degree(const Matrix<Scalar>& a) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d = a.rowwise().sum().array() + Scalar(1);
  return d.cwiseSqrt().cwiseInverse();
}

}  // namespace detail

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
template <typename Scalar>
Matrix<Scalar> normalize_adjacency(const Matrix<Scalar>& adjacency) {
  detail::check_undirected(adjacency);
  const Eigen::Index n = adjacency.rows();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> deg = adjacency.rowwise().sum().array() + Scalar(1);
  Matrix<Scalar> out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar a = adjacency(i, j) + (i == j ? Scalar(1) : Scalar(0));
      out(i, j) = a / std::sqrt(deg(i) * deg(j));
    }
  return out;
}

/// Same entries as normalize_adjacency (bitwise), stored compressed.
template <typename Scalar>
SparseMatrix<Scalar> normalize_adjacency_sparse(const Matrix<Scalar>& adjacency) {
  detail::check_undirected(adjacency);
  const Eigen::Index n = adjacency.rows();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> deg = adjacency.rowwise().sum().array() + Scalar(1);
  std::vector<Eigen::Triplet<Scalar>> trip;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const Scalar a = adjacency(i, j) + (i == j ? Scalar(1) : Scalar(0));
      if (a != Scalar(0)) trip.emplace_back(i, j, a / std::sqrt(deg(i) * deg(j)));
    }
  SparseMatrix<Scalar> out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

/// Graph plus the derived quantities every forward pass needs: the
/// normalized propagation operator, its diagonal, receptive-field sizes and
/// the once-propagated features.
struct PreparedGraph {
  const Graph* graph = nullptr;
  SparseMatrix<double> norm_adj;
  Eigen::VectorXd self_weight;      // diagonal of the normalized operator
  Eigen::VectorXd receptive_field;  // |G_v| = degree + 1
  MatrixXd propagated_features;     // norm_adj * X

  explicit PreparedGraph(const Graph& g);

  Eigen::Index n_nodes() const { return graph->n_nodes(); }
  int n_classes() const { return graph->n_classes; }
};

}  // namespace sclgraph
