#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "sclgraph/graph.hpp"
#include "sclgraph/synthdata.hpp"

namespace sclgraph::testing {

/// Central finite differences of a scalar function of one matrix.
inline MatrixXd numeric_gradient(const std::function<double(const MatrixXd&)>& f, const MatrixXd& x,
                                 double step = 1e-6) {
  MatrixXd grad(x.rows(), x.cols());
  MatrixXd probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + step;
      const double up = f(probe);
      probe(i, j) = orig - step;
      const double down = f(probe);
      probe(i, j) = orig;
      grad(i, j) = (up - down) / (2 * step);
    }
  return grad;
}

/// ||a - b|| / max(||a||, ||b||, 1e-5). Central differences at step 1e-6
/// resolve nothing finer than roundoff, about eps |f| / step (2e-10 for
/// |f| ~ 1), so vanishing gradients are compared in absolute terms.
inline double relative_error(const MatrixXd& a, const MatrixXd& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-5});
  return (a - b).norm() / scale;
}

inline MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline MatrixXd random_adjacency(Eigen::Index n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(p);
  MatrixXd a = MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (edge(rng)) a(i, j) = a(j, i) = 1.0;
  return a;
}

inline Graph random_graph(Eigen::Index n, Eigen::Index d, int k, std::uint64_t seed, double p = 0.3) {
  std::mt19937_64 rng(seed);
  Graph g;
  g.adjacency = random_adjacency(n, p, rng);
  g.features = random_matrix(n, d, rng);
  std::uniform_int_distribution<int> lab(0, k - 1);
  for (Eigen::Index i = 0; i < n; ++i) g.labels.push_back(lab(rng));
  g.n_classes = k;
  return g;
}

/// A scaled-down default recipe that trains in well under a second.
inline SpuriousSpec small_spec() {
  SpuriousSpec s;
  s.n_id = 200;
  s.n_ood1 = 80;
  s.n_ood2 = 80;
  s.d_stable = 6;
  s.d_spurious = 6;
  s.classes = 3;
  s.intra_p = 0.05;
  s.inter_p = 0.005;
  return s;
}

}  // namespace sclgraph::testing
