#include "sclgraph/synthdata.hpp"

#include <random>

namespace sclgraph {

void SpuriousSpec::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (d_stable < 0 || d_spurious < 0 || d_stable + d_spurious < 1)
    throw ParameterError("spec: need at least one feature dimension");
  if (classes < 2) throw ParameterError("spec: need at least 2 classes");
  if (n_id < 3 || n_ood1 < 1 || n_ood2 < 1) throw ParameterError("spec: node counts too small");
  if (!in_unit(intra_p) || !in_unit(inter_p)) throw ParameterError("spec: edge probabilities must be in [0, 1]");
  if (intra_p < inter_p) throw ParameterError("spec: intra_p must be at least inter_p (homophily)");
  for (double r : {rho_id, rho_ood1, rho_ood2})
    if (r < -1.0 || r > 1.0) throw ParameterError("spec: correlations must be in [-1, 1]");
  if (!(noise_sigma >= 0.0)) throw ParameterError("spec: noise_sigma must be nonnegative");
}

bool Dataset::operator==(const Dataset& o) const {
  const auto same = [](const MatrixXd& a, const MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
  };
  return name == o.name && same(graph.adjacency, o.graph.adjacency) && same(graph.features, o.graph.features) &&
         graph.labels == o.graph.labels && graph.n_classes == o.graph.n_classes && splits == o.splits &&
         spurious_columns == o.spurious_columns;
}

namespace {

MatrixXd unit_class_means(int classes, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd mu(classes, dim);
  for (int k = 0; k < classes; ++k) {
    for (int j = 0; j < dim; ++j) mu(k, j) = normal(rng);
    const double n = mu.row(k).norm();
    if (n > 0) mu.row(k) /= n;
  }
  return mu;
}

}  // namespace

GeneratedDataset generate(const SpuriousSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int n = spec.n_id + spec.n_ood1 + spec.n_ood2;
  const int d = spec.d_stable + spec.d_spurious;
  GeneratedDataset out;
  auto& ds = out.dataset;
  ds.name = "synthetic-csbm";
  auto& g = ds.graph;
  g.n_classes = spec.classes;

  std::uniform_int_distribution<int> label(0, spec.classes - 1);
  g.labels.resize(static_cast<std::size_t>(n));
  for (auto& y : g.labels) y = label(rng);

  const MatrixXd mu_stable = unit_class_means(spec.classes, spec.d_stable, rng);
  const MatrixXd mu_spur = unit_class_means(spec.classes, spec.d_spurious, rng);

  auto rho_of = [&](int v) {
    if (v < spec.n_id) return spec.rho_id;
    if (v < spec.n_id + spec.n_ood1) return spec.rho_ood1;
    return spec.rho_ood2;
  };

  g.features.resize(n, d);
  if (spec.d_spurious > 0) out.spurious_signs.resize(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    const int y = g.labels[static_cast<std::size_t>(v)];
    for (int j = 0; j < spec.d_stable; ++j) g.features(v, j) = mu_stable(y, j) + spec.noise_sigma * noise(rng);
    if (spec.d_spurious == 0) continue;
    const int s = unif(rng) < 0.5 * (1.0 + rho_of(v)) ? 1 : -1;
    out.spurious_signs[static_cast<std::size_t>(v)] = s;
    for (int j = 0; j < spec.d_spurious; ++j)
      g.features(v, spec.d_stable + j) = s * mu_spur(y, j) + spec.noise_sigma * noise(rng);
  }
  for (int j = 0; j < spec.d_spurious; ++j) ds.spurious_columns.push_back(spec.d_stable + j);

  g.adjacency = MatrixXd::Zero(n, n);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      const double p = g.labels[static_cast<std::size_t>(u)] == g.labels[static_cast<std::size_t>(v)] ? spec.intra_p
                                                                                                        : spec.inter_p;
      if (unif(rng) < p) {
        g.adjacency(u, v) = 1.0;
        g.adjacency(v, u) = 1.0;
      }
    }

  std::vector<Eigen::Index> id_nodes(static_cast<std::size_t>(spec.n_id));
  for (int v = 0; v < spec.n_id; ++v) id_nodes[static_cast<std::size_t>(v)] = v;
  ds.splits = make_split(n, id_nodes, SplitRatios{}, rng());
  for (int v = spec.n_id; v < n; ++v)
    ds.splits.tags[static_cast<std::size_t>(v)] = v < spec.n_id + spec.n_ood1 ? Split::ood1 : Split::ood2;
  return out;
}

}  // namespace sclgraph
