#include "sclgraph/graph.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace sclgraph {

void Graph::validate() const {
  detail::check_undirected(adjacency);
  if (features.rows() != adjacency.rows())
    throw StructuralError("feature rows (" + std::to_string(features.rows()) + ") != node count (" +
                          std::to_string(adjacency.rows()) + ")");
  if (static_cast<Eigen::Index>(labels.size()) != adjacency.rows())
    throw StructuralError("label count does not match node count");
  if (n_classes < 1) throw StructuralError("n_classes must be positive");
  for (int y : labels)
    if (y < 0 || y >= n_classes) throw StructuralError("label " + std::to_string(y) + " outside [0, K)");
  if (!features.allFinite()) throw StructuralError("features contain non-finite values");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test_id: return "test_id";
    case Split::ood1: return "ood1";
    case Split::ood2: return "ood2";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test_id") return Split::test_id;
  if (s == "ood1") return Split::ood1;
  if (s == "ood2") return Split::ood2;
  if (s == "unassigned") return Split::unassigned;
  throw ParameterError("unknown split tag '" + s + "'");
}

std::vector<bool> SplitMask::mask(Split s) const {
  std::vector<bool> m(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) m[i] = tags[i] == s;
  return m;
}

std::vector<Eigen::Index> SplitMask::nodes(Split s) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < tags.size(); ++i)
    if (tags[i] == s) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

std::size_t SplitMask::count(Split s) const { return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), s)); }

std::vector<Eigen::Index> SplitMask::self_supervised_pool() const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto t = tags[i];
    if (t != Split::test_id && t != Split::ood1 && t != Split::ood2) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<bool> SplitMask::labeled_non_test() const {
  std::vector<bool> m(tags.size());
  for (std::size_t i = 0; i < tags.size(); ++i) m[i] = tags[i] == Split::train || tags[i] == Split::val;
  return m;
}

SplitMask make_split(Eigen::Index n_nodes, std::span<const Eigen::Index> id_nodes, SplitRatios ratios,
                     std::uint64_t seed) {
  if (id_nodes.size() < 3) throw ParameterError("make_split: need at least 3 in-distribution nodes");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ParameterError("make_split: ratios must be nonnegative and sum to 1");

  SplitMask out;
  out.tags.assign(static_cast<std::size_t>(n_nodes), Split::unassigned);
  std::vector<Eigen::Index> order(id_nodes.begin(), id_nodes.end());
  for (auto v : order)
    if (v < 0 || v >= n_nodes) throw ParameterError("make_split: node id out of range");

  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * n + 1e-9));
  const auto n_val = std::min(order.size() - n_train, static_cast<std::size_t>(std::floor(ratios.val * n + 1e-9)));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto tag = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test_id);
    out.tags[static_cast<std::size_t>(order[i])] = tag;
  }
  return out;
}

PreparedGraph::PreparedGraph(const Graph& g) : graph(&g) {
  g.validate();
  norm_adj = normalize_adjacency_sparse<double>(g.adjacency);
  norm_adj.makeCompressed();
  const Eigen::Index n = g.n_nodes();
  self_weight.resize(n);
  receptive_field.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    self_weight(i) = norm_adj.coeff(i, i);
    receptive_field(i) = g.adjacency.row(i).sum() + 1.0;
  }
  propagated_features = norm_adj * g.features;
}

}  // namespace sclgraph
