#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sclgraph/diffmath.hpp"
#include "sclgraph/graph.hpp"

namespace sclgraph {

/// Two-layer GCN weights, no biases: w1 is d x h, w2 is h x K.
struct GcnParams {
  MatrixXd w1;
  MatrixXd w2;

  Eigen::Index hidden_dim() const { return w1.cols(); }
  bool operator==(const GcnParams&) const = default;
};

/// Glorot-uniform init on [-s, s], s = sqrt(6 / (fan_in + fan_out)).
GcnParams init_params(Eigen::Index n_features, Eigen::Index hidden_dim, int n_classes, std::mt19937_64& rng);

template <typename T>
struct GcnOutputs {
  T hidden;  // N x h, ReLU(norm_adj X w1): the per-node representation Z
  T logits;  // N x K, norm_adj hidden w2
  T scores;  // N x K, row softmax of logits
};

/// Records the full-graph forward pass on `tape`.
GcnOutputs<Tensord> forward(Taped& tape, const PreparedGraph& g, const Tensord& w1, const Tensord& w2);

/// Value-only forward.
GcnOutputs<MatrixXd> forward(const PreparedGraph& g, const GcnParams& params);

/// Mean negative log-likelihood over nodes with mask[i] set.
Tensord cross_entropy(const Tensord& logits, std::span<const int> labels, const std::vector<bool>& mask);
double cross_entropy(const MatrixXd& logits, std::span<const int> labels, const std::vector<bool>& mask);

/// Row-wise argmax, ties to the lowest class index.
std::vector<int> predict(const MatrixXd& scores);

/// Fraction of nodes in `nodes` whose prediction matches the label.
double accuracy(std::span<const int> predicted, std::span<const int> labels, std::span<const Eigen::Index> nodes);

// Checkpoints: JSON array of {"name", "shape": [r, c], "values": [row-major]}.
struct NamedMatrix {
  std::string name;
  MatrixXd value;
};
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedMatrix>& tensors);
std::vector<NamedMatrix> read_checkpoint(const std::filesystem::path& path);
const MatrixXd& find_tensor(const std::vector<NamedMatrix>& tensors, const std::string& name);

}  // namespace sclgraph
