#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sclgraph/graph.hpp"

namespace sclgraph {

/// Contextual-SBM recipe with a planted sign-flip spurious channel.
struct SpuriousSpec {
  int d_stable = 16;
  int d_spurious = 16;
  double rho_id = 0.95;
  double rho_ood1 = 0.0;
  double rho_ood2 = -0.95;
  double noise_sigma = 1.0;
  int classes = 4;
  double intra_p = 0.02;
  double inter_p = 0.002;
  int n_id = 1000;
  int n_ood1 = 500;
  int n_ood2 = 500;

  void validate() const;
};

/// A graph, its partition and the ground-truth planted columns.
struct Dataset {
  std::string name;
  Graph graph;
  SplitMask splits;
  std::vector<int> spurious_columns;

  bool operator==(const Dataset& o) const;
};

struct GeneratedDataset {
  Dataset dataset;
  std::vector<int> spurious_signs;  // per node s in {-1, +1}; empty when d_spurious == 0
};

/// Nodes [0, n_id) are in-distribution, then n_ood1 OOD1 nodes, then n_ood2
/// OOD2 nodes. Feature columns [0, d_stable) are stable, the rest spurious.
GeneratedDataset generate(const SpuriousSpec& spec, std::uint64_t seed);

/// Directory format: meta.json, edges.tsv, nodes.tsv.
void save(const Dataset& data, const std::filesystem::path& dir);
Dataset load(const std::filesystem::path& dir);

}  // namespace sclgraph
