#pragma once

#include <span>
#include <string>
#include <vector>

#include "sclgraph/backbone.hpp"
#include "sclgraph/explain.hpp"

namespace sclgraph {

/// Parameters of the spurious-correlation learner: trainable Grad-CAM
/// channel weights plus one gate-logit matrix per backbone weight matrix.
struct LearnerParams {
  Eigen::VectorXd channel_weights;  // K
  MatrixXd gate_w1;                 // same shape as GcnParams::w1
  MatrixXd gate_w2;                 // same shape as GcnParams::w2

  bool operator==(const LearnerParams&) const = default;
};

LearnerParams init_learner(const GcnParams& params, Eigen::VectorXd channel_weights, double gate_logit);

/// W' = W * sigmoid(gate), elementwise per matrix.
GcnParams apply_gates(const GcnParams& params, const LearnerParams& learner);
Tensord apply_gate(const Tensord& weight, const Tensord& gate_logits);

enum class FilterMode { none, drop_irrelevant, drop_significant };

std::string to_string(FilterMode m);

/// Keep-mask over `values` (each in [0, 1]). drop_irrelevant removes entries
/// strictly above `threshold`, drop_significant those strictly below.
std::vector<bool> correlation_filter(const Eigen::VectorXd& values, double threshold, FilterMode mode);

inline constexpr double kCorrelationThreshold = 0.5;

struct SclBatchLoss {
  double value = 0;
  Eigen::VectorXd per_node_terms;
  double hsic_term = 0;
  Eigen::VectorXd importance_terms;
};

struct SclLossTensors {
  Tensord value;       // 1 x 1, sum of per_node
  Tensord per_node;    // m x 1, max(0, hsic - importance) on kept nodes, 0 elsewhere
  Tensord hsic;        // 1 x 1
  Tensord importance;  // m x 1, normalized
  std::vector<bool> kept;
};

/// Margin loss on a batch drawn from the self-supervised pool. `outputs` and
/// `w2` must come from a forward pass with the gated weights.
SclLossTensors scl_loss(Taped& tape, const PreparedGraph& g, const GcnOutputs<Tensord>& outputs, const Tensord& w2,
                        const Tensord& channel_weights, std::span<const Eigen::Index> batch,
                        FilterMode filter = FilterMode::none);

SclBatchLoss scl_loss(const PreparedGraph& g, const GcnParams& params, const LearnerParams& learner,
                      std::span<const Eigen::Index> batch, FilterMode filter = FilterMode::none);

}  // namespace sclgraph
