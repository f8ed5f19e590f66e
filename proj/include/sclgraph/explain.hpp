#pragma once

#include <span>

#include "sclgraph/backbone.hpp"

namespace sclgraph {

/// Grad-CAM-style importance over a node batch.
struct ImportanceReport {
  Eigen::VectorXd raw;         // i_v before scaling
  Eigen::VectorXd normalized;  // min-max scaled to [0, 1]; all 0.5 when flat
  Eigen::VectorXd channel_weights;
};

/// y_{k,v} = w_k / |G_v| * ReLU(logit_{v,k}) for every class k.
Eigen::VectorXd class_score(const PreparedGraph& g, const GcnParams& params, const Eigen::VectorXd& channel_weights,
                            Eigen::Index node);

/// Pooled gradients: w_k is the batch mean, over nodes predicted as class k,
/// of the representation-averaged partial of that node's predicted logit
/// w.r.t. its own representation row. Computed with one reverse sweep.
Eigen::VectorXd channel_weights(const PreparedGraph& g, const GcnParams& params, std::span<const Eigen::Index> batch);

ImportanceReport importance(const PreparedGraph& g, const GcnParams& params, const Eigen::VectorXd& channel_weights,
                            std::span<const Eigen::Index> batch);

struct ImportanceTensors {
  Tensord raw;         // m x 1
  Tensord normalized;  // m x 1
};

/// Taped importance. Since logit_v depends on Z_v only through
/// self_weight(v) * Z_v * w2, the Jacobian row of y_{k,v} w.r.t. Z_v is
/// (w_k / |G_v|) [logit_{v,k} > 0] self_weight(v) w2[:, k]; averaging it over
/// the h representation dims and the K classes gives i_v. Differentiable in
/// `w2` and `channel_weights` (K x 1).
ImportanceTensors importance(Taped& tape, const PreparedGraph& g, const Tensord& logits, const Tensord& w2,
                             const Tensord& channel_weights, std::span<const Eigen::Index> batch);

}  // namespace sclgraph
