#include "sclgraph/scl.hpp"

#include "sclgraph/hsic.hpp"

namespace sclgraph {

LearnerParams init_learner(const GcnParams& params, Eigen::VectorXd channel_weights, double gate_logit) {
  LearnerParams l;
  l.channel_weights = std::move(channel_weights);
  l.gate_w1 = MatrixXd::Constant(params.w1.rows(), params.w1.cols(), gate_logit);
  l.gate_w2 = MatrixXd::Constant(params.w2.rows(), params.w2.cols(), gate_logit);
  return l;
}

Tensord apply_gate(const Tensord& weight, const Tensord& gate_logits) {
  return mul_elem(weight, sigmoid(gate_logits));
}

GcnParams apply_gates(const GcnParams& params, const LearnerParams& learner) {
  if (params.w1.rows() != learner.gate_w1.rows() || params.w1.cols() != learner.gate_w1.cols() ||
      params.w2.rows() != learner.gate_w2.rows() || params.w2.cols() != learner.gate_w2.cols())
    throw StructuralError("apply_gates: gate shapes do not mirror the backbone weights");
  Taped tape;
  GcnParams out;
  out.w1 = apply_gate(tape.constant(params.w1), tape.constant(learner.gate_w1)).value();
  out.w2 = apply_gate(tape.constant(params.w2), tape.constant(learner.gate_w2)).value();
  return out;
}

std::string to_string(FilterMode m) {
  switch (m) {
    case FilterMode::none: return "none";
    case FilterMode::drop_irrelevant: return "woic";
    case FilterMode::drop_significant: return "wosc";
  }
  return "none";
}

std::vector<bool> correlation_filter(const Eigen::VectorXd& values, double threshold, FilterMode mode) {
  std::vector<bool> keep(static_cast<std::size_t>(values.size()), true);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (mode == FilterMode::drop_irrelevant && values(i) > threshold) keep[static_cast<std::size_t>(i)] = false;
    if (mode == FilterMode::drop_significant && values(i) < threshold) keep[static_cast<std::size_t>(i)] = false;
  }
  return keep;
}

SclLossTensors scl_loss(Taped& tape, const PreparedGraph& g, const GcnOutputs<Tensord>& outputs, const Tensord& w2,
                        const Tensord& channel_weights, std::span<const Eigen::Index> batch, FilterMode filter) {
  if (batch.size() < 2) throw ParameterError("scl_loss: batch needs at least 2 nodes");
  auto score_rows = select_rows(outputs.scores, batch);
  auto repr_rows = select_rows(outputs.hidden, batch);
  auto hsic = hsic_normalized(score_rows, repr_rows);
  auto imp = importance(tape, g, outputs.logits, w2, channel_weights, batch);

  std::vector<bool> kept(batch.size(), true);
  if (filter != FilterMode::none)
    kept = correlation_filter(hsic_sample_shares(score_rows.value(), repr_rows.value()), kCorrelationThreshold, filter);
  MatrixXd keep_mask(static_cast<Eigen::Index>(batch.size()), 1);
  for (std::size_t i = 0; i < kept.size(); ++i) keep_mask(static_cast<Eigen::Index>(i), 0) = kept[i] ? 1.0 : 0.0;

  auto per_node = mul_elem(hinge(sub(hsic, imp.normalized)), tape.constant(keep_mask));
  return {sum(per_node), per_node, hsic, imp.normalized, std::move(kept)};
}

SclBatchLoss scl_loss(const PreparedGraph& g, const GcnParams& params, const LearnerParams& learner,
                      std::span<const Eigen::Index> batch, FilterMode filter) {
  Taped tape;
  auto w1 = apply_gate(tape.constant(params.w1), tape.constant(learner.gate_w1));
  auto w2 = apply_gate(tape.constant(params.w2), tape.constant(learner.gate_w2));
  auto out = forward(tape, g, w1, w2);
  auto t = scl_loss(tape, g, out, w2, tape.constant(MatrixXd(learner.channel_weights)), batch, filter);
  return {t.value.scalar(), t.per_node.value().col(0), t.hsic.scalar(), t.importance.value().col(0)};
}

}  // namespace sclgraph
