#include "sclgraph/explain.hpp"

namespace sclgraph {

namespace {

void check_batch(const PreparedGraph& g, std::span<const Eigen::Index> batch) {
  if (batch.empty()) throw ParameterError("importance: batch is empty");
  for (auto v : batch)
    if (v < 0 || v >= g.n_nodes()) throw StructuralError("importance: node id out of range");
}

}  // namespace

Eigen::VectorXd class_score(const PreparedGraph& g, const GcnParams& params, const Eigen::VectorXd& channel_weights,
                            Eigen::Index node) {
  if (node < 0 || node >= g.n_nodes()) throw StructuralError("class_score: node id out of range");
  if (channel_weights.size() != g.n_classes()) throw StructuralError("class_score: need one channel weight per class");
  const auto out = forward(g, params);
  const Eigen::VectorXd act = out.logits.row(node).transpose().cwiseMax(0.0);
  return channel_weights.cwiseProduct(act) / g.receptive_field(node);
}

Eigen::VectorXd channel_weights(const PreparedGraph& g, const GcnParams& params, std::span<const Eigen::Index> batch) {
  check_batch(g, batch);
  const auto out = forward(g, params);
  const auto pred = predict(out.scores);
  const auto m = static_cast<Eigen::Index>(batch.size());

  Taped tape;
  MatrixXd rows(m, out.hidden.cols());
  MatrixXd self(m, g.n_classes());
  MatrixXd pick = MatrixXd::Zero(m, g.n_classes());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto v = batch[static_cast<std::size_t>(i)];
    rows.row(i) = out.hidden.row(v);
    self.row(i).setConstant(g.self_weight(v));
    pick(i, pred[static_cast<std::size_t>(v)]) = 1.0;
  }
  // only the self path of each batch node's logit depends on its leaf row
  auto z = tape.variable(rows);
  auto self_logits = mul_elem(tape.constant(self), matmul(z, tape.constant(params.w2)));
  auto root = sum(mul_elem(self_logits, tape.constant(pick)));
  const MatrixXd grad = tape.backward(root)[z];

  Eigen::VectorXd w = Eigen::VectorXd::Zero(g.n_classes());
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto v = batch[static_cast<std::size_t>(i)];
    w(pred[static_cast<std::size_t>(v)]) += grad.row(i).mean();
  }
  return w / static_cast<double>(m);
}

ImportanceTensors importance(Taped& tape, const PreparedGraph& g, const Tensord& logits, const Tensord& w2,
                             const Tensord& channel_weights, std::span<const Eigen::Index> batch) {
  check_batch(g, batch);
  const int k = g.n_classes();
  if (channel_weights.rows() != k || channel_weights.cols() != 1)
    throw StructuralError("importance: channel weights must be K x 1");
  const auto m = static_cast<Eigen::Index>(batch.size());
  const auto h = w2.rows();

  MatrixXd active(m, k);
  MatrixXd scale_v(m, 1);
  const auto& lv = logits.value();
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto v = batch[static_cast<std::size_t>(i)];
    for (int c = 0; c < k; ++c) active(i, c) = lv(v, c) > 0.0 ? 1.0 : 0.0;
    scale_v(i, 0) = g.self_weight(v) / g.receptive_field(v);
  }
  auto col_mean = scale(matmul(tape.constant(MatrixXd::Ones(1, h)), w2), 1.0 / static_cast<double>(h));
  auto weighted = mul_elem(transpose(channel_weights), col_mean);  // 1 x K
  auto per_node = matmul(tape.constant(active), transpose(weighted));  // m x 1
  auto raw = scale(mul_elem(per_node, tape.constant(scale_v)), 1.0 / static_cast<double>(k));
  return {raw, minmax_normalize(raw)};
}

ImportanceReport importance(const PreparedGraph& g, const GcnParams& params, const Eigen::VectorXd& channel_weights,
                            std::span<const Eigen::Index> batch) {
  check_batch(g, batch);
  const auto out = forward(g, params);
  Taped tape;
  auto t = importance(tape, g, tape.constant(out.logits), tape.constant(params.w2),
                      tape.constant(MatrixXd(channel_weights)), batch);
  return {t.raw.value().col(0), t.normalized.value().col(0), channel_weights};
}

}  // namespace sclgraph
