#include "sclgraph/bilevel.hpp"

#include <limits>

namespace sclgraph {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalDivergence(std::string(what) + " became non-finite");
}

void require_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericalDivergence(std::string(what) + " contains non-finite entries");
}

// 0.5 * ||W - W * sigmoid(g)||_F^2 for one matrix
Tensord proximal(const Tensord& w, const Tensord& gate) {
  auto gap = sub(w, apply_gate(w, gate));
  return scale(sum(mul_elem(gap, gap)), 0.5);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(eta_theta >= 0) || !(eta_theta_a >= 0)) throw ParameterError("learning rates must be nonnegative");
  if (beta < 0 || gamma < 0 || lambda < 0) throw ParameterError("beta, gamma and lambda must be nonnegative");
  if (inner_steps_per_outer < 1 || max_outer_steps < 1) throw ParameterError("step counts must be at least 1");
  if (patience < 0) throw ParameterError("patience must be nonnegative");
  if (hsic_batch_size < 2) throw ParameterError("hsic batch size must be at least 2");
  if (hidden_dim < 1) throw ParameterError("hidden_dim must be positive");
}

std::string to_string(TrainMode m) { return m == TrainMode::bilevel ? "bilevel" : "single_level"; }

std::vector<Eigen::Index> sample_batch(std::span<const Eigen::Index> pool, int m, std::mt19937_64& rng) {
  std::vector<Eigen::Index> items(pool.begin(), pool.end());
  const std::size_t take = std::min(items.size(), static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, items.size() - 1);
    std::swap(items[i], items[pick(rng)]);
  }
  items.resize(take);
  return items;
}

double evaluate_accuracy(const PreparedGraph& g, const GcnParams& effective, std::span<const Eigen::Index> nodes) {
  const auto out = forward(g, effective);
  return accuracy(predict(out.scores), g.graph->labels, nodes);
}

InnerStep inner_step(const GcnParams& params, const LearnerParams& learner, const TrainingData& data,
                     const TrainConfig& config) {
  const auto& g = data.graph;
  Taped tape;
  auto w1 = tape.variable(params.w1);
  auto w2 = tape.variable(params.w2);
  auto out = forward(tape, g, w1, w2);
  auto loss = cross_entropy(out.logits, g.graph->labels, data.splits.mask(Split::train));
  if (config.gamma != 0.0) {
    auto reg = add(proximal(w1, tape.constant(learner.gate_w1)), proximal(w2, tape.constant(learner.gate_w2)));
    loss = add(loss, scale(reg, config.gamma));
  }
  require_finite(loss.scalar(), "inner training loss");
  const auto grads = tape.backward(loss);
  InnerStep step{params, loss.scalar()};
  if (config.eta_theta != 0.0) {
    step.params.w1 -= config.eta_theta * grads[w1];
    step.params.w2 -= config.eta_theta * grads[w2];
  }
  require_finite(step.params.w1, "w1");
  require_finite(step.params.w2, "w2");
  return step;
}

OuterStep outer_step(const GcnParams& params, const LearnerParams& learner, const TrainingData& data,
                     const TrainConfig& config, std::mt19937_64& rng) {
  const auto& g = data.graph;
  Taped tape;
  // theta is recorded as constants: no gradient reaches it
  auto g1 = tape.variable(learner.gate_w1);
  auto g2 = tape.variable(learner.gate_w2);
  auto cw = tape.variable(MatrixXd(learner.channel_weights));
  auto w1 = apply_gate(tape.constant(params.w1), g1);
  auto w2 = apply_gate(tape.constant(params.w2), g2);
  auto out = forward(tape, g, w1, w2);
  auto objective = cross_entropy(out.logits, g.graph->labels, data.splits.labeled_non_test());

  OuterStep step{learner, 0.0, kNaN, kNaN};
  if (config.beta != 0.0) {
    const auto pool = data.splits.self_supervised_pool();
    const auto batch = sample_batch(pool, config.hsic_batch_size, rng);
    auto scl = scl_loss(tape, g, out, w2, cw, batch, config.filter);
    objective = add(objective, scale(scl.value, config.beta));
    step.scl_loss = scl.value.scalar();
    step.hsic = scl.hsic.scalar();
  }
  step.objective = objective.scalar();
  require_finite(step.objective, "outer objective");
  const auto grads = tape.backward(objective);
  if (config.eta_theta_a != 0.0) {
    step.learner.gate_w1 -= config.eta_theta_a * grads[g1];
    step.learner.gate_w2 -= config.eta_theta_a * grads[g2];
    step.learner.channel_weights -= config.eta_theta_a * grads[cw].col(0);
  }
  require_finite(step.learner.gate_w1, "gate_w1");
  require_finite(step.learner.gate_w2, "gate_w2");
  return step;
}

namespace {

struct JointStep {
  GcnParams params;
  LearnerParams learner;
  double loss = 0;
  double scl_loss = kNaN;
  double hsic = kNaN;
};

// Single-level baseline: cross-entropy over V_L with gated weights plus
// lambda * margin loss, one gradient step over theta and theta_a together.
JointStep joint_step(const GcnParams& params, const LearnerParams& learner, const TrainingData& data,
                     const TrainConfig& config, std::mt19937_64& rng) {
  const auto& g = data.graph;
  Taped tape;
  auto w1 = tape.variable(params.w1);
  auto w2 = tape.variable(params.w2);
  auto g1 = tape.variable(learner.gate_w1);
  auto g2 = tape.variable(learner.gate_w2);
  auto cw = tape.variable(MatrixXd(learner.channel_weights));
  auto gw1 = apply_gate(w1, g1);
  auto gw2 = apply_gate(w2, g2);
  auto out = forward(tape, g, gw1, gw2);
  auto loss = cross_entropy(out.logits, g.graph->labels, data.splits.mask(Split::train));
  JointStep step{params, learner};
  if (config.lambda != 0.0) {
    const auto pool = data.splits.self_supervised_pool();
    const auto batch = sample_batch(pool, config.hsic_batch_size, rng);
    auto scl = scl_loss(tape, g, out, gw2, cw, batch, config.filter);
    loss = add(loss, scale(scl.value, config.lambda));
    step.scl_loss = scl.value.scalar();
    step.hsic = scl.hsic.scalar();
  }
  step.loss = loss.scalar();
  require_finite(step.loss, "joint loss");
  const auto grads = tape.backward(loss);
  step.params.w1 -= config.eta_theta * grads[w1];
  step.params.w2 -= config.eta_theta * grads[w2];
  step.learner.gate_w1 -= config.eta_theta_a * grads[g1];
  step.learner.gate_w2 -= config.eta_theta_a * grads[g2];
  step.learner.channel_weights -= config.eta_theta_a * grads[cw].col(0);
  require_finite(step.params.w1, "w1");
  require_finite(step.params.w2, "w2");
  return step;
}

}  // namespace

TrainTrace train(const TrainingData& data, const TrainConfig& config, TrainMode mode) {
  config.validate();
  const auto& g = data.graph;
  if (static_cast<Eigen::Index>(data.splits.tags.size()) != g.n_nodes())
    throw StructuralError("train: split mask length does not match the graph");
  if (data.splits.count(Split::train) == 0) throw ParameterError("train: no labeled training nodes");
  const auto pool = data.splits.self_supervised_pool();
  const auto val_nodes = data.splits.nodes(Split::val);
  const auto& monitor = val_nodes.empty() ? data.splits.nodes(Split::train) : val_nodes;

  std::mt19937_64 rng(config.seed);
  GcnParams params = init_params(g.graph->n_features(), config.hidden_dim, g.n_classes(), rng);
  // importance is invariant to positive rescaling of the channel weights;
  // unit norm keeps the first learner steps well scaled
  Eigen::VectorXd cw = channel_weights(g, params, pool);
  if (cw.norm() > 0) cw.normalize();
  LearnerParams learner = init_learner(params, std::move(cw), config.gate_init);

  TrainTrace trace;
  trace.best_val_acc = -1.0;
  int step_index = 0;
  auto val_acc = [&] { return evaluate_accuracy(g, apply_gates(params, learner), monitor); };

  for (int round = 0; round < config.max_outer_steps; ++round) {
    if (mode == TrainMode::bilevel) {
      for (int i = 0; i < config.inner_steps_per_outer; ++i) {
        auto s = inner_step(params, learner, data, config);
        params = std::move(s.params);
        trace.steps.push_back({step_index++, "inner", s.train_loss, val_acc(), kNaN, kNaN, config.beta});
      }
      auto o = outer_step(params, learner, data, config, rng);
      learner = std::move(o.learner);
      trace.steps.push_back({step_index++, "outer", o.objective, val_acc(), o.scl_loss, o.hsic, config.beta});
    } else {
      for (int i = 0; i <= config.inner_steps_per_outer; ++i) {
        auto s = joint_step(params, learner, data, config, rng);
        params = std::move(s.params);
        learner = std::move(s.learner);
        trace.steps.push_back({step_index++, "outer", s.loss, val_acc(), s.scl_loss, s.hsic, config.lambda});
      }
    }
    trace.rounds = round + 1;
    const double acc = trace.steps.back().val_acc;
    if (acc > trace.best_val_acc) {
      trace.best_val_acc = acc;
      trace.best_round = round;
      trace.best_params = params;
      trace.best_learner = learner;
    }
    if (round - trace.best_round >= config.patience) break;
  }
  trace.final_params = params;
  trace.final_learner = learner;
  trace.effective = apply_gates(trace.best_params, trace.best_learner);
  return trace;
}

}  // namespace sclgraph
