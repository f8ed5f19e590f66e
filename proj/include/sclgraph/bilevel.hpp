#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sclgraph/backbone.hpp"
#include "sclgraph/scl.hpp"

namespace sclgraph {

struct TrainConfig {
  double beta = 1.0;         // weight of the margin loss in the outer objective
  double gamma = 0.1;        // weight of the proximal tie R(theta, theta_a) in the inner objective
  double lambda = 1.0;       // margin-loss weight in single-level mode
  double eta_theta = 0.2;    // inner learning rate
  double eta_theta_a = 0.05;
  int inner_steps_per_outer = 5;
  int max_outer_steps = 300;
  int patience = 50;  // outer rounds without val improvement before stopping
  int hsic_batch_size = 64;
  int hidden_dim = 16;
  double gate_init = 3.0;  // initial gate logit for every weight entry (sigmoid(3) ~ 0.95)
  FilterMode filter = FilterMode::none;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class TrainMode { bilevel, single_level };

std::string to_string(TrainMode m);

struct StepRecord {
  int step = 0;
  std::string phase;  // "inner" | "outer"
  double train_loss = 0;
  double val_acc = 0;
  double scl_loss = 0;  // NaN when not evaluated at this step
  double hsic = 0;      // NaN when not evaluated at this step
  double beta = 0;
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  GcnParams final_params;
  LearnerParams final_learner;
  GcnParams best_params;
  LearnerParams best_learner;
  GcnParams effective;  // apply_gates(best_params, best_learner)
  double best_val_acc = 0;
  int best_round = 0;
  int rounds = 0;
};

/// Everything a step needs about the data: the prepared graph and its partition.
struct TrainingData {
  const PreparedGraph& graph;
  const SplitMask& splits;
};

struct InnerStep {
  GcnParams params;
  double train_loss = 0;
};

/// One gradient step on theta for cross-entropy over the labeled nodes plus
/// gamma * 0.5 * sum ||W - W * sigmoid(gate)||^2; the learner is read-only.
InnerStep inner_step(const GcnParams& params, const LearnerParams& learner, const TrainingData& data,
                     const TrainConfig& config);

struct OuterStep {
  LearnerParams learner;
  double objective = 0;
  double scl_loss = 0;
  double hsic = 0;
};

/// One gradient step on the learner for cross-entropy over train and val
/// (with gated weights) plus beta * margin loss on a batch sampled from the
/// self-supervised pool. theta enters as a constant.
OuterStep outer_step(const GcnParams& params, const LearnerParams& learner, const TrainingData& data,
                     const TrainConfig& config, std::mt19937_64& rng);

/// Uniform sample without replacement of min(m, |pool|) nodes.
std::vector<Eigen::Index> sample_batch(std::span<const Eigen::Index> pool, int m, std::mt19937_64& rng);

TrainTrace train(const TrainingData& data, const TrainConfig& config, TrainMode mode);

/// Accuracy on `nodes` for the given effective weights.
double evaluate_accuracy(const PreparedGraph& g, const GcnParams& effective, std::span<const Eigen::Index> nodes);

}  // namespace sclgraph
