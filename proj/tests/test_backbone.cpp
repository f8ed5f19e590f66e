#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>
#include <random>
#include <vector>

#include "sclgraph/backbone.hpp"
#include "support.hpp"

using namespace sclgraph;
using sclgraph::testing::random_graph;
using sclgraph::testing::random_matrix;

namespace fs = std::filesystem;

TEST(Forward, ZeroWeightsGiveUniformScores) {
  const Graph g = random_graph(6, 3, 4, 1);
  const PreparedGraph p(g);
  const auto out = forward(p, {MatrixXd::Zero(3, 5), MatrixXd::Zero(5, 4)});
  EXPECT_TRUE(out.scores.isApprox(MatrixXd::Constant(6, 4, 0.25)));
}

TEST(Forward, IsolatedNodeHiddenRowIsFeatureRow) {
  Graph g;
  g.adjacency = MatrixXd::Zero(3, 3);
  g.adjacency(0, 1) = g.adjacency(1, 0) = 1;
  g.features = (MatrixXd(3, 2) << 1, 2, 3, 4, 0.5, 1.5).finished();
  g.labels = {0, 1, 0};
  g.n_classes = 2;
  const PreparedGraph p(g);
  const auto out = forward(p, {MatrixXd::Identity(2, 2), MatrixXd::Ones(2, 2)});
  EXPECT_EQ(out.hidden.row(2), g.features.row(2));
}

TEST(Forward, MatchesStraightLineOracle) {
  const Graph g = random_graph(5, 3, 2, 0, 0.5);
  std::mt19937_64 rng(0);
  const GcnParams params{random_matrix(3, 4, rng), random_matrix(4, 2, rng)};
  // oracle: explicit loops over the dense normalized operator
  const Eigen::Index n = 5;
  MatrixXd v(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double di = g.adjacency.row(i).sum() + 1, dj = g.adjacency.row(j).sum() + 1;
      v(i, j) = (g.adjacency(i, j) + (i == j ? 1.0 : 0.0)) / std::sqrt(di * dj);
    }
  MatrixXd hidden = MatrixXd::Zero(n, 4);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < 4; ++c) {
      double acc = 0;
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index f = 0; f < 3; ++f) acc += v(i, j) * g.features(j, f) * params.w1(f, c);
      hidden(i, c) = std::max(acc, 0.0);
    }
  MatrixXd logits = MatrixXd::Zero(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < 2; ++k)
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index c = 0; c < 4; ++c) logits(i, k) += v(i, j) * hidden(j, c) * params.w2(c, k);

  const auto out = forward(PreparedGraph(g), params);
  EXPECT_LT((out.hidden - hidden).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.logits - logits).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.scores.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Forward, TapedAndValuePathsAgree) {
  const Graph g = random_graph(9, 4, 3, 2);
  std::mt19937_64 rng(2);
  const auto params = init_params(4, 5, 3, rng);
  const PreparedGraph p(g);
  Taped tape;
  const auto taped = forward(tape, p, tape.constant(params.w1), tape.constant(params.w2));
  const auto plain = forward(p, params);
  EXPECT_EQ(taped.logits.value(), plain.logits);
  EXPECT_EQ(taped.scores.value(), plain.scores);
}

TEST(Forward, ShapeMismatchIsStructuralError) {
  const Graph g = random_graph(4, 3, 2, 3);
  const PreparedGraph p(g);
  EXPECT_THROW(forward(p, {MatrixXd::Zero(2, 4), MatrixXd::Zero(4, 2)}), StructuralError);
  EXPECT_THROW(forward(p, {MatrixXd::Zero(3, 4), MatrixXd::Zero(3, 2)}), StructuralError);
  EXPECT_THROW(forward(p, {MatrixXd::Zero(3, 4), MatrixXd::Zero(4, 3)}), StructuralError);
}

TEST(Forward, PermutationEquivariance) {
  const Graph g = random_graph(10, 3, 3, 4);
  std::mt19937_64 rng(4);
  const auto params = init_params(3, 6, 3, rng);
  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Graph pg = g;
  for (int i = 0; i < 10; ++i) {
    pg.features.row(i) = g.features.row(perm[static_cast<std::size_t>(i)]);
    pg.labels[static_cast<std::size_t>(i)] = g.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    for (int j = 0; j < 10; ++j)
      pg.adjacency(i, j) = g.adjacency(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  const auto a = forward(PreparedGraph(g), params);
  const auto b = forward(PreparedGraph(pg), params);
  for (int i = 0; i < 10; ++i) {
    const auto src = perm[static_cast<std::size_t>(i)];
    EXPECT_LT((b.hidden.row(i) - a.hidden.row(src)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((b.scores.row(i) - a.scores.row(src)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, Deterministic) {
  const Graph g = random_graph(8, 3, 2, 5);
  std::mt19937_64 r1(5), r2(5);
  const auto p1 = init_params(3, 4, 2, r1);
  const auto p2 = init_params(3, 4, 2, r2);
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(forward(PreparedGraph(g), p1).scores, forward(PreparedGraph(g), p2).scores);
}

TEST(InitParams, GlorotRange) {
  std::mt19937_64 rng(6);
  const auto p = init_params(30, 16, 4, rng);
  EXPECT_LE(p.w1.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 46.0));
  EXPECT_LE(p.w2.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 20.0));
}

TEST(CrossEntropy, Examples) {
  const std::vector<int> labels{2, 0};
  const std::vector<bool> all{true, true};
  MatrixXd confident = MatrixXd::Zero(2, 3);
  confident(0, 2) = 60;
  confident(1, 0) = 60;
  EXPECT_LT(cross_entropy(confident, labels, all), 1e-20);
  const std::vector<int> four{1};
  EXPECT_NEAR(cross_entropy(MatrixXd(MatrixXd::Zero(1, 4)), four, {true}), std::log(4.0), 1e-15);
  EXPECT_NEAR(std::log(4.0), 1.38629, 1e-5);
}

TEST(CrossEntropy, MatchesNaiveOracle) {
  std::mt19937_64 rng(7);
  const MatrixXd logits = random_matrix(6, 3, rng);
  const std::vector<int> labels{0, 1, 2, 2, 1, 0};
  const std::vector<bool> mask{true, false, true, true, false, true};
  double acc = 0;
  int n = 0;
  for (int i = 0; i < 6; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    double z = 0;
    for (int k = 0; k < 3; ++k) z += std::exp(logits(i, k));
    acc += -std::log(std::exp(logits(i, labels[static_cast<std::size_t>(i)])) / z);
    ++n;
  }
  EXPECT_NEAR(cross_entropy(logits, labels, mask), acc / n, 1e-12);
  Taped tape;
  EXPECT_NEAR(cross_entropy(tape.constant(logits), labels, mask).scalar(), acc / n, 1e-12);
}

TEST(CrossEntropy, NonNegativeAndEmptyMaskRejected) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const MatrixXd logits = random_matrix(4, 3, rng, 5.0);
    EXPECT_GE(cross_entropy(logits, std::vector<int>{0, 1, 2, 0}, {true, true, true, true}), 0.0);
  }
  EXPECT_THROW(cross_entropy(MatrixXd(MatrixXd::Zero(2, 2)), std::vector<int>{0, 1}, {false, false}), ParameterError);
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  MatrixXd s(2, 3);
  s << 0.1, 0.7, 0.2, 0.4, 0.4, 0.2;
  EXPECT_EQ(predict(s), (std::vector<int>{1, 0}));
  EXPECT_EQ(predict((MatrixXd(1, 2) << 0.5, 0.5).finished()), std::vector<int>{0});
}

TEST(Predict, MatchesLinearScanOracle) {
  std::mt19937_64 rng(9);
  MatrixXd s = random_matrix(50, 5, rng);
  s(3, 4) = s(3, 1) = 100;  // planted tie
  const auto pred = predict(s);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < 5; ++k)
      if (s(i, k) > s(i, best)) best = k;
    EXPECT_EQ(pred[static_cast<std::size_t>(i)], best);
  }
}

TEST(Accuracy, CountsMatches) {
  const std::vector<int> pred{0, 1, 1, 2};
  const std::vector<int> labels{0, 1, 0, 2};
  const std::vector<Eigen::Index> nodes{0, 2, 3};
  EXPECT_DOUBLE_EQ(accuracy(pred, labels, nodes), 2.0 / 3.0);
}

TEST(Checkpoint, BitwiseRoundTrip) {
  std::mt19937_64 rng(10);
  std::vector<NamedMatrix> tensors{{"w1", random_matrix(3, 4, rng, 1e-3)},
                                   {"w2", random_matrix(4, 2, rng, 1e5)},
                                   {"empty", MatrixXd(0, 3)}};
  tensors[0].value(0, 0) = 0.1;
  tensors[0].value(0, 1) = 5e-324;
  const auto path = fs::temp_directory_path() / "sclgraph_test_checkpoint.json";
  write_checkpoint(path, tensors);
  const auto back = read_checkpoint(path);
  ASSERT_EQ(back.size(), tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    EXPECT_EQ(back[i].value, tensors[i].value);
  }
  EXPECT_EQ(find_tensor(back, "w2"), tensors[1].value);
  EXPECT_THROW(find_tensor(back, "w3"), DataError);
  fs::remove(path);
}
