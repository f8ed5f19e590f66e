#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <vector>

#include "sclgraph/diffmath.hpp"
#include "support.hpp"

using namespace sclgraph;
using sclgraph::testing::numeric_gradient;
using sclgraph::testing::random_matrix;
using sclgraph::testing::relative_error;

namespace {

using Unary = std::function<Tensord(const Tensord&)>;

// Projects f(x) onto a fixed random direction so every output entry matters.
double check_unary(const Unary& f, const MatrixXd& x, std::mt19937_64& rng) {
  MatrixXd probe_dir;
  {
    Taped t;
    const auto y = f(t.constant(x));
    probe_dir = random_matrix(y.rows(), y.cols(), rng);
  }
  auto value = [&](const MatrixXd& at) {
    Taped t;
    return sum(mul_elem(f(t.constant(at)), t.constant(probe_dir))).scalar();
  };
  Taped tape;
  auto xv = tape.variable(x);
  auto root = sum(mul_elem(f(xv), tape.constant(probe_dir)));
  return relative_error(tape.backward(root)[xv], numeric_gradient(value, x));
}

MatrixXd away_from_zero(MatrixXd x) {
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i)) < 1e-3) x(i) = 0.5;
  return x;
}

}  // namespace

TEST(Tape, SumGradientIsAllOnes) {
  Taped tape;
  auto x = tape.variable(MatrixXd::Random(3, 4));
  const auto grads = tape.backward(sum(x));
  EXPECT_TRUE(grads[x].isApprox(MatrixXd::Ones(3, 4)));
}

TEST(Tape, TraceOfProductGradientIsTransposedPartner) {
  std::mt19937_64 rng(1);
  const MatrixXd a = random_matrix(4, 3, rng);
  const MatrixXd b = random_matrix(3, 4, rng);
  Taped tape;
  auto av = tape.variable(a);
  auto bv = tape.variable(b);
  const auto grads = tape.backward(trace(matmul(av, bv)));
  EXPECT_LT((grads[av] - b.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((grads[bv] - a.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Tape, NonScalarRootIsRejected) {
  Taped tape;
  auto x = tape.variable(MatrixXd::Ones(2, 2));
  EXPECT_THROW(tape.backward(x), StructuralError);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Taped tape;
  auto x = tape.variable(MatrixXd::Ones(2, 2));
  auto c = tape.constant(MatrixXd::Ones(2, 2));
  const auto grads = tape.backward(sum(mul_elem(x, c)));
  EXPECT_FALSE(grads.has(c));
  EXPECT_TRUE(grads[c].isZero());
}

TEST(Tape, BackwardIsBitwiseDeterministic) {
  std::mt19937_64 rng(2);
  Taped tape;
  auto x = tape.variable(random_matrix(5, 5, rng));
  auto y = softmax_rows(matmul(x, transpose(x)));
  auto root = sum(mul_elem(log(y), sigmoid(x)));
  const MatrixXd g1 = tape.backward(root)[x];
  const MatrixXd g2 = tape.backward(root)[x];
  EXPECT_EQ(0, std::memcmp(g1.data(), g2.data(), sizeof(double) * static_cast<std::size_t>(g1.size())));
}

TEST(Primitives, ForwardValues) {
  Taped tape;
  MatrixXd m(2, 2);
  m << -1, 2, 0, -3;
  auto x = tape.constant(m);
  EXPECT_EQ(relu(x).value(), (MatrixXd(2, 2) << 0, 2, 0, 0).finished());
  EXPECT_EQ(hinge(x).value(), relu(x).value());
  EXPECT_EQ(transpose(x).value(), m.transpose());
  EXPECT_DOUBLE_EQ(trace(x).scalar(), -4.0);
  EXPECT_DOUBLE_EQ(sum(x).scalar(), -2.0);
  EXPECT_DOUBLE_EQ(mean(x).scalar(), -0.5);
  EXPECT_EQ(scale(x, 2.0).value(), 2.0 * m);
  EXPECT_DOUBLE_EQ(sigmoid(tape.scalar_constant(0.0)).scalar(), 0.5);
  EXPECT_EQ(clamp(x, -1.0, 1.0).value(), (MatrixXd(2, 2) << -1, 1, 0, -1).finished());
}

TEST(Primitives, ScalarBroadcast) {
  Taped tape;
  auto x = tape.variable(MatrixXd::Ones(2, 3));
  auto s = tape.variable(MatrixXd::Constant(1, 1, 2.0));
  auto y = mul_elem(x, s);
  EXPECT_TRUE(y.value().isApprox(MatrixXd::Constant(2, 3, 2.0)));
  const auto grads = tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(grads[s](0, 0), 6.0);
  EXPECT_TRUE(grads[x].isApprox(MatrixXd::Constant(2, 3, 2.0)));
}

TEST(Primitives, ShapeMismatchIsStructuralError) {
  Taped tape;
  auto a = tape.constant(MatrixXd::Ones(2, 3));
  auto b = tape.constant(MatrixXd::Ones(3, 2));
  EXPECT_THROW(add(a, b), StructuralError);
  EXPECT_THROW(matmul(a, a), StructuralError);
  EXPECT_THROW(trace(a), StructuralError);
}

TEST(Primitives, DomainErrors) {
  Taped tape;
  EXPECT_THROW(log(tape.constant(MatrixXd::Zero(1, 2))), ParameterError);
  EXPECT_THROW(log(tape.constant(MatrixXd::Constant(1, 1, -1.0))), ParameterError);
  EXPECT_THROW(sqrt(tape.constant(MatrixXd::Constant(1, 1, -1.0))), ParameterError);
  EXPECT_THROW(div(tape.constant(MatrixXd::Ones(1, 1)), tape.constant(MatrixXd::Zero(1, 1))), ParameterError);
}

TEST(Primitives, ReluSubgradientAtZeroIsZero) {
  Taped tape;
  auto x = tape.variable(MatrixXd::Zero(1, 3));
  EXPECT_TRUE(tape.backward(sum(relu(x)))[x].isZero());
}

TEST(Primitives, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(3);
  Taped tape;
  const auto y = softmax_rows(tape.constant(random_matrix(20, 7, rng, 30.0))).value();
  EXPECT_LT((y.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_GE(y.minCoeff(), 0.0);
}

TEST(Primitives, LogSoftmaxIsStableForLargeLogits) {
  Taped tape;
  MatrixXd x(1, 3);
  x << 1000, 0, -1000;
  const auto y = log_softmax_rows(tape.constant(x)).value();
  EXPECT_NEAR(y(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(y(0, 1), -1000.0, 1e-9);
  EXPECT_TRUE(y.allFinite());
}

TEST(Primitives, MinmaxFlatInputGivesHalf) {
  Taped tape;
  const auto y = minmax_normalize(tape.constant(MatrixXd::Constant(4, 1, 3.0))).value();
  EXPECT_TRUE(y.isApprox(MatrixXd::Constant(4, 1, 0.5)));
}

TEST(Gradients, EveryPrimitiveMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  const std::vector<std::pair<const char*, Unary>> unaries = {
      {"relu", [](const Tensord& x) { return relu(x); }},
      {"hinge", [](const Tensord& x) { return hinge(x); }},
      {"sigmoid", [](const Tensord& x) { return sigmoid(x); }},
      {"exp", [](const Tensord& x) { return exp(scale(x, 0.3)); }},
      {"log", [](const Tensord& x) { return log(add(mul_elem(x, x), x.tape()->scalar_constant(0.5))); }},
      {"sqrt", [](const Tensord& x) { return sqrt(add(mul_elem(x, x), x.tape()->scalar_constant(0.5))); }},
      {"scale", [](const Tensord& x) { return scale(x, -1.7); }},
      {"transpose", [](const Tensord& x) { return transpose(x); }},
      {"softmax_rows", [](const Tensord& x) { return softmax_rows(x); }},
      {"log_softmax_rows", [](const Tensord& x) { return log_softmax_rows(x); }},
      {"sum", [](const Tensord& x) { return sum(x); }},
      {"mean", [](const Tensord& x) { return mean(x); }},
      {"trace", [](const Tensord& x) { return trace(matmul(x, transpose(x))); }},
      {"matmul", [](const Tensord& x) { return matmul(x, transpose(x)); }},
      {"add", [](const Tensord& x) { return add(x, mul_elem(x, x)); }},
      {"sub", [](const Tensord& x) { return sub(x, mul_elem(x, x)); }},
      {"mul_elem", [](const Tensord& x) { return mul_elem(x, sigmoid(x)); }},
      {"div", [](const Tensord& x) { return div(x, add(mul_elem(x, x), x.tape()->scalar_constant(1.0))); }},
      {"clamp", [](const Tensord& x) { return clamp(x, -0.8, 0.8); }},
      {"broadcast", [](const Tensord& x) { return mul_elem(sum(x), x); }},
      {"minmax", [](const Tensord& x) { return minmax_normalize(matmul(x, x.tape()->constant(MatrixXd::Ones(x.cols(), 1)))); }},
      {"gauss_kernel", [](const Tensord& x) { return gauss_kernel(x, 1.3); }},
      {"gauss_kernel_median", [](const Tensord& x) { return gauss_kernel(x, median_heuristic_bandwidth(x)); }},
      {"median_bandwidth", [](const Tensord& x) { return median_heuristic_bandwidth(x); }},
  };
  for (const auto& [name, f] : unaries)
    for (int rep = 0; rep < 5; ++rep) {
      MatrixXd x = random_matrix(4, 3, rng);
      x = away_from_zero(x);
      if (std::string(name) == "clamp")
        for (Eigen::Index i = 0; i < x.size(); ++i)
          if (std::abs(std::abs(x(i)) - 0.8) < 1e-3) x(i) = 0.1;
      EXPECT_LE(check_unary(f, x, rng), 1e-4) << name << " rep " << rep;
    }
}

TEST(Gradients, SelectAndPickRows) {
  std::mt19937_64 rng(8);
  const std::vector<Eigen::Index> rows{2, 0, 2};
  const std::vector<Eigen::Index> cols{1, 0, 2};
  const Unary f = [&](const Tensord& x) { return pick_per_row(select_rows(x, rows), cols); };
  EXPECT_LE(check_unary(f, random_matrix(4, 3, rng), rng), 1e-4);
}

TEST(Gradients, SparseMatmul) {
  std::mt19937_64 rng(9);
  const MatrixXd dense = sclgraph::testing::random_adjacency(5, 0.5, rng) + MatrixXd::Identity(5, 5);
  const SparseMatrix<double> op = dense.sparseView();
  const Unary f = [&](const Tensord& x) { return spmm(op, x); };
  EXPECT_LE(check_unary(f, random_matrix(5, 3, rng), rng), 1e-4);
}

TEST(Gradients, GaussKernelBandwidth) {
  std::mt19937_64 rng(10);
  const MatrixXd x = random_matrix(6, 2, rng);
  const MatrixXd dir = random_matrix(6, 6, rng);
  auto value = [&](const MatrixXd& s) {
    Taped t;
    return sum(mul_elem(gauss_kernel(t.constant(x), t.constant(s)), t.constant(dir))).scalar();
  };
  Taped tape;
  auto s = tape.variable(MatrixXd::Constant(1, 1, 0.9));
  auto root = sum(mul_elem(gauss_kernel(tape.constant(x), s), tape.constant(dir)));
  EXPECT_LE(relative_error(tape.backward(root)[s], numeric_gradient(value, s.value())), 1e-4);
}

TEST(Gradients, RandomComposedExpressions) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 8);
  std::uniform_int_distribution<int> depth_dist(1, 6);
  std::uniform_int_distribution<int> pick(0, 6);
  for (int inst = 0; inst < 60; ++inst) {
    const int r = dim(rng), c = dim(rng), depth = depth_dist(rng);
    std::vector<int> ops(static_cast<std::size_t>(depth));
    for (auto& o : ops) o = pick(rng);
    const MatrixXd b = random_matrix(r, c, rng);
    const MatrixXd sq = random_matrix(c, c, rng, 0.5);
    const MatrixXd dir = random_matrix(r, c, rng);
    auto build = [&](Taped& t, const Tensord& x) {
      Tensord y = x;
      for (int o : ops) switch (o) {
          case 0: y = sigmoid(y); break;
          case 1: y = add(y, t.constant(b)); break;
          case 2: y = mul_elem(y, t.constant(b)); break;
          case 3: y = matmul(y, t.constant(sq)); break;
          case 4: y = exp(scale(y, 0.2)); break;
          case 5: y = softmax_rows(y); break;
          default: y = sub(mul_elem(y, y), y); break;
        }
      return sum(mul_elem(y, t.constant(dir)));
    };
    auto value = [&](const MatrixXd& at) {
      Taped t;
      return build(t, t.constant(at)).scalar();
    };
    const MatrixXd x = random_matrix(r, c, rng);
    Taped tape;
    auto xv = tape.variable(x);
    const MatrixXd analytic = tape.backward(build(tape, xv))[xv];
    EXPECT_LE(relative_error(analytic, numeric_gradient(value, x)), 1e-4) << "instance " << inst;
  }
}

TEST(Kernel, GaussKernelExamples) {
  MatrixXd x(2, 1);
  x << 0, 1;
  const MatrixXd k = gauss_kernel(x, 1.0);
  EXPECT_DOUBLE_EQ(k(0, 0), 1.0);
  EXPECT_NEAR(k(0, 1), 0.60653, 1e-5);
  EXPECT_NEAR(k(0, 1), std::exp(-0.5), 1e-15);
  EXPECT_EQ(gauss_kernel(MatrixXd(MatrixXd::Zero(2, 1)), 0.7), MatrixXd::Ones(2, 2));
}

TEST(Kernel, GaussKernelIsSymmetricWithUnitDiagonal) {
  std::mt19937_64 rng(12);
  const MatrixXd k = gauss_kernel(random_matrix(15, 4, rng), 1.1);
  EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_GT(k.minCoeff(), 0.0);
  EXPECT_LE(k.maxCoeff(), 1.0);
  for (Eigen::Index i = 0; i < k.rows(); ++i) EXPECT_EQ(k(i, i), 1.0);
}

TEST(Kernel, NonPositiveBandwidthIsRejected) {
  MatrixXd x = MatrixXd::Zero(2, 1);
  EXPECT_THROW(gauss_kernel(x, 0.0), ParameterError);
  EXPECT_THROW(gauss_kernel(x, -1.0), ParameterError);
}

TEST(Kernel, MedianHeuristicExamples) {
  EXPECT_DOUBLE_EQ(median_heuristic_bandwidth(MatrixXd((MatrixXd(2, 1) << 0, 2).finished())), 2.0);
  EXPECT_DOUBLE_EQ(median_heuristic_bandwidth(MatrixXd(MatrixXd::Zero(3, 1))), 1.0);
  EXPECT_DOUBLE_EQ(median_heuristic_bandwidth(MatrixXd((MatrixXd(3, 1) << 0, 1, 3).finished())), 2.0);
  EXPECT_THROW(median_heuristic_bandwidth(MatrixXd(MatrixXd::Zero(1, 1))), ParameterError);
}

TEST(Kernel, MedianHeuristicMatchesPairEnumeration) {
  std::mt19937_64 rng(13);
  for (int m : {2, 5, 8}) {
    const MatrixXd x = random_matrix(m, 3, rng);
    std::vector<double> d;
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) d.push_back((x.row(i) - x.row(j)).norm());
    std::sort(d.begin(), d.end());
    const std::size_t n = d.size();
    const double expected = n % 2 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
    EXPECT_DOUBLE_EQ(median_heuristic_bandwidth(x), expected);
  }
}
