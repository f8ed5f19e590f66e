#include "sclgraph/backbone.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sclgraph {

namespace {

MatrixXd glorot(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-s, s);
  MatrixXd w(fan_in, fan_out);
  // row-major fill order so the draw sequence does not depend on storage order
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = u(rng);
  return w;
}

std::vector<Eigen::Index> masked_rows(std::span<const int> labels, const std::vector<bool>& mask,
                                      std::vector<Eigen::Index>& cols) {
  if (mask.size() != labels.size()) throw StructuralError("cross_entropy: mask and labels differ in length");
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      rows.push_back(static_cast<Eigen::Index>(i));
      cols.push_back(labels[i]);
    }
  if (rows.empty()) throw ParameterError("cross_entropy: mask selects no nodes");
  return rows;
}

}  // namespace

GcnParams init_params(Eigen::Index n_features, Eigen::Index hidden_dim, int n_classes, std::mt19937_64& rng) {
  if (n_features < 1 || hidden_dim < 1 || n_classes < 1) throw ParameterError("init_params: dimensions must be positive");
  GcnParams p;
  p.w1 = glorot(n_features, hidden_dim, rng);
  p.w2 = glorot(hidden_dim, n_classes, rng);
  return p;
}

GcnOutputs<Tensord> forward(Taped& tape, const PreparedGraph& g, const Tensord& w1, const Tensord& w2) {
  if (w1.rows() != g.graph->n_features())
    throw StructuralError("forward: w1 has " + std::to_string(w1.rows()) + " rows, graph has " +
                          std::to_string(g.graph->n_features()) + " features");
  if (w2.rows() != w1.cols()) throw StructuralError("forward: w1/w2 hidden dimensions differ");
  if (w2.cols() != g.n_classes()) throw StructuralError("forward: w2 column count must equal n_classes");
  auto x = tape.constant(g.propagated_features);
  auto hidden = relu(matmul(x, w1));
  auto logits = spmm(g.norm_adj, matmul(hidden, w2));
  auto scores = softmax_rows(logits);
  return {hidden, logits, scores};
}

GcnOutputs<MatrixXd> forward(const PreparedGraph& g, const GcnParams& params) {
  Taped tape;
  auto out = forward(tape, g, tape.constant(params.w1), tape.constant(params.w2));
  return {out.hidden.value(), out.logits.value(), out.scores.value()};
}

Tensord cross_entropy(const Tensord& logits, std::span<const int> labels, const std::vector<bool>& mask) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows())
    throw StructuralError("cross_entropy: label count does not match logits rows");
  std::vector<Eigen::Index> cols;
  const auto rows = masked_rows(labels, mask, cols);
  auto logp = log_softmax_rows(select_rows(logits, rows));
  return scale(mean(pick_per_row(logp, cols)), -1.0);
}

double cross_entropy(const MatrixXd& logits, std::span<const int> labels, const std::vector<bool>& mask) {
  Taped tape;
  return cross_entropy(tape.constant(logits), labels, mask).scalar();
}

std::vector<int> predict(const MatrixXd& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k)
      if (scores(i, k) > scores(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> labels, std::span<const Eigen::Index> nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t hit = 0;
  for (auto v : nodes) hit += predicted[static_cast<std::size_t>(v)] == labels[static_cast<std::size_t>(v)];
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedMatrix>& tensors) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tensors) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(t.value.size()));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i)
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) values.push_back(t.value(i, j));
    arr.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}, {"values", values}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << arr.dump() << '\n';
}

std::vector<NamedMatrix> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path.string() + ": " + e.what());
  }
  if (!arr.is_array()) throw DataError("checkpoint " + path.string() + ": expected a JSON array");
  std::vector<NamedMatrix> out;
  for (const auto& item : arr) {
    try {
      const auto rows = item.at("shape").at(0).get<Eigen::Index>();
      const auto cols = item.at("shape").at(1).get<Eigen::Index>();
      const auto values = item.at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw DataError("checkpoint tensor '" + item.at("name").get<std::string>() + "' has wrong value count");
      MatrixXd m(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
      out.push_back({item.at("name").get<std::string>(), std::move(m)});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
  }
  return out;
}

const MatrixXd& find_tensor(const std::vector<NamedMatrix>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw DataError("checkpoint has no tensor named '" + name + "'");
}

}  // namespace sclgraph
