#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sclgraph/synthdata.hpp"

namespace sclgraph {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void fail(const fs::path& file, std::size_t line, const std::string& what) {
  throw DataError(file.string() + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T parse_number(std::string_view s, const fs::path& file, std::size_t line) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    fail(file, line, "cannot parse number '" + std::string(s) + "'");
  return value;
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::ifstream open_required(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("missing or unreadable dataset file: " + file.string());
  return in;
}

}  // namespace

void save(const Dataset& data, const fs::path& dir) {
  const auto& g = data.graph;
  g.validate();
  if (static_cast<Eigen::Index>(data.splits.tags.size()) != g.n_nodes())
    throw StructuralError("save: split mask length does not match node count");
  fs::create_directories(dir);

  nlohmann::ordered_json meta;
  meta["n_nodes"] = g.n_nodes();
  meta["n_features"] = g.n_features();
  meta["n_classes"] = g.n_classes;
  meta["spurious_columns"] = data.spurious_columns;
  meta["name"] = data.name;
  std::ofstream(dir / "meta.json") << meta.dump() << '\n';

  std::ofstream edges(dir / "edges.tsv");
  for (Eigen::Index u = 0; u < g.n_nodes(); ++u)
    for (Eigen::Index v = u + 1; v < g.n_nodes(); ++v)
      if (g.adjacency(u, v) != 0.0) edges << u << '\t' << v << '\n';

  std::ofstream nodes(dir / "nodes.tsv");
  for (Eigen::Index v = 0; v < g.n_nodes(); ++v) {
    nodes << v << '\t' << g.labels[static_cast<std::size_t>(v)] << '\t'
          << to_string(data.splits.tags[static_cast<std::size_t>(v)]) << '\t';
    for (Eigen::Index j = 0; j < g.n_features(); ++j) {
      if (j) nodes << ',';
      nodes << format_double(g.features(v, j));
    }
    nodes << '\n';
  }
  if (!edges || !nodes) throw DataError("failed writing dataset to " + dir.string());
}

Dataset load(const fs::path& dir) {
  Dataset data;
  const auto meta_path = dir / "meta.json";
  auto meta_in = open_required(meta_path);
  Eigen::Index n = 0, d = 0;
  try {
    const auto meta = nlohmann::json::parse(meta_in);
    n = meta.at("n_nodes").get<Eigen::Index>();
    d = meta.at("n_features").get<Eigen::Index>();
    data.graph.n_classes = meta.at("n_classes").get<int>();
    data.spurious_columns = meta.at("spurious_columns").get<std::vector<int>>();
    data.name = meta.at("name").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (n < 1 || d < 0) throw DataError(meta_path.string() + ": invalid n_nodes / n_features");
  for (int c : data.spurious_columns)
    if (c < 0 || c >= d) throw DataError(meta_path.string() + ": spurious column out of range");

  auto& g = data.graph;
  g.adjacency = MatrixXd::Zero(n, n);
  g.features = MatrixXd::Zero(n, d);
  g.labels.assign(static_cast<std::size_t>(n), 0);
  data.splits.tags.assign(static_cast<std::size_t>(n), Split::unassigned);

  const auto nodes_path = dir / "nodes.tsv";
  auto nodes_in = open_required(nodes_path);
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(nodes_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 4) fail(nodes_path, lineno, "expected 4 tab-separated fields");
    const auto id = parse_number<Eigen::Index>(cols[0], nodes_path, lineno);
    if (id < 0 || id >= n) fail(nodes_path, lineno, "node id out of range");
    if (seen[static_cast<std::size_t>(id)]) fail(nodes_path, lineno, "duplicate node id");
    seen[static_cast<std::size_t>(id)] = true;
    const int y = parse_number<int>(cols[1], nodes_path, lineno);
    if (y < 0 || y >= g.n_classes) fail(nodes_path, lineno, "label outside [0, n_classes)");
    g.labels[static_cast<std::size_t>(id)] = y;
    try {
      data.splits.tags[static_cast<std::size_t>(id)] = split_from_string(std::string(cols[2]));
    } catch (const ParameterError& e) {
      fail(nodes_path, lineno, e.what());
    }
    if (d > 0) {
      const auto feats = split_on(cols[3], ',');
      if (static_cast<Eigen::Index>(feats.size()) != d) fail(nodes_path, lineno, "wrong feature count");
      for (Eigen::Index j = 0; j < d; ++j) g.features(id, j) = parse_number<double>(feats[static_cast<std::size_t>(j)], nodes_path, lineno);
    }
  }
  for (Eigen::Index v = 0; v < n; ++v)
    if (!seen[static_cast<std::size_t>(v)]) throw DataError(nodes_path.string() + ": node " + std::to_string(v) + " missing");

  const auto edges_path = dir / "edges.tsv";
  auto edges_in = open_required(edges_path);
  lineno = 0;
  while (std::getline(edges_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_on(line, '\t');
    if (cols.size() != 2) fail(edges_path, lineno, "expected 'u<TAB>v'");
    const auto u = parse_number<Eigen::Index>(cols[0], edges_path, lineno);
    const auto v = parse_number<Eigen::Index>(cols[1], edges_path, lineno);
    if (!(u < v)) fail(edges_path, lineno, "edges must satisfy u < v");
    if (u < 0 || v >= n) fail(edges_path, lineno, "edge endpoint out of range");
    g.adjacency(u, v) = 1.0;
    g.adjacency(v, u) = 1.0;
  }
  g.validate();
  return data;
}

}  // namespace sclgraph
