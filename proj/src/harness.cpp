#include "sclgraph/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifndef SCLGRAPH_VERSION
#define SCLGRAPH_VERSION "0.0.0"
#endif

namespace sclgraph {

using ojson = nlohmann::ordered_json;

std::string tool_version() { return SCLGRAPH_VERSION; }

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

/// Collects the manifest fields; write() stamps the finish time.
class Manifest {
 public:
  Manifest(std::string command, ojson args) : started_(utc_now()) {
    doc_["tool"] = "sclgraph";
    doc_["tool_version"] = tool_version();
    doc_["command"] = std::move(command);
    doc_["args"] = std::move(args);
  }
  ojson& doc() { return doc_; }
  void write(const fs::path& dir) {
    doc_["started_at"] = started_;
    doc_["finished_at"] = utc_now();
    write_text(dir / "manifest.json", doc_.dump(2) + "\n");
  }

 private:
  ojson doc_;
  std::string started_;
};

SplitEval evaluate_split(const std::vector<int>& pred, const std::vector<int>& labels,
                         const std::vector<Eigen::Index>& nodes, int k) {
  SplitEval e;
  e.count = nodes.size();
  e.confusion = Eigen::MatrixXi::Zero(k, k);
  for (auto v : nodes) e.confusion(labels[static_cast<std::size_t>(v)], pred[static_cast<std::size_t>(v)]) += 1;
  e.accuracy = nodes.empty() ? 0.0 : static_cast<double>(e.confusion.trace()) / static_cast<double>(nodes.size());
  return e;
}

ojson split_json(const SplitEval& e) {
  ojson conf = ojson::array();
  for (Eigen::Index i = 0; i < e.confusion.rows(); ++i) {
    ojson row = ojson::array();
    for (Eigen::Index j = 0; j < e.confusion.cols(); ++j) row.push_back(e.confusion(i, j));
    conf.push_back(row);
  }
  return ojson{{"count", e.count}, {"accuracy", e.accuracy}, {"confusion", conf}};
}

TrainConfig effective_config(RunMode mode, TrainConfig c) {
  if (mode == RunMode::erm) {
    c.beta = 0.0;
    c.gamma = 0.0;
  }
  return c;
}

std::vector<NamedMatrix> checkpoint_tensors(const TrainTrace& t) {
  return {{"w1", t.best_params.w1},
          {"w2", t.best_params.w2},
          {"gate_w1", t.best_learner.gate_w1},
          {"gate_w2", t.best_learner.gate_w2},
          {"channel_weights", MatrixXd(t.best_learner.channel_weights)},
          {"w1_effective", t.effective.w1},
          {"w2_effective", t.effective.w2}};
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double variance_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size());
}

ojson stats_json(const ColumnStats& s) { return ojson{{"median", s.median}, {"variance", s.variance}}; }

ojson mechanism_json(const MechanismReport& r) {
  ojson cols = ojson::array();
  for (std::size_t j = 0; j < r.per_column.size(); ++j)
    cols.push_back({{"column", j}, {"spurious", static_cast<bool>(r.is_spurious[j])},
                    {"median", r.per_column[j].median}, {"variance", r.per_column[j].variance}});
  return ojson{{"spurious", stats_json(r.spurious)}, {"clean", stats_json(r.clean)}, {"per_column", cols}};
}

// SpuriousSpec recorded by `generate` next to the dataset; null for external data.
ojson dataset_spec(const fs::path& data) {
  std::ifstream in(data / "manifest.json");
  if (!in) return nullptr;
  try {
    const auto m = ojson::parse(in);
    if (m.contains("spec")) return m.at("spec");
  } catch (const nlohmann::json::exception&) {
  }
  return nullptr;
}

ojson sweep_args(const SweepOptions& o) {
  return {{"data", fs::absolute(o.data).string()}, {"betas", o.betas}, {"seeds", o.seeds},
          {"config", to_json(o.base)}, {"out", fs::absolute(o.out).string()}};
}

}  // namespace

// ---------------------------------------------------------------------------
// JSON views
// ---------------------------------------------------------------------------

ojson to_json(const EvalReport& r) {
  return ojson{{"accuracy_id", r.test_id.accuracy},
               {"accuracy_ood1", r.ood1.accuracy},
               {"accuracy_ood2", r.ood2.accuracy},
               {"counts", {{"test_id", r.test_id.count}, {"ood1", r.ood1.count}, {"ood2", r.ood2.count}}},
               {"splits", {{"test_id", split_json(r.test_id)}, {"ood1", split_json(r.ood1)}, {"ood2", split_json(r.ood2)}}}};
}

ojson to_json(const TrainConfig& c) {
  return ojson{{"beta", c.beta},
               {"gamma", c.gamma},
               {"lambda", c.lambda},
               {"eta_theta", c.eta_theta},
               {"eta_theta_a", c.eta_theta_a},
               {"inner_steps_per_outer", c.inner_steps_per_outer},
               {"max_outer_steps", c.max_outer_steps},
               {"patience", c.patience},
               {"hsic_batch_size", c.hsic_batch_size},
               {"hidden_dim", c.hidden_dim},
               {"gate_init", c.gate_init},
               {"filter", to_string(c.filter)},
               {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.beta = j.at("beta").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.lambda = j.at("lambda").get<double>();
  c.eta_theta = j.at("eta_theta").get<double>();
  c.eta_theta_a = j.at("eta_theta_a").get<double>();
  c.inner_steps_per_outer = j.at("inner_steps_per_outer").get<int>();
  c.max_outer_steps = j.at("max_outer_steps").get<int>();
  c.patience = j.at("patience").get<int>();
  c.hsic_batch_size = j.at("hsic_batch_size").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.gate_init = j.at("gate_init").get<double>();
  const auto f = j.at("filter").get<std::string>();
  c.filter = f == "none" ? FilterMode::none : ablation_variant_from_string(f);
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

ojson to_json(const SpuriousSpec& s) {
  return ojson{{"d_stable", s.d_stable}, {"d_spurious", s.d_spurious}, {"rho_id", s.rho_id},
               {"rho_ood1", s.rho_ood1}, {"rho_ood2", s.rho_ood2},     {"noise_sigma", s.noise_sigma},
               {"classes", s.classes},   {"intra_p", s.intra_p},       {"inter_p", s.inter_p},
               {"n_id", s.n_id},         {"n_ood1", s.n_ood1},         {"n_ood2", s.n_ood2}};
}

SpuriousSpec spurious_spec_from_json(const nlohmann::json& j) {
  SpuriousSpec s;
  s.d_stable = j.at("d_stable").get<int>();
  s.d_spurious = j.at("d_spurious").get<int>();
  s.rho_id = j.at("rho_id").get<double>();
  s.rho_ood1 = j.at("rho_ood1").get<double>();
  s.rho_ood2 = j.at("rho_ood2").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.classes = j.at("classes").get<int>();
  s.intra_p = j.at("intra_p").get<double>();
  s.inter_p = j.at("inter_p").get<double>();
  s.n_id = j.at("n_id").get<int>();
  s.n_ood1 = j.at("n_ood1").get<int>();
  s.n_ood2 = j.at("n_ood2").get<int>();
  return s;
}

ojson to_json(const StepRecord& s) {
  return ojson{{"step", s.step},       {"phase", s.phase},       {"train_loss", s.train_loss},
               {"val_acc", s.val_acc}, {"scl_loss", s.scl_loss}, {"hsic", s.hsic},
               {"beta", s.beta}};
}

ojson to_json(const ImportanceReport& r) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return ojson{{"raw", vec(r.raw)}, {"normalized", vec(r.normalized)}, {"channel_weights", vec(r.channel_weights)}};
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "bilevel") return RunMode::bilevel;
  if (s == "single") return RunMode::single;
  if (s == "erm") return RunMode::erm;
  throw ParameterError("unknown mode '" + s + "' (expected bilevel, single or erm)");
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::bilevel: return "bilevel";
    case RunMode::single: return "single";
    case RunMode::erm: return "erm";
  }
  return "bilevel";
}

FilterMode ablation_variant_from_string(const std::string& s) {
  if (s == "woic") return FilterMode::drop_irrelevant;
  if (s == "wosc") return FilterMode::drop_significant;
  throw ParameterError("unknown ablation variant '" + s + "' (expected woic or wosc)");
}

// ---------------------------------------------------------------------------
// Core runs
// ---------------------------------------------------------------------------

EvalReport evaluate(const PreparedGraph& g, const SplitMask& splits, const GcnParams& effective) {
  const auto out = forward(g, effective);
  const auto pred = predict(out.scores);
  const auto& labels = g.graph->labels;
  const int k = g.n_classes();
  return {evaluate_split(pred, labels, splits.nodes(Split::test_id), k),
          evaluate_split(pred, labels, splits.nodes(Split::ood1), k),
          evaluate_split(pred, labels, splits.nodes(Split::ood2), k)};
}

RunResult run_training(const Dataset& data, RunMode mode, const TrainConfig& config) {
  const PreparedGraph g(data.graph);
  const TrainingData td{g, data.splits};
  const auto cfg = effective_config(mode, config);
  auto trace = train(td, cfg, mode == RunMode::single ? TrainMode::single_level : TrainMode::bilevel);
  auto report = evaluate(g, data.splits, trace.effective);
  return {std::move(trace), std::move(report)};
}

MechanismReport weight_statistics(const MatrixXd& w1_effective, const std::vector<int>& spurious_columns) {
  const Eigen::Index d = w1_effective.rows();
  MechanismReport r;
  r.is_spurious.assign(static_cast<std::size_t>(d), false);
  for (int c : spurious_columns) {
    if (c < 0 || c >= d) throw DataError("spurious column " + std::to_string(c) + " outside the weight matrix");
    r.is_spurious[static_cast<std::size_t>(c)] = true;
  }
  std::vector<double> spur, clean;
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> col;
    for (Eigen::Index h = 0; h < w1_effective.cols(); ++h) col.push_back(std::abs(w1_effective(j, h)));
    r.per_column.push_back({median_of(col), variance_of(col)});
    auto& pool = r.is_spurious[static_cast<std::size_t>(j)] ? spur : clean;
    pool.insert(pool.end(), col.begin(), col.end());
  }
  r.spurious = {median_of(spur), variance_of(spur)};
  r.clean = {median_of(clean), variance_of(clean)};
  return r;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_generate(const GenerateOptions& o) {
  Manifest manifest("generate", {{"spec", to_json(o.spec)}, {"seed", o.seed}, {"out", fs::absolute(o.out).string()}});
  manifest.doc()["seed"] = o.seed;
  manifest.doc()["spec"] = to_json(o.spec);
  manifest.doc()["split"] = "unstratified";
  const auto gen = generate(o.spec, o.seed);
  save(gen.dataset, o.out);
  manifest.doc()["dataset"] = fs::absolute(o.out).string();
  manifest.write(o.out);
}

EvalReport cmd_train(const TrainOptions& o) {
  const auto cfg = effective_config(o.mode, o.config);
  Manifest manifest("train", {{"data", fs::absolute(o.data).string()},
                              {"mode", to_string(o.mode)},
                              {"config", to_json(o.config)},
                              {"out", fs::absolute(o.out).string()}});
  manifest.doc()["seed"] = cfg.seed;
  manifest.doc()["dataset"] = fs::absolute(o.data).string();
  manifest.doc()["mode"] = to_string(o.mode);
  manifest.doc()["config"] = to_json(cfg);
  manifest.doc()["spec"] = dataset_spec(o.data);

  const auto data = load(o.data);
  auto run = run_training(data, o.mode, o.config);
  fs::create_directories(o.out);

  std::ostringstream steps;
  for (const auto& s : run.trace.steps) steps << to_json(s).dump() << '\n';
  ojson summary{{"summary", true},
                {"acc_id", run.report.test_id.accuracy},
                {"acc_ood1", run.report.ood1.accuracy},
                {"acc_ood2", run.report.ood2.accuracy},
                {"best_val_acc", run.trace.best_val_acc},
                {"best_round", run.trace.best_round},
                {"rounds", run.trace.rounds},
                {"checkpoint", "checkpoint.json"}};
  steps << summary.dump() << '\n';
  write_text(o.out / "steps.jsonl", steps.str());
  write_checkpoint(o.out / "checkpoint.json", checkpoint_tensors(run.trace));
  write_text(o.out / "eval.json", to_json(run.report).dump(2) + "\n");
  manifest.write(o.out);
  return run.report;
}

std::vector<SweepRow> cmd_sweep_beta(const SweepOptions& o) {
  if (o.betas.empty()) throw ParameterError("sweep: need at least one beta");
  if (o.seeds < 1) throw ParameterError("sweep: need at least one seed");
  Manifest manifest("sweep-beta", sweep_args(o));
  manifest.doc()["dataset"] = fs::absolute(o.data).string();
  manifest.doc()["mode"] = "bilevel";
  manifest.doc()["config"] = to_json(o.base);
  manifest.doc()["spec"] = dataset_spec(o.data);

  const auto data = load(o.data);
  std::vector<SweepRow> rows;
  std::ostringstream csv;
  csv << "beta,seed,acc_id,acc_ood1,acc_ood2\n";
  for (double beta : o.betas)
    for (int s = 0; s < o.seeds; ++s) {
      auto cfg = o.base;
      cfg.beta = beta;
      cfg.seed = static_cast<std::uint64_t>(s);
      const auto run = run_training(data, RunMode::bilevel, cfg);
      SweepRow row{beta, cfg.seed, run.report.test_id.accuracy, run.report.ood1.accuracy, run.report.ood2.accuracy};
      csv << format_double(row.beta) << ',' << row.seed << ',' << format_double(row.acc_id) << ','
          << format_double(row.acc_ood1) << ',' << format_double(row.acc_ood2) << '\n';
      rows.push_back(row);
    }
  fs::create_directories(o.out);
  write_text(o.out / "sweep.csv", csv.str());
  manifest.write(o.out);
  return rows;
}

ojson cmd_ablate(const AblateOptions& o) {
  if (o.seeds < 1) throw ParameterError("ablate: need at least one seed");
  std::vector<FilterMode> variants{FilterMode::none};
  if (o.variant)
    variants.push_back(*o.variant);
  else
    variants.insert(variants.end(), {FilterMode::drop_irrelevant, FilterMode::drop_significant});

  ojson args{{"data", fs::absolute(o.data).string()},
             {"variant", o.variant ? to_string(*o.variant) : "all"},
             {"seeds", o.seeds},
             {"config", to_json(o.base)},
             {"out", fs::absolute(o.out).string()}};
  Manifest manifest("ablate", args);
  manifest.doc()["dataset"] = fs::absolute(o.data).string();
  manifest.doc()["mode"] = "bilevel";
  manifest.doc()["config"] = to_json(o.base);
  manifest.doc()["spec"] = dataset_spec(o.data);

  const auto data = load(o.data);
  ojson result{{"seeds", o.seeds}, {"reports", ojson::array()}};
  for (auto v : variants) {
    ojson runs = ojson::array();
    double id = 0, o1 = 0, o2 = 0;
    for (int s = 0; s < o.seeds; ++s) {
      auto cfg = o.base;
      cfg.filter = v;
      cfg.seed = static_cast<std::uint64_t>(s);
      const auto run = run_training(data, RunMode::bilevel, cfg);
      id += run.report.test_id.accuracy / o.seeds;
      o1 += run.report.ood1.accuracy / o.seeds;
      o2 += run.report.ood2.accuracy / o.seeds;
      auto r = to_json(run.report);
      r["seed"] = s;
      runs.push_back(std::move(r));
    }
    result["reports"].push_back({{"variant", v == FilterMode::none ? "full" : to_string(v)},
                                 {"mean_accuracy_id", id},
                                 {"mean_accuracy_ood1", o1},
                                 {"mean_accuracy_ood2", o2},
                                 {"runs", runs}});
  }
  fs::create_directories(o.out);
  write_text(o.out / "ablation.json", result.dump(2) + "\n");
  manifest.write(o.out);
  return result;
}

MechanismReport cmd_mechanism(const MechanismOptions& o) {
  ojson args{{"checkpoint", fs::absolute(o.checkpoint).string()}, {"data", fs::absolute(o.data).string()}};
  if (o.out) args["out"] = fs::absolute(*o.out).string();
  Manifest manifest("mechanism", args);
  manifest.doc()["dataset"] = fs::absolute(o.data).string();

  const auto data = load(o.data);
  if (data.spurious_columns.empty())
    throw DataError("mechanism study needs a dataset with planted spurious columns (meta.json spurious_columns is empty)");
  const auto tensors = read_checkpoint(o.checkpoint);
  const auto& w1 = find_tensor(tensors, "w1_effective");
  if (w1.rows() != data.graph.n_features())
    throw DataError("checkpoint first-layer rows do not match the dataset feature count");
  auto report = weight_statistics(w1, data.spurious_columns);
  if (o.out) {
    fs::create_directories(*o.out);
    write_text(*o.out / "mechanism.json", mechanism_json(report).dump(2) + "\n");
    manifest.write(*o.out);
  }
  return report;
}

void rerun(const fs::path& manifest_path, const std::optional<fs::path>& out_override) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest " + manifest_path.string());
  nlohmann::json m;
  try {
    in >> m;
    const auto command = m.at("command").get<std::string>();
    const auto& a = m.at("args");
    auto out_of = [&](const nlohmann::json& args) {
      return out_override ? *out_override : fs::path(args.at("out").get<std::string>());
    };
    if (command == "generate") {
      cmd_generate({spurious_spec_from_json(a.at("spec")), a.at("seed").get<std::uint64_t>(), out_of(a)});
    } else if (command == "train") {
      cmd_train({a.at("data").get<std::string>(), run_mode_from_string(a.at("mode").get<std::string>()),
                 train_config_from_json(a.at("config")), out_of(a)});
    } else if (command == "sweep-beta") {
      cmd_sweep_beta({a.at("data").get<std::string>(), a.at("betas").get<std::vector<double>>(),
                      a.at("seeds").get<int>(), train_config_from_json(a.at("config")), out_of(a)});
    } else if (command == "ablate") {
      const auto v = a.at("variant").get<std::string>();
      AblateOptions o{a.at("data").get<std::string>(), std::nullopt, a.at("seeds").get<int>(),
                      train_config_from_json(a.at("config")), out_of(a)};
      if (v != "all") o.variant = ablation_variant_from_string(v);
      cmd_ablate(o);
    } else if (command == "mechanism") {
      MechanismOptions o{a.at("checkpoint").get<std::string>(), a.at("data").get<std::string>(), std::nullopt};
      if (out_override)
        o.out = *out_override;
      else if (a.contains("out"))
        o.out = fs::path(a.at("out").get<std::string>());
      cmd_mechanism(o);
    } else {
      throw DataError("manifest names unknown command '" + command + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace sclgraph
