#pragma once

// Command implementations behind the `sclgraph` CLI. Every command writes a
// manifest.json next to its results; rerun() replays a manifest.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sclgraph/bilevel.hpp"
#include "sclgraph/synthdata.hpp"

namespace sclgraph {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitDivergence = 3;

std::string tool_version();

struct SplitEval {
  std::size_t count = 0;
  double accuracy = 0;
  Eigen::MatrixXi confusion;  // rows: true class, cols: predicted
};

struct EvalReport {
  SplitEval test_id;
  SplitEval ood1;
  SplitEval ood2;
};

EvalReport evaluate(const PreparedGraph& g, const SplitMask& splits, const GcnParams& effective);

nlohmann::ordered_json to_json(const EvalReport& r);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const SpuriousSpec& s);
nlohmann::ordered_json to_json(const StepRecord& s);
nlohmann::ordered_json to_json(const ImportanceReport& r);
TrainConfig train_config_from_json(const nlohmann::json& j);
SpuriousSpec spurious_spec_from_json(const nlohmann::json& j);

/// "bilevel" | "single" | "erm"; erm is bilevel with beta = gamma = 0.
enum class RunMode { bilevel, single, erm };
RunMode run_mode_from_string(const std::string& s);
std::string to_string(RunMode m);

struct GenerateOptions {
  SpuriousSpec spec;
  std::uint64_t seed = 0;
  fs::path out;
};

struct TrainOptions {
  fs::path data;
  RunMode mode = RunMode::bilevel;
  TrainConfig config;
  fs::path out;
};

struct SweepOptions {
  fs::path data;
  std::vector<double> betas{0.25, 0.5, 1.0, 2.5, 5.0};
  int seeds = 3;
  TrainConfig base;
  fs::path out;
};

struct SweepRow {
  double beta = 0;
  std::uint64_t seed = 0;
  double acc_id = 0;
  double acc_ood1 = 0;
  double acc_ood2 = 0;
};

struct AblateOptions {
  fs::path data;
  std::optional<FilterMode> variant;  // unset: run both woic and wosc
  int seeds = 3;
  TrainConfig base;
  fs::path out;
};

struct MechanismOptions {
  fs::path checkpoint;
  fs::path data;
  std::optional<fs::path> out;
};

struct ColumnStats {
  double median = 0;
  double variance = 0;
};

struct MechanismReport {
  ColumnStats spurious;
  ColumnStats clean;
  std::vector<ColumnStats> per_column;
  std::vector<bool> is_spurious;
};

FilterMode ablation_variant_from_string(const std::string& s);

/// Trains and evaluates in-process without touching the filesystem.
struct RunResult {
  TrainTrace trace;
  EvalReport report;
};
RunResult run_training(const Dataset& data, RunMode mode, const TrainConfig& config);

/// Median and population variance of |w| over the entries of the given rows
/// of the effective first-layer matrix.
MechanismReport weight_statistics(const MatrixXd& w1_effective, const std::vector<int>& spurious_columns);

void cmd_generate(const GenerateOptions& o);
EvalReport cmd_train(const TrainOptions& o);
std::vector<SweepRow> cmd_sweep_beta(const SweepOptions& o);
nlohmann::ordered_json cmd_ablate(const AblateOptions& o);
MechanismReport cmd_mechanism(const MechanismOptions& o);

/// Re-executes the command recorded in `manifest`, optionally into another
/// output directory.
void rerun(const fs::path& manifest, const std::optional<fs::path>& out_override = std::nullopt);

}  // namespace sclgraph
