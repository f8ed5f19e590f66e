#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "sclgraph/harness.hpp"

namespace {

using namespace sclgraph;

void add_train_flags(CLI::App* cmd, TrainConfig& c) {
  cmd->add_option("--gamma", c.gamma, "proximal tie weight");
  cmd->add_option("--lambda", c.lambda, "margin-loss weight in single-level mode");
  cmd->add_option("--eta-theta", c.eta_theta, "model learning rate");
  cmd->add_option("--eta-theta-a", c.eta_theta_a, "learner learning rate");
  cmd->add_option("--inner-steps", c.inner_steps_per_outer, "inner steps per outer step");
  cmd->add_option("--max-outer-steps", c.max_outer_steps, "outer round budget");
  cmd->add_option("--patience", c.patience, "early-stopping patience in outer rounds");
  cmd->add_option("--hsic-batch", c.hsic_batch_size, "nodes per margin-loss batch");
  cmd->add_option("--hidden", c.hidden_dim, "hidden width");
  cmd->add_option("--gate-init", c.gate_init, "initial gate logit");
}

void print_report(const EvalReport& r) {
  std::cout << "acc_id=" << r.test_id.accuracy << " acc_ood1=" << r.ood1.accuracy
            << " acc_ood2=" << r.ood2.accuracy << '\n';
}

void set_threads() {
  int threads = 1;
  if (const char* env = std::getenv("SCLGRAPH_THREADS")) {
    try {
      threads = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw ParameterError(std::string("SCLGRAPH_THREADS must be a positive integer, got '") + env + "'");
    }
  }
  Eigen::setNbThreads(threads);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spurious-correlation learning for graph neural networks"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset directory");
  generate->add_option("--n-id", gen.spec.n_id);
  generate->add_option("--n-ood1", gen.spec.n_ood1);
  generate->add_option("--n-ood2", gen.spec.n_ood2);
  generate->add_option("--classes", gen.spec.classes);
  generate->add_option("--d-stable", gen.spec.d_stable);
  generate->add_option("--d-spurious", gen.spec.d_spurious);
  generate->add_option("--rho-id", gen.spec.rho_id);
  generate->add_option("--rho-ood1", gen.spec.rho_ood1);
  generate->add_option("--rho-ood2", gen.spec.rho_ood2);
  generate->add_option("--noise-sigma", gen.spec.noise_sigma);
  generate->add_option("--intra-p", gen.spec.intra_p);
  generate->add_option("--inter-p", gen.spec.inter_p);
  generate->add_option("--seed", gen.seed);
  generate->add_option("--out", gen.out)->required();

  TrainOptions tr;
  std::string mode = "bilevel";
  auto* train_cmd = app.add_subcommand("train", "train and evaluate one model");
  train_cmd->add_option("--data", tr.data)->required();
  train_cmd->add_option("--mode", mode)->check(CLI::IsMember({"bilevel", "single", "erm"}));
  train_cmd->add_option("--beta", tr.config.beta, "margin-loss weight in the outer objective");
  train_cmd->add_option("--seed", tr.config.seed);
  train_cmd->add_option("--out", tr.out)->required();
  add_train_flags(train_cmd, tr.config);

  SweepOptions sw;
  auto* sweep = app.add_subcommand("sweep-beta", "train over a grid of beta values");
  sweep->add_option("--data", sw.data)->required();
  sweep->add_option("--betas", sw.betas)->delimiter(',');
  sweep->add_option("--seeds", sw.seeds);
  sweep->add_option("--out", sw.out)->required();
  add_train_flags(sweep, sw.base);

  AblateOptions ab;
  std::string variant;
  auto* ablate = app.add_subcommand("ablate", "compare the full learner with correlation-filtered variants");
  ablate->add_option("--data", ab.data)->required();
  ablate->add_option("--variant", variant)->check(CLI::IsMember({"woic", "wosc"}));
  ablate->add_option("--seeds", ab.seeds);
  ablate->add_option("--beta", ab.base.beta);
  ablate->add_option("--out", ab.out)->required();
  add_train_flags(ablate, ab.base);

  MechanismOptions mech;
  auto* mechanism = app.add_subcommand("mechanism", "first-layer weight statistics on planted columns");
  mechanism->add_option("--checkpoint", mech.checkpoint)->required();
  mechanism->add_option("--data", mech.data)->required();
  mechanism->add_option("--out", mech.out);

  std::string manifest;
  std::optional<fs::path> rerun_out;
  auto* rerun_cmd = app.add_subcommand("rerun", "replay a command from its manifest.json");
  rerun_cmd->add_option("manifest", manifest)->required();
  rerun_cmd->add_option("--out", rerun_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    set_threads();
    if (*generate) {
      gen.spec.validate();
      cmd_generate(gen);
    } else if (*train_cmd) {
      tr.mode = run_mode_from_string(mode);
      tr.config.validate();
      print_report(cmd_train(tr));
    } else if (*sweep) {
      sw.base.validate();
      for (const auto& r : cmd_sweep_beta(sw))
        std::cout << "beta=" << r.beta << " seed=" << r.seed << " acc_id=" << r.acc_id
                  << " acc_ood1=" << r.acc_ood1 << " acc_ood2=" << r.acc_ood2 << '\n';
    } else if (*ablate) {
      if (!variant.empty()) ab.variant = ablation_variant_from_string(variant);
      ab.base.validate();
      const auto result = cmd_ablate(ab);
      for (const auto& r : result.at("reports"))
        std::cout << r.at("variant").get<std::string>() << ": acc_id=" << r.at("mean_accuracy_id")
                  << " acc_ood1=" << r.at("mean_accuracy_ood1") << " acc_ood2=" << r.at("mean_accuracy_ood2")
                  << '\n';
    } else if (*mechanism) {
      const auto r = cmd_mechanism(mech);
      std::cout << "spurious median=" << r.spurious.median << " variance=" << r.spurious.variance << '\n'
                << "clean    median=" << r.clean.median << " variance=" << r.clean.variance << '\n';
    } else if (*rerun_cmd) {
      rerun(manifest, rerun_out);
    }
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const StructuralError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalDivergence& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
