#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attack.hpp"
#include "defenses.hpp"
#include "envs.hpp"
#include "frl.hpp"
#include "metrics.hpp"

namespace rgia::experiments {

struct AttackSettings {
  attack::RegWeights weights;
  attack::OptConfig opt;
  int k_starts = 10;
  double prior_fraction = 0.003;
  int prior_floor = 30;
  int model_data = -1;  // transitions used to train f; -1 = prior count
  std::vector<int> model_hidden = {32};
  int model_epochs = 200;
  double model_lr = 0.02;
};

struct ExperimentConfig {
  std::string experiment;
  envs::EnvSpec env = envs::EnvSpec::gridlake();
  frl::FederationConfig federation;
  std::vector<int> qnet_hidden = {16};
  int dataset_n = 6000;
  uint64_t dataset_seed = 3;
  int snapshot_rounds = 200;  // training rounds before packets are cut
  AttackSettings attack;
  defenses::DefenseSpec defense;
  std::vector<uint64_t> seeds = {1, 2, 3};
  int packets_per_seed = 3;

  // Sweep axes, each read by the runner that owns it.
  std::vector<double> variance_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  std::vector<std::string> noise_kinds = {"gaussian", "laplace"};
  std::vector<int> batch_grid = {1, 3, 5, 8, 10};
  std::vector<double> weight_grid = {0.0, 0.01, 0.1, 1.0, 10.0};
  std::string sensitivity_axis = "alpha";
  std::vector<int> prior_sizes = {5, 30, 100, 300, 1000, -1};  // -1 = all
  std::vector<int> model_data_sizes = {0, 30, 100, 300, 1000, -1};
  std::vector<std::string> variants = {"GIA", "GIA-SR", "GIA-RC", "GIA-DC", "RGIA"};

  // File inputs for the single-shot subcommands.
  std::string packet_path;
  std::string net_path;
  std::string target_net_path;
  std::string dataset_path;
  std::string rows_csv_path;

  std::string out_dir = ".";
  bool deterministic = false;

  std::string config_hash() const;
};

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

struct ReportRow {
  std::string experiment;
  metrics::MetricsReport report;
};

// rows.csv + long.csv + summary.json, deterministic ordering throughout.
void emit_report(const std::vector<ReportRow>& rows, const std::string& out_dir,
                 bool deterministic);
std::vector<ReportRow> parse_rows_csv(const std::string& text);
std::string rows_csv_text(const std::vector<ReportRow>& rows, bool deterministic);

std::vector<ReportRow> run_ablation(const ExperimentConfig& cfg);
std::vector<ReportRow> run_sensitivity(const ExperimentConfig& cfg);
std::vector<ReportRow> run_defense_sweep(const ExperimentConfig& cfg);
std::vector<ReportRow> run_batch_sweep(const ExperimentConfig& cfg);
std::vector<ReportRow> run_multistart(const ExperimentConfig& cfg);
std::vector<ReportRow> run_prior_study(const ExperimentConfig& cfg);
std::vector<ReportRow> run_transition_study(const ExperimentConfig& cfg);
void run_train(const ExperimentConfig& cfg);
void run_attack_cmd(const ExperimentConfig& cfg);
void run_report_cmd(const ExperimentConfig& cfg);

// Dispatch on cfg.experiment; writes outputs under cfg.out_dir.
void run(const ExperimentConfig& cfg);

// Shared pipeline pieces (also used by tests and the acceptance suite).
struct World {
  envs::Environment env;
  envs::Dataset dataset;
  std::vector<envs::Dataset> shards;
  attack::NetSnapshot snapshot;
  attack::StatePrior prior;
  attack::TransitionModel model;
  double final_td_loss = 0.0;  // mean TD loss in the last training round
};

World build_world(const ExperimentConfig& cfg, uint64_t seed,
                  const frl::DefenseHook* train_defense = nullptr);

// Transitions whose TD target kept the bootstrap term (the gradient surface
// the fake loss mirrors).
std::vector<envs::Transition> pick_attack_transitions(
    const envs::Dataset& ds, const envs::Environment& env, int count,
    uint64_t seed);

struct EvalInput {
  const attack::ReconstructionResult* result;
  const envs::Transition* truth;
};

metrics::MetricsReport evaluate_reconstructions(
    const envs::Environment& env, std::span<const EvalInput> pairs,
    const attack::TransitionModel* model);

}  // namespace rgia::experiments
