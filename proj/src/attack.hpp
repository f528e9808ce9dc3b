#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "envs.hpp"
#include "frl.hpp"
#include "metrics.hpp"
#include "qnet.hpp"

namespace rgia::attack {

using envs::Action;
using envs::Dataset;
using envs::Environment;
using envs::Transition;
using frl::GradientPacket;
using num::QNetwork;

struct RegWeights {
  double alpha = 1.0;      // state prior
  double beta = 1.0;       // reward range
  double gamma_dyn = 1.0;  // dynamics consistency
  double lambda = 1.0;     // overall balance

  void validate() const;
  bool any_reg_active() const {
    return lambda > 0.0 && (alpha > 0.0 || beta > 0.0 || gamma_dyn > 0.0);
  }
};

struct StatePrior {
  Vec mu_s;
  int n_samples = 0;
  std::string source;  // dataset identifier
};

StatePrior estimate_state_prior(const Dataset& ds, int count, uint64_t seed);
// Fractional form with a floor, clamped to the dataset size.
StatePrior estimate_state_prior_fraction(const Dataset& ds, double fraction,
                                         int floor_count, uint64_t seed);

struct TransitionModel {
  QNetwork net;  // (s_enc, a_enc) -> s_enc'
  int training_set_size = 0;
  double validation_mse = 0.0;
};

TransitionModel train_transition_model(const Environment& env,
                                       std::span<const Transition> prior_data,
                                       const std::vector<int>& hidden_dims,
                                       int epochs, uint64_t seed,
                                       double lr = 0.02, int batch_size = 32);

Vec model_predict(const TransitionModel& model, const Vec& s_enc, const Vec& a_enc);

// Prior-knowledge regularizers (plain evaluation forms).
double reg_state(const Vec& s, const StatePrior& prior);
double reg_reward(double r, double r_min, double r_max);
double reg_dynamics(const Vec& s, const Vec& a_enc, const Vec& s_next,
                    const TransitionModel& model);

// The attacker's learnable variables: batch tuples flattened as
// [s (state_dim) | a (action_dim) | r | s' (state_dim)] per tuple.
// Discrete dims are unconstrained relaxation coordinates decoded by argmax.
struct CandidateBatch {
  int batch = 1;
  int state_dim = 0;
  int action_dim = 0;
  Vec x;

  int tuple_stride() const { return 2 * state_dim + action_dim + 1; }
  std::span<const double> state(int k) const;
  std::span<const double> action(int k) const;
  double reward(int k) const;
  std::span<const double> next_state(int k) const;

  static CandidateBatch init_normal(const Environment& env, int batch,
                                    uint64_t seed);
};

struct DecodedTuple {
  Vec s;       // encoded-space representation (one-hot for grids)
  Action a;
  double r = 0.0;
  Vec s_next;
};

// Argmax decode for discrete dims (ties to the lowest index); identity for
// continuous dims.
std::vector<DecodedTuple> decode(const CandidateBatch& c, const Environment& env);

// Shadow model pair: theta and the frozen theta_minus at packet time.
struct NetSnapshot {
  QNetwork net;
  QNetwork target;
};

struct OptConfig {
  enum class Kind { Adam, Gd };
  Kind kind = Kind::Adam;
  double step = 0.05;
  int iterations = 3000;
  // Geometric step decay across iterations down to step * decay_floor;
  // 1.0 keeps the step constant (Algorithm-1 style plain schedule).
  double decay_floor = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Basin hopping: when no new best objective appears for stall_window
  // iterations, the candidate is kicked (alternating full-noise hops and
  // dynamics-guided hops that re-propose s' from the transition model) and
  // the moment estimates reset; the best candidate seen is returned.
  // 0 disables.
  int stall_window = 2500;
  double kick_scale = 0.8;
};

struct AttackProblem {
  const Environment* env = nullptr;
  const NetSnapshot* snapshot = nullptr;
  const GradientPacket* packet = nullptr;
  RegWeights weights;
  const StatePrior* prior = nullptr;        // required when alpha > 0
  const TransitionModel* model = nullptr;   // required when gamma_dyn > 0

  void validate() const;
};

// Eq-9-shaped objective: ||grad_fake - grad_real||^2 + lambda (alpha R_s +
// beta R_r + gamma R_f), regularizers averaged over the candidate batch.
double total_objective(const CandidateBatch& c, const AttackProblem& p);

// Objective value plus its gradient with respect to the candidate variables.
struct ObjectiveEval {
  double value = 0.0;
  Vec grad;
};
ObjectiveEval objective_with_grad(const CandidateBatch& c, const AttackProblem& p,
                                  num::Tape& tape);

// ||grad_fake(candidate) - packet.grad||^2 (total_objective with lambda 0).
double gme(const GradientPacket& packet, const CandidateBatch& c,
           const NetSnapshot& snapshot, const Environment& env);

struct ReconstructionResult {
  CandidateBatch candidate;
  std::vector<DecodedTuple> decoded;
  Vec loss_trace;
  double gme = 0.0;
  int iterations = 0;
  double wall_time_s = 0.0;
  uint64_t seed = 0;
  bool aborted = false;
  std::string diagnostic;
};

ReconstructionResult rgia_attack(const AttackProblem& problem,
                                 const OptConfig& opt, uint64_t seed);

std::string result_to_json(const ReconstructionResult& r,
                           const std::string& config_hash);

// Multi-start consistency analysis. Each case is one intercepted packet and
// the matching shadow snapshot; every case is reconstructed from k
// independent N(0,1) starts. Consistency states are the concatenated
// [s, s'] reconstructions; SS uses packet identity as the cluster label and
// needs >= 2 cases.
struct AttackCase {
  GradientPacket packet;
  NetSnapshot snapshot;
};

struct ConsistencyRow {
  int packet_id = 0;
  double ed = 0.0;
  double cd = 0.0;
  double ss = 0.0;
  bool ss_defined = false;
};

struct MultistartResult {
  std::vector<std::vector<ReconstructionResult>> runs;  // [case][start]
  std::vector<ConsistencyRow> rows;
};

MultistartResult multistart_analysis(std::span<const AttackCase> cases,
                                     const Environment& env, int k_starts,
                                     const RegWeights& weights,
                                     const StatePrior* prior,
                                     const TransitionModel* model,
                                     const OptConfig& opt, uint64_t seed);

// Consistency feature for one reconstruction: concat of s and s' (batch 1).
Vec consistency_state(const ReconstructionResult& r);

struct PcaResult {
  std::vector<Vec> projected;
  Vec explained;        // variance share per retained component
  Matrix components;    // column k = k-th principal direction
  Vec center;
  bool degenerate = false;
};

// Center, eigendecompose the sample covariance, project on the top `dims`
// components (eigenvalue order, first nonzero loading made positive).
PcaResult pca_project(std::span<const Vec> states, int dims = 2);

}  // namespace rgia::attack
