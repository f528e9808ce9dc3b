#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "support.hpp"

namespace rgia::envs {

using rgia::Vec;

enum class EnvKind { GridLake, PointMass, PixelGrid };

struct GridParams {
  int rows = 4;
  int cols = 4;
  double slip = 0.0;
  // Row-major cell map: S start, F frozen, H hole, G goal.
  std::string cells = "SFFFFHFHFFFHHFFG";
};

struct PointMassParams {
  Matrix a;  // state_dim x state_dim
  Matrix b;  // state_dim x action_dim
  Vec state_lo, state_hi;
  Vec action_lo, action_hi;
  int anchors_per_dim = 5;  // bootstrap max grid for continuous actions
};

struct EnvSpec {
  EnvKind kind = EnvKind::GridLake;
  double reward_min = 0.0;
  double reward_max = 1.0;
  double gamma = 0.95;
  GridParams grid;
  PointMassParams pm;

  void validate() const;
  bool discrete_actions() const { return kind != EnvKind::PointMass; }
  int n_cells() const { return grid.rows * grid.cols; }
  // Encoded state dimension: one-hot cells, raw coordinates, or pixels.
  int state_dim() const;
  // Encoded action dimension: n for discrete (selection weights), box dims
  // for continuous.
  int action_dim() const;
  int n_actions() const;  // discrete count; anchor count for continuous

  static EnvSpec gridlake(int rows = 4, int cols = 4, double slip = 0.0);
  static EnvSpec pointmass();
  static EnvSpec pixelgrid(double slip = 0.0);
};

struct Action {
  int index = -1;   // >= 0 for discrete
  Vec continuous;   // non-empty for box actions

  bool is_discrete() const { return index >= 0; }
};

struct Transition {
  Vec s;       // encoded state
  Action a;
  double r = 0.0;
  Vec s_next;  // encoded next state
};

struct Dataset {
  EnvSpec env;
  uint64_t seed = 0;
  std::vector<Transition> transitions;

  size_t size() const { return transitions.size(); }
};

struct StepResult {
  Transition t;
  Vec raw_next;
  bool terminal = false;
};

constexpr int kPixelSide = 16;

// Stateless environment; the caller threads raw state and RNG explicitly.
class Environment {
 public:
  explicit Environment(EnvSpec spec);

  const EnvSpec& spec() const { return spec_; }

  Vec reset(DetRng& rng) const;
  StepResult step(const Vec& raw, const Action& action, DetRng& rng) const;

  Vec encode_state(const Vec& raw) const;
  Vec encode_action(const Action& a) const;
  Action sample_action(DetRng& rng) const;

  bool is_terminal_raw(const Vec& raw) const;
  // Terminality of an encoded state (decoded first for grid kinds).
  bool is_terminal_state(const Vec& encoded) const;

  // Grid kinds: encoded state -> cell index (argmax / nearest template).
  int decode_cell(const Vec& encoded) const;

  // Candidate next-step actions for the bootstrap max: every discrete
  // action's index, or the anchor grid for continuous actions.
  const std::vector<Action>& bootstrap_actions() const { return bootstrap_; }

  // True deterministic dynamics in encoded space, where they exist
  // (pointmass always; grid kinds when slip == 0).
  std::optional<Vec> true_next_encoded(const Vec& s_enc, const Action& a) const;

  bool state_in_bounds_raw(const Vec& raw) const;

 private:
  int grid_step_cell(int cell, int dir) const;
  char cell_kind(int cell) const { return spec_.grid.cells[cell]; }

  EnvSpec spec_;
  std::vector<Action> bootstrap_;
  std::vector<Vec> pixel_templates_;  // pixelgrid: rendered image per cell
};

// 16x16 grayscale rendering of a grid position, flattened row-major,
// values in [0,1]; injective over cells.
Vec render_pixel_state(int rows, int cols, int cell);

enum class PolicyTag { Uniform };

Dataset generate_dataset(const Environment& env, PolicyTag policy, int n,
                         uint64_t seed);

// Dataset JSON round-trip:
// {"env": {...}, "seed": u64, "transitions": [{"s": [...], "a": ..,
//  "r": .., "s_next": [...]}, ...]}
std::string dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const std::string& text);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::string env_spec_to_json(const EnvSpec& spec);
EnvSpec env_spec_from_json_text(const std::string& text);

}  // namespace rgia::envs
