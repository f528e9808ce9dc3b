#include <doctest.h>

#include <set>

#include "envs.hpp"

using namespace rgia::envs;
using rgia::DetRng;
using rgia::Vec;

TEST_CASE("gridlake deterministic step from the start cell") {
  Environment env(EnvSpec::gridlake(4, 4, 0.0));
  DetRng rng(1);
  const Vec start = env.reset(rng);
  CHECK(start[0] == 0.0);  // 'S' is the top-left of the standard map
  const StepResult sr = env.step(start, Action{2, {}}, rng);  // right
  CHECK(sr.raw_next[0] == 1.0);
  CHECK(sr.t.r == 0.0);
  CHECK_FALSE(sr.terminal);
  CHECK(sr.t.s[0] == 1.0);       // one-hot of cell 0
  CHECK(sr.t.s_next[1] == 1.0);  // one-hot of cell 1
}

TEST_CASE("gridlake terminal cells absorb and reward the goal") {
  Environment env(EnvSpec::gridlake(4, 4, 0.0));
  DetRng rng(1);
  // Cell 14 -> right lands on the goal (cell 15).
  const StepResult sr = env.step({14.0}, Action{2, {}}, rng);
  CHECK(sr.t.r == 1.0);
  CHECK(sr.terminal);
  CHECK(env.is_terminal_state(sr.t.s_next));
  // Cell 4 -> right lands in the hole at cell 5.
  const StepResult hole = env.step({4.0}, Action{2, {}}, rng);
  CHECK(hole.t.r == 0.0);
  CHECK(hole.terminal);
}

TEST_CASE("pointmass follows the closed-form linear dynamics exactly") {
  const EnvSpec spec = EnvSpec::pointmass();
  Environment env(spec);
  DetRng rng(3);
  const Vec s = {0.5, -1.0};
  const Action a{-1, {0.25}};
  const StepResult sr = env.step(s, a, rng);
  const double want0 = spec.pm.a.at(0, 0) * 0.5 + spec.pm.a.at(0, 1) * -1.0 +
                       spec.pm.b.at(0, 0) * 0.25;
  const double want1 = spec.pm.a.at(1, 0) * 0.5 + spec.pm.a.at(1, 1) * -1.0 +
                       spec.pm.b.at(1, 0) * 0.25;
  CHECK(sr.raw_next[0] == want0);
  CHECK(sr.raw_next[1] == want1);
  CHECK(*env.true_next_encoded(s, a) == sr.t.s_next);
  CHECK_FALSE(sr.terminal);
  CHECK(sr.t.r >= spec.reward_min);
  CHECK(sr.t.r <= spec.reward_max);
}

TEST_CASE("gridlake slip frequency matches the configured rate") {
  Environment env(EnvSpec::gridlake(4, 4, 0.2));
  DetRng rng(12345);
  int slips = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    // From cell 8 ('F'), action right: intended 9, perpendicular slips go
    // up (4) or down (12).
    const StepResult sr = env.step({8.0}, Action{2, {}}, rng);
    if (sr.raw_next[0] != 9.0) ++slips;
  }
  const double freq = static_cast<double>(slips) / n;
  CHECK(freq > 0.19);
  CHECK(freq < 0.21);
}

TEST_CASE("pixel rendering is deterministic and injective") {
  const Vec a = render_pixel_state(4, 4, 5);
  const Vec b = render_pixel_state(4, 4, 5);
  CHECK(a == b);
  CHECK(a.size() == 256);
  for (double v : a) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }

  // All 16 positions pairwise distinct.
  std::vector<Vec> images;
  for (int c = 0; c < 16; ++c) images.push_back(render_pixel_state(4, 4, c));
  for (size_t i = 0; i < images.size(); ++i) {
    for (size_t j = i + 1; j < images.size(); ++j) {
      CHECK(images[i] != images[j]);
    }
  }
}

TEST_CASE("pixelgrid decodes its own renderings") {
  Environment env(EnvSpec::pixelgrid());
  for (int c = 0; c < 16; ++c) {
    CHECK(env.decode_cell(env.encode_state({static_cast<double>(c)})) == c);
  }
}

TEST_CASE("generate_dataset rejects n < 1") {
  Environment env(EnvSpec::gridlake());
  CHECK_THROWS_AS(generate_dataset(env, PolicyTag::Uniform, 0, 1),
                  rgia::ConfigError);
}

TEST_CASE("generate_dataset is byte-identical for equal seeds") {
  Environment env(EnvSpec::gridlake(4, 4, 0.1));
  const Dataset a = generate_dataset(env, PolicyTag::Uniform, 500, 3);
  const Dataset b = generate_dataset(env, PolicyTag::Uniform, 500, 3);
  CHECK(dataset_to_json(a) == dataset_to_json(b));
}

TEST_CASE("uniform policy covers every non-terminal state") {
  Environment env(EnvSpec::gridlake(4, 4, 0.0));
  const Dataset ds = generate_dataset(env, PolicyTag::Uniform, 10000, 3);
  std::set<int> visited;
  for (const Transition& t : ds.transitions) {
    visited.insert(env.decode_cell(t.s));
  }
  const std::string& cells = env.spec().grid.cells;
  for (int c = 0; c < 16; ++c) {
    if (cells[c] == 'H' || cells[c] == 'G') continue;
    CHECK(visited.count(c) == 1);
  }
}

TEST_CASE("generated transitions satisfy the invariants under fuzzing") {
  for (const EnvSpec& spec : {EnvSpec::gridlake(4, 4, 0.3), EnvSpec::pointmass()}) {
    Environment env(spec);
    DetRng rng(99);
    Vec raw = env.reset(rng);
    for (int i = 0; i < 100000; ++i) {
      const Action a = env.sample_action(rng);
      const StepResult sr = env.step(raw, a, rng);
      REQUIRE(sr.t.r >= spec.reward_min);
      REQUIRE(sr.t.r <= spec.reward_max);
      REQUIRE(env.state_in_bounds_raw(sr.raw_next));
      REQUIRE(rgia::all_finite(sr.t.s));
      REQUIRE(rgia::all_finite(sr.t.s_next));
      raw = sr.terminal ? env.reset(rng) : sr.raw_next;
    }
  }
}

TEST_CASE("dataset json round-trips") {
  Environment env(EnvSpec::pointmass());
  const Dataset ds = generate_dataset(env, PolicyTag::Uniform, 50, 7);
  const std::string text = dataset_to_json(ds);
  const Dataset back = dataset_from_json(text);
  CHECK(dataset_to_json(back) == text);
  CHECK(back.size() == ds.size());
  CHECK(back.seed == ds.seed);
}

TEST_CASE("env spec json round-trips for all kinds") {
  for (const EnvSpec& spec :
       {EnvSpec::gridlake(4, 4, 0.15), EnvSpec::pointmass(), EnvSpec::pixelgrid()}) {
    const std::string text = env_spec_to_json(spec);
    const EnvSpec back = env_spec_from_json_text(text);
    CHECK(env_spec_to_json(back) == text);
  }
}

TEST_CASE("spec validation rejects bad configurations") {
  EnvSpec s = EnvSpec::gridlake();
  s.reward_min = 2.0;
  CHECK_THROWS_AS(s.validate(), rgia::ConfigError);

  EnvSpec slip = EnvSpec::gridlake();
  slip.grid.slip = 1.5;
  CHECK_THROWS_AS(slip.validate(), rgia::ConfigError);

  EnvSpec pm = EnvSpec::pointmass();
  pm.pm.state_lo = {0.0};  // wrong dim
  CHECK_THROWS_AS(pm.validate(), rgia::ConfigError);
}
