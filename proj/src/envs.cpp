#include "envs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rgia::envs {

using nlohmann::json;

namespace {

double box_norm_cap(const Vec& lo, const Vec& hi) {
  double cap = 0.0;
  for (size_t i = 0; i < lo.size(); ++i) {
    cap += std::max(lo[i] * lo[i], hi[i] * hi[i]);
  }
  return cap;
}

}  // namespace

void EnvSpec::validate() const {
  if (!(reward_min <= reward_max)) throw ConfigError("reward_min > reward_max");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in (0,1)");
  if (kind == EnvKind::PointMass) {
    const auto& p = pm;
    const int sd = p.a.rows;
    if (p.a.cols != sd || p.b.rows != sd || sd < 1) {
      throw ConfigError("pointmass: A/B shapes inconsistent");
    }
    if (static_cast<int>(p.state_lo.size()) != sd ||
        static_cast<int>(p.state_hi.size()) != sd ||
        static_cast<int>(p.action_lo.size()) != p.b.cols ||
        static_cast<int>(p.action_hi.size()) != p.b.cols) {
      throw ConfigError("pointmass: bound dims inconsistent");
    }
    for (size_t i = 0; i < p.state_lo.size(); ++i) {
      if (!std::isfinite(p.state_lo[i]) || !std::isfinite(p.state_hi[i])) {
        throw ConfigError("pointmass: state bounds must be finite");
      }
    }
    for (size_t i = 0; i < p.action_lo.size(); ++i) {
      if (!std::isfinite(p.action_lo[i]) || !std::isfinite(p.action_hi[i])) {
        throw ConfigError("pointmass: action bounds must be finite");
      }
    }
    if (p.anchors_per_dim < 2) throw ConfigError("anchors_per_dim must be >= 2");
  } else {
    if (grid.rows < 2 || grid.cols < 2) throw ConfigError("grid too small");
    if (static_cast<int>(grid.cells.size()) != grid.rows * grid.cols) {
      throw ConfigError("grid cells string length != rows*cols");
    }
    if (grid.cells.find('S') == std::string::npos) {
      throw ConfigError("grid has no start cell");
    }
    if (!(grid.slip >= 0.0 && grid.slip <= 1.0)) {
      throw ConfigError("slip must be in [0,1]");
    }
    if (kind == EnvKind::PixelGrid &&
        (kPixelSide % grid.rows != 0 || kPixelSide % grid.cols != 0)) {
      throw ConfigError("pixelgrid: 16 must be divisible by rows and cols");
    }
  }
}

int EnvSpec::state_dim() const {
  switch (kind) {
    case EnvKind::GridLake: return n_cells();
    case EnvKind::PointMass: return pm.a.rows;
    case EnvKind::PixelGrid: return kPixelSide * kPixelSide;
  }
  return 0;
}

int EnvSpec::action_dim() const {
  return discrete_actions() ? 4 : pm.b.cols;
}

int EnvSpec::n_actions() const {
  if (discrete_actions()) return 4;
  int n = 1;
  for (int d = 0; d < pm.b.cols; ++d) n *= pm.anchors_per_dim;
  return n;
}

EnvSpec EnvSpec::gridlake(int rows, int cols, double slip) {
  EnvSpec s;
  s.kind = EnvKind::GridLake;
  s.grid.rows = rows;
  s.grid.cols = cols;
  s.grid.slip = slip;
  if (rows == 4 && cols == 4) {
    s.grid.cells = "SFFFFHFHFFFHHFFG";
  } else {
    s.grid.cells.assign(static_cast<size_t>(rows) * cols, 'F');
    s.grid.cells.front() = 'S';
    s.grid.cells.back() = 'G';
  }
  s.reward_min = 0.0;
  s.reward_max = 1.0;
  s.gamma = 0.95;
  return s;
}

EnvSpec EnvSpec::pointmass() {
  EnvSpec s;
  s.kind = EnvKind::PointMass;
  s.pm.a = Matrix(2, 2);
  s.pm.a.at(0, 0) = 0.7;
  s.pm.a.at(0, 1) = 0.1;
  s.pm.a.at(1, 0) = -0.1;
  s.pm.a.at(1, 1) = 0.6;
  s.pm.b = Matrix(2, 1);
  s.pm.b.at(0, 0) = 0.0;
  s.pm.b.at(1, 0) = 0.4;
  s.pm.state_lo = {-2.0, -2.0};
  s.pm.state_hi = {2.0, 2.0};
  s.pm.action_lo = {-1.0};
  s.pm.action_hi = {1.0};
  s.pm.anchors_per_dim = 5;
  s.reward_min = 0.0;
  s.reward_max = 1.0;
  s.gamma = 0.95;
  return s;
}

EnvSpec EnvSpec::pixelgrid(double slip) {
  EnvSpec s = gridlake(4, 4, slip);
  s.kind = EnvKind::PixelGrid;
  return s;
}

Vec render_pixel_state(int rows, int cols, int cell) {
  const int ch = kPixelSide / rows;
  const int cw = kPixelSide / cols;
  const int row = cell / cols;
  const int col = cell % cols;
  Vec img(static_cast<size_t>(kPixelSide) * kPixelSide, 0.1);
  for (int r = 0; r < kPixelSide; ++r) {
    for (int c = 0; c < kPixelSide; ++c) {
      if (r % ch == 0 || c % cw == 0) img[static_cast<size_t>(r) * kPixelSide + c] = 0.3;
    }
  }
  for (int r = row * ch; r < (row + 1) * ch; ++r) {
    for (int c = col * cw; c < (col + 1) * cw; ++c) {
      img[static_cast<size_t>(r) * kPixelSide + c] = 1.0;
    }
  }
  return img;
}

Environment::Environment(EnvSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.discrete_actions()) {
    for (int i = 0; i < 4; ++i) bootstrap_.push_back(Action{i, {}});
  } else {
    // Anchor grid: cartesian product of per-dim linspaces.
    const auto& p = spec_.pm;
    const int dims = p.b.cols;
    std::vector<Vec> grids(dims);
    for (int d = 0; d < dims; ++d) {
      for (int k = 0; k < p.anchors_per_dim; ++k) {
        const double t = static_cast<double>(k) / (p.anchors_per_dim - 1);
        grids[d].push_back(p.action_lo[d] + t * (p.action_hi[d] - p.action_lo[d]));
      }
    }
    Vec cur(dims, 0.0);
    std::function<void(int)> build = [&](int d) {
      if (d == dims) {
        bootstrap_.push_back(Action{-1, cur});
        return;
      }
      for (double v : grids[d]) {
        cur[d] = v;
        build(d + 1);
      }
    };
    build(0);
  }
  if (spec_.kind == EnvKind::PixelGrid) {
    for (int c = 0; c < spec_.n_cells(); ++c) {
      pixel_templates_.push_back(render_pixel_state(spec_.grid.rows, spec_.grid.cols, c));
    }
  }
}

Vec Environment::reset(DetRng& rng) const {
  if (spec_.kind == EnvKind::PointMass) {
    const auto& p = spec_.pm;
    Vec s(p.state_lo.size());
    for (size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(p.state_lo[i], p.state_hi[i]);
    return s;
  }
  return {static_cast<double>(spec_.grid.cells.find('S'))};
}

int Environment::grid_step_cell(int cell, int dir) const {
  const int rows = spec_.grid.rows;
  const int cols = spec_.grid.cols;
  int r = cell / cols;
  int c = cell % cols;
  switch (dir) {
    case 0: c = std::max(0, c - 1); break;         // left
    case 1: r = std::min(rows - 1, r + 1); break;  // down
    case 2: c = std::min(cols - 1, c + 1); break;  // right
    case 3: r = std::max(0, r - 1); break;         // up
    default: throw ShapeError("invalid grid action");
  }
  return r * cols + c;
}

StepResult Environment::step(const Vec& raw, const Action& action, DetRng& rng) const {
  StepResult out;
  if (spec_.kind == EnvKind::PointMass) {
    if (action.is_discrete() ||
        static_cast<int>(action.continuous.size()) != spec_.pm.b.cols) {
      throw ShapeError("pointmass: expected continuous action of box dim");
    }
    const auto& p = spec_.pm;
    const int sd = p.a.rows;
    Vec next(sd, 0.0);
    for (int i = 0; i < sd; ++i) {
      double acc = 0.0;
      for (int j = 0; j < sd; ++j) acc += p.a.at(i, j) * raw[j];
      for (int j = 0; j < p.b.cols; ++j) acc += p.b.at(i, j) * action.continuous[j];
      next[i] = acc;
    }
    double cost = 0.0;
    for (double x : raw) cost += x * x;
    for (double x : action.continuous) cost += x * x;
    const double cap = box_norm_cap(p.state_lo, p.state_hi) +
                       box_norm_cap(p.action_lo, p.action_hi);
    const double r = 1.0 - cost / cap;
    out.t = Transition{encode_state(raw), action, r, encode_state(next)};
    out.raw_next = next;
    out.terminal = false;
    return out;
  }

  if (!action.is_discrete() || action.index < 0 || action.index >= 4) {
    throw ShapeError("grid: expected discrete action in [0,4)");
  }
  const int cell = static_cast<int>(raw[0]);
  int next_cell;
  double reward;
  if (cell_kind(cell) == 'H' || cell_kind(cell) == 'G') {
    next_cell = cell;  // absorbing
    reward = 0.0;
  } else {
    int dir = action.index;
    if (spec_.grid.slip > 0.0) {
      const double u = rng.uniform01();
      if (u < spec_.grid.slip) {
        // Slip to one of the two perpendicular directions.
        const bool first = u < spec_.grid.slip * 0.5;
        const int perp[2] = {(dir + 1) % 4, (dir + 3) % 4};
        dir = first ? perp[0] : perp[1];
      }
    }
    next_cell = grid_step_cell(cell, dir);
    reward = cell_kind(next_cell) == 'G' ? 1.0 : 0.0;
  }
  out.t = Transition{encode_state(raw), action, reward,
                     encode_state({static_cast<double>(next_cell)})};
  out.raw_next = {static_cast<double>(next_cell)};
  out.terminal = cell_kind(next_cell) == 'H' || cell_kind(next_cell) == 'G';
  return out;
}

Vec Environment::encode_state(const Vec& raw) const {
  switch (spec_.kind) {
    case EnvKind::PointMass:
      return raw;
    case EnvKind::GridLake: {
      Vec s(spec_.n_cells(), 0.0);
      s[static_cast<size_t>(raw[0])] = 1.0;
      return s;
    }
    case EnvKind::PixelGrid:
      return pixel_templates_[static_cast<size_t>(raw[0])];
  }
  return {};
}

Vec Environment::encode_action(const Action& a) const {
  if (spec_.discrete_actions()) {
    Vec v(4, 0.0);
    v[a.index] = 1.0;
    return v;
  }
  return a.continuous;
}

Action Environment::sample_action(DetRng& rng) const {
  if (spec_.discrete_actions()) {
    return Action{static_cast<int>(rng.uniform_index(4)), {}};
  }
  const auto& p = spec_.pm;
  Vec a(p.action_lo.size());
  for (size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(p.action_lo[i], p.action_hi[i]);
  return Action{-1, a};
}

bool Environment::is_terminal_raw(const Vec& raw) const {
  if (spec_.kind == EnvKind::PointMass) return false;
  const char k = cell_kind(static_cast<int>(raw[0]));
  return k == 'H' || k == 'G';
}

bool Environment::is_terminal_state(const Vec& encoded) const {
  if (spec_.kind == EnvKind::PointMass) return false;
  return is_terminal_raw({static_cast<double>(decode_cell(encoded))});
}

int Environment::decode_cell(const Vec& encoded) const {
  if (spec_.kind == EnvKind::GridLake) {
    int best = 0;
    for (size_t i = 1; i < encoded.size(); ++i) {
      if (encoded[i] > encoded[best]) best = static_cast<int>(i);
    }
    return best;
  }
  if (spec_.kind == EnvKind::PixelGrid) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < pixel_templates_.size(); ++c) {
      double d = 0.0;
      for (size_t i = 0; i < encoded.size(); ++i) {
        const double diff = encoded[i] - pixel_templates_[c][i];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    return best;
  }
  throw ShapeError("decode_cell: continuous state has no cell");
}

std::optional<Vec> Environment::true_next_encoded(const Vec& s_enc,
                                                  const Action& a) const {
  if (spec_.kind == EnvKind::PointMass) {
    const auto& p = spec_.pm;
    const int sd = p.a.rows;
    Vec next(sd, 0.0);
    for (int i = 0; i < sd; ++i) {
      double acc = 0.0;
      for (int j = 0; j < sd; ++j) acc += p.a.at(i, j) * s_enc[j];
      for (int j = 0; j < p.b.cols; ++j) acc += p.b.at(i, j) * a.continuous[j];
      next[i] = acc;
    }
    return next;
  }
  if (spec_.grid.slip != 0.0) return std::nullopt;
  const int cell = decode_cell(s_enc);
  int next_cell = cell;
  if (cell_kind(cell) != 'H' && cell_kind(cell) != 'G') {
    next_cell = grid_step_cell(cell, a.index);
  }
  return encode_state({static_cast<double>(next_cell)});
}

bool Environment::state_in_bounds_raw(const Vec& raw) const {
  if (spec_.kind == EnvKind::PointMass) {
    for (size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] < spec_.pm.state_lo[i] || raw[i] > spec_.pm.state_hi[i]) return false;
    }
    return true;
  }
  const int cell = static_cast<int>(raw[0]);
  return cell >= 0 && cell < spec_.n_cells();
}

Dataset generate_dataset(const Environment& env, PolicyTag policy, int n,
                         uint64_t seed) {
  if (n < 1) throw ConfigError("generate_dataset: n must be >= 1");
  (void)policy;  // only Uniform exists
  constexpr int kEpisodeCap = 50;

  Dataset ds;
  ds.env = env.spec();
  ds.seed = seed;
  DetRng rng(DetRng::mix(seed, 0xDA7A5E7));
  Vec raw = env.reset(rng);
  int ep_len = 0;
  for (int i = 0; i < n; ++i) {
    const Action a = env.sample_action(rng);
    StepResult sr = env.step(raw, a, rng);
    ds.transitions.push_back(std::move(sr.t));
    ++ep_len;
    if (sr.terminal || ep_len >= kEpisodeCap) {
      raw = env.reset(rng);
      ep_len = 0;
    } else {
      raw = sr.raw_next;
    }
  }
  return ds;
}

namespace {

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  Matrix m(static_cast<int>(j.size()), static_cast<int>(j.at(0).size()));
  for (int r = 0; r < m.rows; ++r) {
    for (int c = 0; c < m.cols; ++c) m.at(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

json spec_to_json_obj(const EnvSpec& s) {
  json j;
  j["kind"] = s.kind == EnvKind::GridLake    ? "gridlake"
              : s.kind == EnvKind::PointMass ? "pointmass"
                                             : "pixelgrid";
  j["reward_min"] = s.reward_min;
  j["reward_max"] = s.reward_max;
  j["gamma"] = s.gamma;
  if (s.kind == EnvKind::PointMass) {
    json p;
    p["A"] = matrix_to_json(s.pm.a);
    p["B"] = matrix_to_json(s.pm.b);
    p["state_lo"] = s.pm.state_lo;
    p["state_hi"] = s.pm.state_hi;
    p["action_lo"] = s.pm.action_lo;
    p["action_hi"] = s.pm.action_hi;
    p["anchors_per_dim"] = s.pm.anchors_per_dim;
    j["pointmass"] = std::move(p);
  } else {
    json g;
    g["rows"] = s.grid.rows;
    g["cols"] = s.grid.cols;
    g["slip"] = s.grid.slip;
    g["cells"] = s.grid.cells;
    j["grid"] = std::move(g);
  }
  return j;
}

EnvSpec spec_from_json_obj(const json& j) {
  EnvSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "gridlake") {
    s.kind = EnvKind::GridLake;
  } else if (kind == "pointmass") {
    s.kind = EnvKind::PointMass;
  } else if (kind == "pixelgrid") {
    s.kind = EnvKind::PixelGrid;
  } else {
    throw ConfigError("unknown env kind: " + kind);
  }
  s.reward_min = j.at("reward_min").get<double>();
  s.reward_max = j.at("reward_max").get<double>();
  s.gamma = j.at("gamma").get<double>();
  if (s.kind == EnvKind::PointMass) {
    const json& p = j.at("pointmass");
    s.pm.a = matrix_from_json(p.at("A"));
    s.pm.b = matrix_from_json(p.at("B"));
    s.pm.state_lo = p.at("state_lo").get<Vec>();
    s.pm.state_hi = p.at("state_hi").get<Vec>();
    s.pm.action_lo = p.at("action_lo").get<Vec>();
    s.pm.action_hi = p.at("action_hi").get<Vec>();
    s.pm.anchors_per_dim = p.at("anchors_per_dim").get<int>();
  } else {
    const json& g = j.at("grid");
    s.grid.rows = g.at("rows").get<int>();
    s.grid.cols = g.at("cols").get<int>();
    s.grid.slip = g.at("slip").get<double>();
    s.grid.cells = g.at("cells").get<std::string>();
  }
  s.validate();
  return s;
}

json action_to_json(const Action& a) {
  if (a.is_discrete()) return a.index;
  return a.continuous;
}

Action action_from_json(const json& j) {
  if (j.is_number_integer()) return Action{j.get<int>(), {}};
  return Action{-1, j.get<Vec>()};
}

}  // namespace

std::string dataset_to_json(const Dataset& ds) {
  json j;
  j["env"] = spec_to_json_obj(ds.env);
  j["seed"] = ds.seed;
  json ts = json::array();
  for (const auto& t : ds.transitions) {
    json jt;
    jt["s"] = t.s;
    jt["a"] = action_to_json(t.a);
    jt["r"] = t.r;
    jt["s_next"] = t.s_next;
    ts.push_back(std::move(jt));
  }
  j["transitions"] = std::move(ts);
  return j.dump();
}

Dataset dataset_from_json(const std::string& text) {
  const json j = json::parse(text);
  Dataset ds;
  ds.env = spec_from_json_obj(j.at("env"));
  ds.seed = j.at("seed").get<uint64_t>();
  for (const auto& jt : j.at("transitions")) {
    Transition t;
    t.s = jt.at("s").get<Vec>();
    t.a = action_from_json(jt.at("a"));
    t.r = jt.at("r").get<double>();
    t.s_next = jt.at("s_next").get<Vec>();
    ds.transitions.push_back(std::move(t));
  }
  if (ds.transitions.empty()) throw ConfigError("dataset has no transitions");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << dataset_to_json(ds);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for reading: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return dataset_from_json(ss.str());
}

std::string env_spec_to_json(const EnvSpec& spec) {
  return spec_to_json_obj(spec).dump();
}

EnvSpec env_spec_from_json_text(const std::string& text) {
  return spec_from_json_obj(json::parse(text));
}

}  // namespace rgia::envs
