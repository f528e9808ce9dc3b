#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace rgia::experiments {

using attack::AttackCase;
using attack::NetSnapshot;
using attack::ReconstructionResult;
using envs::Environment;
using envs::Transition;
using metrics::MetricsReport;
using nlohmann::json;

namespace {

constexpr double kInvalidRewardTol = 1e-3;

std::vector<size_t> sample_indices(size_t n, int count, uint64_t seed) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  DetRng rng(DetRng::mix(seed, 0x5A3));
  for (int i = 0; i < count && i + 1 < static_cast<int>(n); ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  }
  idx.resize(std::min<size_t>(count, n));
  return idx;
}

std::vector<Transition> sample_transitions(const envs::Dataset& ds, int count,
                                           uint64_t seed) {
  if (count < 1) throw ConfigError("sample_transitions: count must be >= 1");
  count = std::min<int>(count, static_cast<int>(ds.size()));
  std::vector<Transition> out;
  for (size_t i : sample_indices(ds.size(), count, seed)) {
    out.push_back(ds.transitions[i]);
  }
  return out;
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& text) {
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/" + name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << text;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for reading: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string env_name(const envs::EnvSpec& spec) {
  switch (spec.kind) {
    case envs::EnvKind::GridLake: return "gridlake";
    case envs::EnvKind::PointMass: return "pointmass";
    case envs::EnvKind::PixelGrid: return "pixelgrid";
  }
  return "?";
}

}  // namespace

World build_world(const ExperimentConfig& cfg, uint64_t seed,
                  const frl::DefenseHook* train_defense) {
  Environment env(cfg.env);
  envs::Dataset dataset = envs::generate_dataset(
      env, envs::PolicyTag::Uniform, cfg.dataset_n,
      DetRng::mix(cfg.dataset_seed, seed));

  frl::FederationConfig fed = cfg.federation;
  fed.rounds = cfg.snapshot_rounds;
  fed.seed = DetRng::mix(cfg.federation.seed, seed);
  fed.eval_every = 0;

  std::vector<envs::Dataset> shards(fed.n_agents);
  for (auto& sh : shards) {
    sh.env = dataset.env;
    sh.seed = dataset.seed;
  }
  for (size_t i = 0; i < dataset.transitions.size(); ++i) {
    shards[i % fed.n_agents].transitions.push_back(dataset.transitions[i]);
  }

  frl::FederationResult trained = frl::run_federation(
      env, fed, shards, train_defense, nullptr, &cfg.qnet_hidden);

  World w{std::move(env), std::move(dataset), std::move(shards),
          NetSnapshot{std::move(trained.net), std::move(trained.target_net)},
          attack::StatePrior{}, attack::TransitionModel{},
          trained.final_mean_td_loss};
  w.prior = attack::estimate_state_prior_fraction(
      w.dataset, cfg.attack.prior_fraction, cfg.attack.prior_floor,
      DetRng::mix(seed, 0x9121));
  const int model_count = cfg.attack.model_data < 0
                              ? w.prior.n_samples
                              : std::min<int>(cfg.attack.model_data,
                                              static_cast<int>(w.dataset.size()));
  const auto model_ts =
      sample_transitions(w.dataset, model_count, DetRng::mix(seed, 0xF00D));
  w.model = attack::train_transition_model(w.env, model_ts, cfg.attack.model_hidden,
                                           cfg.attack.model_epochs,
                                           DetRng::mix(seed, 0x170D),
                                           cfg.attack.model_lr);
  return w;
}

std::vector<Transition> pick_attack_transitions(const envs::Dataset& ds,
                                                const Environment& env,
                                                int count, uint64_t seed) {
  if (count < 1) throw ConfigError("pick_attack_transitions: count must be >= 1");
  std::vector<size_t> eligible;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (!env.is_terminal_state(ds.transitions[i].s_next)) eligible.push_back(i);
  }
  if (static_cast<int>(eligible.size()) < count) {
    throw ConfigError("pick_attack_transitions: not enough non-terminal transitions");
  }
  DetRng rng(DetRng::mix(seed, 0x7A26E7));
  std::vector<Transition> out;
  for (int i = 0; i < count; ++i) {
    const size_t j = i + rng.uniform_index(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
    out.push_back(ds.transitions[eligible[i]]);
  }
  return out;
}

namespace {

struct EvalCase {
  const ReconstructionResult* result;
  std::vector<Transition> truths;  // one per candidate tuple
};

// Joint batch reconstructions are permutation-ambiguous; pair each decoded
// tuple with the nearest unused ground-truth state (greedy).
std::vector<int> greedy_match(const std::vector<attack::DecodedTuple>& decoded,
                              const std::vector<Transition>& truths) {
  const int n = static_cast<int>(decoded.size());
  std::vector<int> assign(n, -1);
  std::vector<bool> used(truths.size(), false);
  for (int k = 0; k < n; ++k) {
    double best = std::numeric_limits<double>::infinity();
    int pick = -1;
    for (size_t j = 0; j < truths.size(); ++j) {
      if (used[j]) continue;
      double d2 = 0.0;
      for (size_t i = 0; i < decoded[k].s.size(); ++i) {
        const double d = decoded[k].s[i] - truths[j].s[i];
        d2 += d * d;
      }
      if (d2 < best) {
        best = d2;
        pick = static_cast<int>(j);
      }
    }
    assign[k] = pick;
    used[pick] = true;
  }
  return assign;
}

MetricsReport evaluate_cases(const Environment& env,
                             std::span<const EvalCase> cases,
                             const attack::TransitionModel* model) {
  MetricsReport rep;
  rep.env = env_name(env.spec());

  double mse_s = 0.0, mse_r = 0.0, gme_sum = 0.0, psnr_sum = 0.0, ssim_sum = 0.0;
  int pair_count = 0, invalid_r = 0;
  std::vector<envs::Action> pred_actions, true_actions;
  std::vector<metrics::TransitionSample> te_samples;

  for (const EvalCase& ec : cases) {
    const auto& decoded = ec.result->decoded;
    const auto assign = greedy_match(decoded, ec.truths);
    for (size_t k = 0; k < decoded.size(); ++k) {
      const Transition& truth = ec.truths[assign[k]];
      mse_s += metrics::mse(decoded[k].s, truth.s);
      const double dr = decoded[k].r - truth.r;
      mse_r += dr * dr;
      pred_actions.push_back(decoded[k].a);
      true_actions.push_back(truth.a);
      if (decoded[k].r < env.spec().reward_min - kInvalidRewardTol ||
          decoded[k].r > env.spec().reward_max + kInvalidRewardTol) {
        ++invalid_r;
      }
      te_samples.push_back(metrics::TransitionSample{
          decoded[k].s, env.encode_action(decoded[k].a), decoded[k].s_next});
      if (env.spec().kind == envs::EnvKind::PixelGrid) {
        psnr_sum += metrics::psnr(decoded[k].s, truth.s);
        ssim_sum += metrics::ssim(decoded[k].s, truth.s, envs::kPixelSide,
                                  envs::kPixelSide);
      }
      ++pair_count;
    }
    gme_sum += ec.result->gme;
  }

  rep.values["mse_state"] = mse_s / pair_count;
  rep.values["mse_reward"] = mse_r / pair_count;
  rep.values["ra"] = metrics::recovery_accuracy(pred_actions, true_actions);
  rep.values["gme"] = gme_sum / static_cast<double>(cases.size());
  rep.values["invalid_r_ratio"] = static_cast<double>(invalid_r) / pair_count;
  rep.n_evaluated = static_cast<int>(
      std::round(rep.values["ra"] * static_cast<double>(pair_count)));
  rep.m_total = pair_count;
  if (env.spec().kind == envs::EnvKind::PixelGrid) {
    rep.values["psnr"] = psnr_sum / pair_count;
    rep.values["ssim"] = ssim_sum / pair_count;
  }

  // TE against true dynamics when they are deterministic, else the model.
  const bool true_dyn = env.spec().kind == envs::EnvKind::PointMass ||
                        env.spec().grid.slip == 0.0;
  metrics::DynamicsFn fn;
  if (true_dyn) {
    fn = [&env](const Vec& s, const Vec& a_enc) {
      envs::Action a;
      if (env.spec().discrete_actions()) {
        int best = 0;
        for (size_t i = 1; i < a_enc.size(); ++i) {
          if (a_enc[i] > a_enc[best]) best = static_cast<int>(i);
        }
        a = envs::Action{best, {}};
      } else {
        a = envs::Action{-1, a_enc};
      }
      return *env.true_next_encoded(s, a);
    };
    rep.values["te_vs_model"] = 0.0;
  } else if (model) {
    fn = [model](const Vec& s, const Vec& a_enc) {
      return attack::model_predict(*model, s, a_enc);
    };
    rep.values["te_vs_model"] = 1.0;
  }
  if (fn) rep.values["te"] = metrics::transition_error(te_samples, fn);
  return rep;
}

attack::RegWeights variant_weights(const std::string& variant,
                                   const attack::RegWeights& base) {
  attack::RegWeights w = base;
  if (variant == "GIA") {
    w.alpha = w.beta = w.gamma_dyn = 0.0;
  } else if (variant == "GIA-SR") {
    w.beta = w.gamma_dyn = 0.0;
  } else if (variant == "GIA-RC") {
    w.alpha = w.gamma_dyn = 0.0;
  } else if (variant == "GIA-DC") {
    w.alpha = w.beta = 0.0;
  } else if (variant != "RGIA") {
    throw ConfigError("unknown ablation variant: " + variant);
  }
  return w;
}

std::vector<AttackCase> build_cases(const World& w, const ExperimentConfig& cfg,
                                    const std::vector<Transition>& targets) {
  std::vector<AttackCase> cases;
  for (const Transition& t : targets) {
    AttackCase c;
    c.snapshot = w.snapshot;
    c.packet = frl::make_packet(w.snapshot.net, w.snapshot.target, w.env,
                                std::span<const Transition>(&t, 1),
                                w.env.spec().gamma, 0, cfg.snapshot_rounds);
    cases.push_back(std::move(c));
  }
  return cases;
}

// Multistart over a variant, evaluated against the per-case ground truths.
struct VariantOutcome {
  attack::MultistartResult ms;
  MetricsReport report;
};

VariantOutcome run_variant(const World& w, const ExperimentConfig& cfg,
                           const std::vector<AttackCase>& cases,
                           const std::vector<Transition>& targets,
                           const attack::RegWeights& weights, uint64_t seed,
                           uint64_t arm_nonce) {
  VariantOutcome out;
  out.ms = attack::multistart_analysis(
      cases, w.env, cfg.attack.k_starts, weights, &w.prior, &w.model,
      cfg.attack.opt, DetRng::mix(seed, 0x3117, arm_nonce));

  std::vector<EvalCase> evals;
  for (size_t ci = 0; ci < cases.size(); ++ci) {
    for (const auto& run : out.ms.runs[ci]) {
      evals.push_back(EvalCase{&run, {targets[ci]}});
    }
  }
  out.report = evaluate_cases(w.env, evals, &w.model);

  double ed = 0.0, cd = 0.0, ss = 0.0;
  bool ss_defined = true;
  for (const auto& row : out.ms.rows) {
    ed += row.ed;
    cd += row.cd;
    ss += row.ss;
    ss_defined = ss_defined && row.ss_defined;
  }
  const double n = static_cast<double>(out.ms.rows.size());
  out.report.values["ed"] = ed / n;
  out.report.values["cd"] = cd / n;
  if (ss_defined) out.report.values["ss"] = ss / n;
  return out;
}

double mean_wall_time(const attack::MultistartResult& ms) {
  double acc = 0.0;
  int n = 0;
  for (const auto& runs : ms.runs) {
    for (const auto& r : runs) {
      acc += r.wall_time_s;
      ++n;
    }
  }
  return acc / n;
}

}  // namespace

metrics::MetricsReport evaluate_reconstructions(
    const Environment& env, std::span<const EvalInput> pairs,
    const attack::TransitionModel* model) {
  std::vector<EvalCase> cases;
  for (const EvalInput& p : pairs) {
    cases.push_back(EvalCase{p.result, {*p.truth}});
  }
  return evaluate_cases(env, cases, model);
}

std::vector<ReportRow> run_ablation(const ExperimentConfig& cfg) {
  if (cfg.variants.empty()) throw ConfigError("ablate: variant list is empty");
  std::vector<ReportRow> rows;
  for (uint64_t seed : cfg.seeds) {
    const World w = build_world(cfg, seed);
    const auto targets = pick_attack_transitions(w.dataset, w.env,
                                                 cfg.packets_per_seed,
                                                 DetRng::mix(seed, 0xAB1A7E));
    const auto cases = build_cases(w, cfg, targets);
    for (size_t vi = 0; vi < cfg.variants.size(); ++vi) {
      const auto& variant = cfg.variants[vi];
      const auto weights = variant_weights(variant, cfg.attack.weights);
      VariantOutcome out = run_variant(w, cfg, cases, targets, weights, seed, vi);
      out.report.method = variant;
      out.report.seed = seed;
      out.report.config_hash = cfg.config_hash();
      out.report.values["wall_time_s"] = mean_wall_time(out.ms);
      rows.push_back(ReportRow{"ablate", std::move(out.report)});
    }
  }
  return rows;
}

std::vector<ReportRow> run_sensitivity(const ExperimentConfig& cfg) {
  if (cfg.weight_grid.empty()) throw ConfigError("sensitivity: empty grid");
  const std::string& axis = cfg.sensitivity_axis;
  if (axis != "alpha" && axis != "beta" && axis != "gamma") {
    throw ConfigError("sensitivity: axis must be alpha|beta|gamma");
  }
  std::vector<ReportRow> rows;
  for (uint64_t seed : cfg.seeds) {
    const World w = build_world(cfg, seed);
    const auto targets = pick_attack_transitions(w.dataset, w.env,
                                                 cfg.packets_per_seed,
                                                 DetRng::mix(seed, 0x5E15));
    const auto cases = build_cases(w, cfg, targets);
    for (size_t gi = 0; gi < cfg.weight_grid.size(); ++gi) {
      const double v = cfg.weight_grid[gi];
      attack::RegWeights weights = cfg.attack.weights;
      if (axis == "alpha") weights.alpha = v;
      if (axis == "beta") weights.beta = v;
      if (axis == "gamma") weights.gamma_dyn = v;
      VariantOutcome out = run_variant(w, cfg, cases, targets, weights, seed, gi + 100);
      out.report.method = axis;
      out.report.seed = seed;
      out.report.config_hash = cfg.config_hash();
      out.report.values["arm_value"] = v;
      out.report.values["wall_time_s"] = mean_wall_time(out.ms);
      rows.push_back(ReportRow{"sensitivity", std::move(out.report)});
    }
  }
  return rows;
}

std::vector<ReportRow> run_defense_sweep(const ExperimentConfig& cfg) {
  if (cfg.variance_grid.empty()) throw ConfigError("defense-sweep: empty grid");
  if (cfg.noise_kinds.empty()) throw ConfigError("defense-sweep: no noise kinds");
  std::vector<ReportRow> rows;
  for (const std::string& kind : cfg.noise_kinds) {
    defenses::DefenseKind dk;
    if (kind == "gaussian") {
      dk = defenses::DefenseKind::Gaussian;
    } else if (kind == "laplace") {
      dk = defenses::DefenseKind::Laplace;
    } else {
      throw ConfigError("defense-sweep: unknown noise kind " + kind);
    }
    for (size_t vi = 0; vi < cfg.variance_grid.size(); ++vi) {
      const double variance = cfg.variance_grid[vi];
      for (uint64_t seed : cfg.seeds) {
        defenses::DefenseSpec spec;
        spec.kind = dk;
        spec.variance = variance;
        spec.seed = DetRng::mix(seed, 0xD1F, vi);
        const frl::DefenseHook hook = defenses::make_defense_hook(spec);
        const World w = build_world(cfg, seed, &hook);

        const auto targets = pick_attack_transitions(
            w.dataset, w.env, cfg.packets_per_seed, DetRng::mix(seed, 0xDEF5));
        std::vector<ReconstructionResult> results;
        std::vector<EvalCase> evals;
        results.reserve(targets.size());
        DetRng prng(DetRng::mix(spec.seed, 0xBEEF));
        for (size_t ti = 0; ti < targets.size(); ++ti) {
          AttackCase c;
          c.snapshot = w.snapshot;
          c.packet = defenses::apply_defense(
              frl::make_packet(w.snapshot.net, w.snapshot.target, w.env,
                               std::span<const Transition>(&targets[ti], 1),
                               w.env.spec().gamma, 0, cfg.snapshot_rounds),
              spec, prng);
          attack::AttackProblem p;
          p.env = &w.env;
          p.snapshot = &c.snapshot;
          p.packet = &c.packet;
          p.weights = cfg.attack.weights;
          p.prior = &w.prior;
          p.model = &w.model;
          results.push_back(attack::rgia_attack(p, cfg.attack.opt,
                                                DetRng::mix(seed, 0xA7, vi, ti)));
        }
        for (size_t ti = 0; ti < targets.size(); ++ti) {
          evals.push_back(EvalCase{&results[ti], {targets[ti]}});
        }
        MetricsReport rep = evaluate_cases(w.env, evals, &w.model);
        rep.method = kind;
        rep.seed = seed;
        rep.config_hash = cfg.config_hash();
        rep.values["arm_value"] = variance;
        rep.values["final_td_loss"] = w.final_td_loss;
        rep.values["eval_return"] = frl::eval_greedy_return(
            w.env, w.snapshot.net, cfg.federation.eval_episodes,
            cfg.federation.eval_horizon, DetRng::mix(seed, 0xEE, vi));
        double wall = 0.0;
        for (const auto& r : results) wall += r.wall_time_s;
        rep.values["wall_time_s"] = wall / results.size();
        rows.push_back(ReportRow{"defense-sweep", std::move(rep)});
      }
    }
  }
  return rows;
}

std::vector<ReportRow> run_batch_sweep(const ExperimentConfig& cfg) {
  if (cfg.batch_grid.empty()) throw ConfigError("batch-sweep: empty batch list");
  std::vector<ReportRow> rows;
  for (uint64_t seed : cfg.seeds) {
    const World w = build_world(cfg, seed);
    for (size_t bi = 0; bi < cfg.batch_grid.size(); ++bi) {
      const int batch = cfg.batch_grid[bi];
      if (batch < 1) throw ConfigError("batch-sweep: batch sizes must be >= 1");
      const auto targets = pick_attack_transitions(w.dataset, w.env, batch,
                                                   DetRng::mix(seed, 0xBA7C4));
      AttackCase c;
      c.snapshot = w.snapshot;
      c.packet = frl::make_packet(w.snapshot.net, w.snapshot.target, w.env,
                                  targets, w.env.spec().gamma, 0,
                                  cfg.snapshot_rounds);
      attack::AttackProblem p;
      p.env = &w.env;
      p.snapshot = &c.snapshot;
      p.packet = &c.packet;
      p.weights = cfg.attack.weights;
      p.prior = &w.prior;
      p.model = &w.model;
      const ReconstructionResult res =
          attack::rgia_attack(p, cfg.attack.opt, DetRng::mix(seed, 0xB2, bi));
      EvalCase ec{&res, targets};
      MetricsReport rep = evaluate_cases(w.env, std::span<const EvalCase>(&ec, 1),
                                         &w.model);
      rep.method = "batch";
      rep.seed = seed;
      rep.config_hash = cfg.config_hash();
      rep.values["arm_value"] = static_cast<double>(batch);
      rep.values["wall_time_s"] = res.wall_time_s;
      rows.push_back(ReportRow{"batch-sweep", std::move(rep)});
    }
  }
  return rows;
}

namespace {

Vec truth_consistency_state(const Environment& env, const Transition& t) {
  if (env.spec().kind == envs::EnvKind::GridLake) {
    const int cols = env.spec().grid.cols;
    const int cs = env.decode_cell(t.s);
    const int cn = env.decode_cell(t.s_next);
    return {static_cast<double>(cs / cols), static_cast<double>(cs % cols),
            static_cast<double>(cn / cols), static_cast<double>(cn % cols)};
  }
  Vec out = t.s;
  out.insert(out.end(), t.s_next.begin(), t.s_next.end());
  return out;
}

Vec run_consistency_state(const Environment& env, const ReconstructionResult& r) {
  if (env.spec().kind == envs::EnvKind::GridLake) {
    const int cols = env.spec().grid.cols;
    Vec out;
    for (const auto& d : r.decoded) {
      const int cs = env.decode_cell(d.s);
      const int cn = env.decode_cell(d.s_next);
      out.push_back(static_cast<double>(cs / cols));
      out.push_back(static_cast<double>(cs % cols));
      out.push_back(static_cast<double>(cn / cols));
      out.push_back(static_cast<double>(cn % cols));
    }
    return out;
  }
  return attack::consistency_state(r);
}

}  // namespace

std::vector<ReportRow> run_multistart(const ExperimentConfig& cfg) {
  if (cfg.attack.k_starts < 2) throw ConfigError("multistart: k_starts must be >= 2");
  std::vector<ReportRow> rows;
  std::string consistency_csv = "method,packet_id,ED,SS,CD\n";
  std::string pca_csv = "packet_id,method,start,pc1,pc2\n";

  for (uint64_t seed : cfg.seeds) {
    const World w = build_world(cfg, seed);
    const auto targets = pick_attack_transitions(w.dataset, w.env,
                                                 cfg.packets_per_seed,
                                                 DetRng::mix(seed, 0x3A127));
    const auto cases = build_cases(w, cfg, targets);

    std::map<std::string, attack::MultistartResult> by_method;
    for (const std::string method : {std::string("RGIA"), std::string("GIA")}) {
      const auto weights = variant_weights(method, cfg.attack.weights);
      VariantOutcome out = run_variant(w, cfg, cases, targets, weights, seed,
                                       method == "RGIA" ? 0 : 1);
      for (const auto& row : out.ms.rows) {
        consistency_csv += method + "," + std::to_string(row.packet_id) + "," +
                           format_double(row.ed) + "," +
                           (row.ss_defined ? format_double(row.ss) : "") + "," +
                           format_double(row.cd) + "\n";
      }
      out.report.method = method;
      out.report.seed = seed;
      out.report.config_hash = cfg.config_hash();
      out.report.values["wall_time_s"] = mean_wall_time(out.ms);
      rows.push_back(ReportRow{"multistart", std::move(out.report)});
      by_method.emplace(method, std::move(out.ms));
    }

    // Shared 2-D projection of both methods' reconstructed state pairs plus
    // the true transition, per packet.
    for (size_t ci = 0; ci < cases.size(); ++ci) {
      std::vector<Vec> pts;
      std::vector<std::pair<std::string, int>> tags;
      for (const auto& [method, ms] : by_method) {
        for (size_t si = 0; si < ms.runs[ci].size(); ++si) {
          pts.push_back(run_consistency_state(w.env, ms.runs[ci][si]));
          tags.emplace_back(method, static_cast<int>(si));
        }
      }
      pts.push_back(truth_consistency_state(w.env, targets[ci]));
      tags.emplace_back("true", 0);
      const auto pca = attack::pca_project(pts, std::min<int>(2, pts[0].size()));
      for (size_t i = 0; i < pts.size(); ++i) {
        const double pc2 = pca.projected[i].size() > 1 ? pca.projected[i][1] : 0.0;
        pca_csv += std::to_string(ci) + "," + tags[i].first + "," +
                   std::to_string(tags[i].second) + "," +
                   format_double(pca.projected[i][0]) + "," +
                   format_double(pc2) + "\n";
      }
    }
  }

  write_file(cfg.out_dir, "consistency.csv", consistency_csv);
  write_file(cfg.out_dir, "pca.csv", pca_csv);
  return rows;
}

std::vector<ReportRow> run_prior_study(const ExperimentConfig& cfg) {
  if (cfg.prior_sizes.empty()) throw ConfigError("prior-study: empty size list");
  std::vector<ReportRow> rows;
  for (uint64_t seed : cfg.seeds) {
    const World w = build_world(cfg, seed);
    const auto targets = pick_attack_transitions(w.dataset, w.env,
                                                 cfg.packets_per_seed,
                                                 DetRng::mix(seed, 0x9812));
    const auto cases = build_cases(w, cfg, targets);

    // Arm 0: no state prior at all (alpha = 0); then each prior size.
    for (size_t ai = 0; ai <= cfg.prior_sizes.size(); ++ai) {
      attack::RegWeights weights = cfg.attack.weights;
      attack::StatePrior prior = w.prior;
      std::string method;
      double arm_value = 0.0;
      if (ai == 0) {
        weights.alpha = 0.0;
        method = "no-prior";
      } else {
        int size = cfg.prior_sizes[ai - 1];
        if (size == -1) size = static_cast<int>(w.dataset.size());
        prior = attack::estimate_state_prior(w.dataset, size,
                                             DetRng::mix(seed, 0x9813, ai));
        method = "prior";
        arm_value = static_cast<double>(size);
      }

      attack::MultistartResult ms = attack::multistart_analysis(
          cases, w.env, cfg.attack.k_starts, weights, &prior, &w.model,
          cfg.attack.opt, DetRng::mix(seed, 0x3117, 500 + ai));
      std::vector<EvalCase> evals;
      for (size_t ci = 0; ci < cases.size(); ++ci) {
        for (const auto& run : ms.runs[ci]) {
          evals.push_back(EvalCase{&run, {targets[ci]}});
        }
      }
      MetricsReport rep = evaluate_cases(w.env, evals, &w.model);
      rep.method = method;
      rep.seed = seed;
      rep.config_hash = cfg.config_hash();
      rep.values["arm_value"] = arm_value;
      rep.values["wall_time_s"] = mean_wall_time(ms);
      rows.push_back(ReportRow{"prior-study", std::move(rep)});
    }
  }
  return rows;
}

std::vector<ReportRow> run_transition_study(const ExperimentConfig& cfg) {
  if (cfg.model_data_sizes.empty()) {
    throw ConfigError("transition-study: empty size list");
  }
  std::vector<ReportRow> rows;
  for (uint64_t seed : cfg.seeds) {
    const World w = build_world(cfg, seed);
    const auto targets = pick_attack_transitions(w.dataset, w.env,
                                                 cfg.packets_per_seed,
                                                 DetRng::mix(seed, 0x7171));
    const auto cases = build_cases(w, cfg, targets);

    for (size_t ai = 0; ai < cfg.model_data_sizes.size(); ++ai) {
      int size = cfg.model_data_sizes[ai];
      attack::RegWeights weights = cfg.attack.weights;
      attack::TransitionModel model = w.model;
      std::string method = "model";
      if (size == 0) {
        weights.gamma_dyn = 0.0;  // dynamics regularizer disabled
        method = "no-model";
      } else {
        if (size == -1) size = static_cast<int>(w.dataset.size());
        const auto ts = sample_transitions(w.dataset, size, DetRng::mix(seed, 0x7172, ai));
        model = attack::train_transition_model(
            w.env, ts, cfg.attack.model_hidden, cfg.attack.model_epochs,
            DetRng::mix(seed, 0x7173, ai), cfg.attack.model_lr);
      }

      attack::MultistartResult ms = attack::multistart_analysis(
          cases, w.env, cfg.attack.k_starts, weights, &w.prior, &model,
          cfg.attack.opt, DetRng::mix(seed, 0x3117, 900 + ai));
      std::vector<EvalCase> evals;
      for (size_t ci = 0; ci < cases.size(); ++ci) {
        for (const auto& run : ms.runs[ci]) {
          evals.push_back(EvalCase{&run, {targets[ci]}});
        }
      }
      MetricsReport rep = evaluate_cases(w.env, evals, &model);
      rep.method = method;
      rep.seed = seed;
      rep.config_hash = cfg.config_hash();
      rep.values["arm_value"] = static_cast<double>(size);
      rep.values["wall_time_s"] = mean_wall_time(ms);
      rows.push_back(ReportRow{"transition-study", std::move(rep)});
    }
  }
  return rows;
}

void run_train(const ExperimentConfig& cfg) {
  Environment env(cfg.env);
  envs::Dataset dataset =
      cfg.dataset_path.empty()
          ? envs::generate_dataset(env, envs::PolicyTag::Uniform, cfg.dataset_n,
                                   cfg.dataset_seed)
          : envs::load_dataset(cfg.dataset_path);

  std::vector<envs::Dataset> shards(cfg.federation.n_agents);
  for (auto& sh : shards) {
    sh.env = dataset.env;
    sh.seed = dataset.seed;
  }
  for (size_t i = 0; i < dataset.transitions.size(); ++i) {
    shards[i % cfg.federation.n_agents].transitions.push_back(dataset.transitions[i]);
  }

  frl::CollectingTap tap;
  std::optional<frl::DefenseHook> hook;
  if (cfg.defense.kind != defenses::DefenseKind::None) {
    hook = defenses::make_defense_hook(cfg.defense);
  }
  const frl::FederationResult fed = frl::run_federation(
      env, cfg.federation, shards, hook ? &*hook : nullptr, &tap, &cfg.qnet_hidden);

  write_file(cfg.out_dir, "log.csv", frl::training_log_csv(fed.log));
  write_file(cfg.out_dir, "net.json", frl::qnet_to_json(fed.net));
  write_file(cfg.out_dir, "target_net.json", frl::qnet_to_json(fed.target_net));
  write_file(cfg.out_dir, "dataset.json", envs::dataset_to_json(dataset));
  if (!tap.packets().empty()) {
    write_file(cfg.out_dir, "packet_sample.json",
               frl::packet_to_json(tap.packets().back()));
  }
}

void run_attack_cmd(const ExperimentConfig& cfg) {
  if (cfg.packet_path.empty() || cfg.net_path.empty()) {
    throw ConfigError("attack: packet_path and net_path are required");
  }
  Environment env(cfg.env);
  NetSnapshot snap;
  snap.net = frl::qnet_from_json(read_file(cfg.net_path));
  snap.target = cfg.target_net_path.empty()
                    ? snap.net
                    : frl::qnet_from_json(read_file(cfg.target_net_path));
  const frl::GradientPacket packet = frl::load_packet(cfg.packet_path);

  attack::StatePrior prior;
  attack::TransitionModel model;
  const bool needs_prior = cfg.attack.weights.alpha > 0.0;
  const bool needs_model = cfg.attack.weights.gamma_dyn > 0.0;
  if (needs_prior || needs_model) {
    if (cfg.dataset_path.empty()) {
      throw ConfigError("attack: dataset_path required for the active regularizers");
    }
    const envs::Dataset ds = envs::load_dataset(cfg.dataset_path);
    prior = attack::estimate_state_prior_fraction(ds, cfg.attack.prior_fraction,
                                                  cfg.attack.prior_floor,
                                                  cfg.seeds.front());
    const int model_count = cfg.attack.model_data < 0
                                ? prior.n_samples
                                : std::min<int>(cfg.attack.model_data,
                                                static_cast<int>(ds.size()));
    const auto ts = sample_transitions(ds, model_count,
                                       DetRng::mix(cfg.seeds.front(), 0xF00D));
    model = attack::train_transition_model(env, ts, cfg.attack.model_hidden,
                                           cfg.attack.model_epochs,
                                           DetRng::mix(cfg.seeds.front(), 0x170D),
                                           cfg.attack.model_lr);
  }

  attack::AttackProblem p;
  p.env = &env;
  p.snapshot = &snap;
  p.packet = &packet;
  p.weights = cfg.attack.weights;
  p.prior = needs_prior ? &prior : nullptr;
  p.model = needs_model ? &model : nullptr;
  const ReconstructionResult res =
      attack::rgia_attack(p, cfg.attack.opt, cfg.seeds.front());
  write_file(cfg.out_dir, "result.json",
             attack::result_to_json(res, cfg.config_hash()));
  if (res.aborted) throw NumericError("attack aborted: " + res.diagnostic);
}

void run_report_cmd(const ExperimentConfig& cfg) {
  if (cfg.rows_csv_path.empty()) throw ConfigError("report: rows_csv_path required");
  const auto rows = parse_rows_csv(read_file(cfg.rows_csv_path));
  emit_report(rows, cfg.out_dir, cfg.deterministic);
}

void run(const ExperimentConfig& cfg) {
  const std::string& tag = cfg.experiment;
  std::vector<ReportRow> rows;
  if (tag == "train") {
    run_train(cfg);
    return;
  } else if (tag == "attack") {
    run_attack_cmd(cfg);
    return;
  } else if (tag == "report") {
    run_report_cmd(cfg);
    return;
  } else if (tag == "ablate") {
    rows = run_ablation(cfg);
  } else if (tag == "sensitivity") {
    rows = run_sensitivity(cfg);
  } else if (tag == "defense-sweep") {
    rows = run_defense_sweep(cfg);
  } else if (tag == "batch-sweep") {
    rows = run_batch_sweep(cfg);
  } else if (tag == "multistart") {
    rows = run_multistart(cfg);
  } else if (tag == "prior-study") {
    rows = run_prior_study(cfg);
  } else if (tag == "transition-study") {
    rows = run_transition_study(cfg);
  } else {
    throw ConfigError("unknown experiment tag: " + tag);
  }
  emit_report(rows, cfg.out_dir, cfg.deterministic);
}

std::string rows_csv_text(const std::vector<ReportRow>& rows, bool deterministic) {
  std::string out = metrics::report_csv_header();
  for (const ReportRow& r : rows) {
    MetricsReport rep = r.report;
    if (deterministic) rep.values.erase("wall_time_s");
    out += metrics::report_csv_row(r.experiment, rep);
  }
  return out;
}

void emit_report(const std::vector<ReportRow>& rows, const std::string& out_dir,
                 bool deterministic) {
  write_file(out_dir, "rows.csv", rows_csv_text(rows, deterministic));

  // Long format for plotting: one (row, metric) pair per line.
  std::string long_csv = "experiment,env,method,seed,metric,value\n";
  for (const ReportRow& r : rows) {
    for (const std::string& col : metrics::report_columns()) {
      auto it = r.report.values.find(col);
      if (it == r.report.values.end()) continue;
      if (deterministic && col == "wall_time_s") continue;
      long_csv += r.experiment + "," + r.report.env + "," + r.report.method +
                  "," + std::to_string(r.report.seed) + "," + col + "," +
                  format_double(it->second) + "\n";
    }
  }
  write_file(out_dir, "long.csv", long_csv);

  // Summary: mean/stddev per (experiment, env, method, metric).
  struct Acc {
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
  };
  std::map<std::string, std::map<std::string, Acc>> groups;
  for (const ReportRow& r : rows) {
    const std::string key = r.experiment + "|" + r.report.env + "|" + r.report.method;
    for (const auto& [metric, value] : r.report.values) {
      if (deterministic && metric == "wall_time_s") continue;
      Acc& a = groups[key][metric];
      a.sum += value;
      a.sum2 += value * value;
      ++a.n;
    }
  }
  json summary;
  for (const auto& [key, metrics_map] : groups) {
    json g;
    for (const auto& [metric, a] : metrics_map) {
      const double mean = a.sum / a.n;
      const double var = a.n > 1 ? std::max(0.0, (a.sum2 - a.n * mean * mean) / (a.n - 1))
                                 : 0.0;
      g[metric] = {{"mean", mean}, {"stddev", std::sqrt(var)}, {"n", a.n}};
    }
    summary[key] = std::move(g);
  }
  write_file(out_dir, "summary.json", summary.dump(2) + "\n");
}

std::vector<ReportRow> parse_rows_csv(const std::string& text) {
  std::vector<ReportRow> rows;
  std::istringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw ConfigError("rows csv: empty file");
  const auto& cols = metrics::report_columns();
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    cells.resize(cols.size());
    ReportRow row;
    for (size_t i = 0; i < cols.size(); ++i) {
      const std::string& c = cols[i];
      const std::string& v = cells[i];
      if (c == "experiment") {
        row.experiment = v;
      } else if (c == "env") {
        row.report.env = v;
      } else if (c == "method") {
        row.report.method = v;
      } else if (c == "seed") {
        row.report.seed = v.empty() ? 0 : std::stoull(v);
      } else if (c == "config_hash") {
        row.report.config_hash = v;
      } else if (c == "version") {
        // informational
      } else if (c == "n_eval") {
        row.report.n_evaluated = v.empty() ? 0 : std::stoi(v);
      } else if (c == "m_total") {
        row.report.m_total = v.empty() ? 0 : std::stoi(v);
      } else if (!v.empty()) {
        row.report.values[c] = std::stod(v);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void parse_attack_settings(const json& j, AttackSettings& a) {
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    a.weights.alpha = w.value("alpha", a.weights.alpha);
    a.weights.beta = w.value("beta", a.weights.beta);
    a.weights.gamma_dyn = w.value("gamma_dyn", a.weights.gamma_dyn);
    a.weights.lambda = w.value("lambda", a.weights.lambda);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    const std::string kind = o.value("kind", "adam");
    if (kind == "adam") {
      a.opt.kind = attack::OptConfig::Kind::Adam;
    } else if (kind == "gd") {
      a.opt.kind = attack::OptConfig::Kind::Gd;
    } else {
      throw ConfigError("unknown optimizer kind: " + kind);
    }
    a.opt.step = o.value("step", a.opt.step);
    a.opt.iterations = o.value("iterations", a.opt.iterations);
  }
  a.k_starts = j.value("k_starts", a.k_starts);
  a.prior_fraction = j.value("prior_fraction", a.prior_fraction);
  a.prior_floor = j.value("prior_floor", a.prior_floor);
  a.model_data = j.value("model_data", a.model_data);
  if (j.contains("model_hidden")) {
    a.model_hidden = j.at("model_hidden").get<std::vector<int>>();
  }
  a.model_epochs = j.value("model_epochs", a.model_epochs);
  a.model_lr = j.value("model_lr", a.model_lr);
}

json attack_settings_to_json(const AttackSettings& a) {
  json j;
  j["weights"] = {{"alpha", a.weights.alpha},
                  {"beta", a.weights.beta},
                  {"gamma_dyn", a.weights.gamma_dyn},
                  {"lambda", a.weights.lambda}};
  j["optimizer"] = {
      {"kind", a.opt.kind == attack::OptConfig::Kind::Adam ? "adam" : "gd"},
      {"step", a.opt.step},
      {"iterations", a.opt.iterations}};
  j["k_starts"] = a.k_starts;
  j["prior_fraction"] = a.prior_fraction;
  j["prior_floor"] = a.prior_floor;
  j["model_data"] = a.model_data;
  j["model_hidden"] = a.model_hidden;
  j["model_epochs"] = a.model_epochs;
  j["model_lr"] = a.model_lr;
  return j;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    ExperimentConfig cfg;
    cfg.experiment = j.value("experiment", cfg.experiment);
    if (j.contains("env")) cfg.env = envs::env_spec_from_json_text(j.at("env").dump());
    if (j.contains("federation")) {
      const json& f = j.at("federation");
      cfg.federation.n_agents = f.value("n_agents", cfg.federation.n_agents);
      cfg.federation.rounds = f.value("rounds", cfg.federation.rounds);
      cfg.federation.local_batch_size =
          f.value("local_batch_size", cfg.federation.local_batch_size);
      cfg.federation.learning_rate =
          f.value("learning_rate", cfg.federation.learning_rate);
      cfg.federation.aggregation = f.value("aggregation", cfg.federation.aggregation);
      cfg.federation.seed = f.value("seed", cfg.federation.seed);
      cfg.federation.target_refresh =
          f.value("target_refresh", cfg.federation.target_refresh);
      cfg.federation.eval_every = f.value("eval_every", cfg.federation.eval_every);
      cfg.federation.eval_episodes =
          f.value("eval_episodes", cfg.federation.eval_episodes);
      cfg.federation.eval_horizon =
          f.value("eval_horizon", cfg.federation.eval_horizon);
      cfg.federation.online_collect =
          f.value("online_collect", cfg.federation.online_collect);
      cfg.federation.collect_per_round =
          f.value("collect_per_round", cfg.federation.collect_per_round);
      cfg.federation.epsilon = f.value("epsilon", cfg.federation.epsilon);
    }
    if (j.contains("qnet_hidden")) {
      cfg.qnet_hidden = j.at("qnet_hidden").get<std::vector<int>>();
    }
    cfg.dataset_n = j.value("dataset_n", cfg.dataset_n);
    cfg.dataset_seed = j.value("dataset_seed", cfg.dataset_seed);
    cfg.snapshot_rounds = j.value("snapshot_rounds", cfg.snapshot_rounds);
    if (j.contains("attack")) parse_attack_settings(j.at("attack"), cfg.attack);
    if (j.contains("defense")) {
      cfg.defense = defenses::defense_from_json_text(j.at("defense").dump());
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (cfg.seeds.empty()) throw ConfigError("seeds list must be non-empty");
    cfg.packets_per_seed = j.value("packets_per_seed", cfg.packets_per_seed);
    if (j.contains("variance_grid")) {
      cfg.variance_grid = j.at("variance_grid").get<std::vector<double>>();
    }
    if (j.contains("noise_kinds")) {
      cfg.noise_kinds = j.at("noise_kinds").get<std::vector<std::string>>();
    }
    if (j.contains("batch_grid")) {
      cfg.batch_grid = j.at("batch_grid").get<std::vector<int>>();
    }
    if (j.contains("weight_grid")) {
      cfg.weight_grid = j.at("weight_grid").get<std::vector<double>>();
    }
    cfg.sensitivity_axis = j.value("sensitivity_axis", cfg.sensitivity_axis);
    if (j.contains("prior_sizes")) {
      cfg.prior_sizes = j.at("prior_sizes").get<std::vector<int>>();
    }
    if (j.contains("model_data_sizes")) {
      cfg.model_data_sizes = j.at("model_data_sizes").get<std::vector<int>>();
    }
    if (j.contains("variants")) {
      cfg.variants = j.at("variants").get<std::vector<std::string>>();
    }
    cfg.packet_path = j.value("packet_path", cfg.packet_path);
    cfg.net_path = j.value("net_path", cfg.net_path);
    cfg.target_net_path = j.value("target_net_path", cfg.target_net_path);
    cfg.dataset_path = j.value("dataset_path", cfg.dataset_path);
    cfg.rows_csv_path = j.value("rows_csv_path", cfg.rows_csv_path);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.deterministic = j.value("deterministic", cfg.deterministic);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  j["env"] = json::parse(envs::env_spec_to_json(cfg.env));
  j["federation"] = {{"n_agents", cfg.federation.n_agents},
                     {"rounds", cfg.federation.rounds},
                     {"local_batch_size", cfg.federation.local_batch_size},
                     {"learning_rate", cfg.federation.learning_rate},
                     {"aggregation", cfg.federation.aggregation},
                     {"seed", cfg.federation.seed},
                     {"target_refresh", cfg.federation.target_refresh},
                     {"eval_every", cfg.federation.eval_every},
                     {"eval_episodes", cfg.federation.eval_episodes},
                     {"eval_horizon", cfg.federation.eval_horizon},
                     {"online_collect", cfg.federation.online_collect},
                     {"collect_per_round", cfg.federation.collect_per_round},
                     {"epsilon", cfg.federation.epsilon}};
  j["qnet_hidden"] = cfg.qnet_hidden;
  j["dataset_n"] = cfg.dataset_n;
  j["dataset_seed"] = cfg.dataset_seed;
  j["snapshot_rounds"] = cfg.snapshot_rounds;
  j["attack"] = attack_settings_to_json(cfg.attack);
  j["defense"] = json::parse(defenses::defense_to_json(cfg.defense));
  j["seeds"] = cfg.seeds;
  j["packets_per_seed"] = cfg.packets_per_seed;
  j["variance_grid"] = cfg.variance_grid;
  j["noise_kinds"] = cfg.noise_kinds;
  j["batch_grid"] = cfg.batch_grid;
  j["weight_grid"] = cfg.weight_grid;
  j["sensitivity_axis"] = cfg.sensitivity_axis;
  j["prior_sizes"] = cfg.prior_sizes;
  j["model_data_sizes"] = cfg.model_data_sizes;
  j["variants"] = cfg.variants;
  j["packet_path"] = cfg.packet_path;
  j["net_path"] = cfg.net_path;
  j["target_net_path"] = cfg.target_net_path;
  j["dataset_path"] = cfg.dataset_path;
  j["rows_csv_path"] = cfg.rows_csv_path;
  j["out_dir"] = cfg.out_dir;
  j["deterministic"] = cfg.deterministic;
  return j.dump();
}

std::string ExperimentConfig::config_hash() const {
  json j = json::parse(config_to_json(*this));
  j.erase("out_dir");
  j.erase("deterministic");
  const std::string canon = j.dump();
  return hash_hex(fnv1a(canon.data(), canon.size()));
}

}  // namespace rgia::experiments
