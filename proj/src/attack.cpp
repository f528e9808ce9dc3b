#include "attack.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "linalg.hpp"

namespace rgia::attack {

using num::MlpSpec;
using num::Tape;

void RegWeights::validate() const {
  if (alpha < 0 || beta < 0 || gamma_dyn < 0 || lambda < 0) {
    throw ConfigError("regularizer weights must be >= 0");
  }
}

StatePrior estimate_state_prior(const Dataset& ds, int count, uint64_t seed) {
  if (count < 1) throw ConfigError("state prior: count must be >= 1");
  if (count > static_cast<int>(ds.size())) {
    throw ConfigError("state prior: count exceeds dataset size");
  }
  // Partial Fisher-Yates: first `count` entries of a seeded shuffle.
  std::vector<size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  DetRng rng(DetRng::mix(seed, 0x9A10A));
  for (int i = 0; i < count; ++i) {
    const size_t j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  StatePrior prior;
  prior.n_samples = count;
  prior.source = "dataset-seed-" + std::to_string(ds.seed);
  prior.mu_s.assign(ds.transitions[0].s.size(), 0.0);
  for (int i = 0; i < count; ++i) {
    const Vec& s = ds.transitions[idx[i]].s;
    for (size_t d = 0; d < s.size(); ++d) prior.mu_s[d] += s[d];
  }
  for (double& x : prior.mu_s) x /= count;
  return prior;
}

StatePrior estimate_state_prior_fraction(const Dataset& ds, double fraction,
                                         int floor_count, uint64_t seed) {
  int count = static_cast<int>(fraction * static_cast<double>(ds.size()));
  count = std::max(count, floor_count);
  count = std::min(count, static_cast<int>(ds.size()));
  return estimate_state_prior(ds, count, seed);
}

namespace {

struct Adam {
  Vec m, v;
  int t = 0;

  void step(Vec& x, const Vec& g, const OptConfig& cfg) {
    if (m.empty()) {
      m.assign(x.size(), 0.0);
      v.assign(x.size(), 0.0);
    }
    ++t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (size_t i = 0; i < x.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      x[i] -= cfg.step * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
};

void optimizer_step(Vec& x, const Vec& g, Adam& adam, const OptConfig& cfg) {
  if (cfg.kind == OptConfig::Kind::Adam) {
    adam.step(x, g, cfg);
  } else {
    for (size_t i = 0; i < x.size(); ++i) x[i] -= cfg.step * g[i];
  }
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 4;
  const int workers = std::min(n, static_cast<int>(hw));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace

TransitionModel train_transition_model(const Environment& env,
                                       std::span<const Transition> prior_data,
                                       const std::vector<int>& hidden_dims,
                                       int epochs, uint64_t seed, double lr,
                                       int batch_size) {
  if (prior_data.empty()) throw ConfigError("transition model: no training data");
  const int sd = env.spec().state_dim();
  const int ad = env.spec().action_dim();

  std::vector<Vec> inputs, outputs;
  inputs.reserve(prior_data.size());
  for (const Transition& t : prior_data) {
    Vec in = t.s;
    const Vec a_enc = env.encode_action(t.a);
    in.insert(in.end(), a_enc.begin(), a_enc.end());
    inputs.push_back(std::move(in));
    outputs.push_back(t.s_next);
  }

  DetRng rng(DetRng::mix(seed, 0x7124A5));
  std::vector<size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = 0; i + 1 < order.size(); ++i) {
    std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
  }
  const size_t n = order.size();
  const size_t n_val = n >= 2 ? std::max<size_t>(1, n / 5) : 0;
  const size_t n_train = n - n_val;

  MlpSpec spec;
  spec.input_dim = sd + ad;
  spec.output_dim = sd;
  spec.hidden_dims = hidden_dims;
  spec.activation = num::Activation::Tanh;

  TransitionModel model;
  model.net = QNetwork::init(spec, DetRng::mix(seed, 0x7124A5, 1));
  model.training_set_size = static_cast<int>(n_train);

  auto batch_loss_builder = [&](std::span<const size_t> batch) {
    return [&, batch](Tape& tape, std::span<const Tape::Idx> params) {
      Tape::Idx acc = -1;
      for (size_t bi : batch) {
        std::vector<Tape::Idx> in(inputs[bi].size());
        for (size_t i = 0; i < in.size(); ++i) in[i] = tape.constant(inputs[bi][i]);
        const auto out = num::mlp_graph(tape, spec, params, in);
        for (int d = 0; d < sd; ++d) {
          const Tape::Idx diff = tape.sub(out[d], tape.constant(outputs[bi][d]));
          const Tape::Idx sq = tape.mul(diff, diff);
          acc = acc < 0 ? sq : tape.add(acc, sq);
        }
      }
      return tape.mul(acc, tape.constant(1.0 / (static_cast<double>(batch.size()) * sd)));
    };
  };

  Adam adam;
  OptConfig opt;
  opt.step = lr;
  for (int ep = 0; ep < epochs; ++ep) {
    // Geometric decay to lr/1000 so the quadratic cases converge tightly
    // instead of oscillating at Adam's step-size floor.
    opt.step = lr * std::pow(1e-3, epochs > 1 ? static_cast<double>(ep) / (epochs - 1)
                                              : 0.0);
    for (size_t i = 0; i + 1 < n_train; ++i) {
      std::swap(order[i], order[i + rng.uniform_index(n_train - i)]);
    }
    for (size_t off = 0; off < n_train; off += batch_size) {
      const size_t take = std::min<size_t>(batch_size, n_train - off);
      std::span<const size_t> batch(order.data() + off, take);
      const Vec g = num::param_grad(model.net, batch_loss_builder(batch));
      if (!all_finite(g)) throw NumericError("transition model training diverged");
      optimizer_step(model.net.params, g, adam, opt);
      if (!all_finite(model.net.params)) {
        throw NumericError("transition model training diverged");
      }
    }
  }

  // Held-out per-coordinate MSE (training split when n == 1).
  double val_acc = 0.0;
  size_t val_count = 0;
  const size_t val_begin = n_val > 0 ? n_train : 0;
  const size_t val_end = n_val > 0 ? n : 1;
  for (size_t k = val_begin; k < val_end; ++k) {
    const size_t bi = order[k];
    const Vec pred = num::forward(model.net, inputs[bi]);
    for (int d = 0; d < sd; ++d) {
      const double diff = pred[d] - outputs[bi][d];
      val_acc += diff * diff;
    }
    ++val_count;
  }
  model.validation_mse = val_acc / (static_cast<double>(val_count) * sd);
  return model;
}

Vec model_predict(const TransitionModel& model, const Vec& s_enc, const Vec& a_enc) {
  Vec in = s_enc;
  in.insert(in.end(), a_enc.begin(), a_enc.end());
  return num::forward(model.net, in);
}

double reg_state(const Vec& s, const StatePrior& prior) {
  if (s.size() != prior.mu_s.size()) throw ShapeError("reg_state: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - prior.mu_s[i];
    acc += d * d;
  }
  return acc;
}

double reg_reward(double r, double r_min, double r_max) {
  if (r_min > r_max) throw ConfigError("reg_reward: r_min > r_max");
  const double over = r - r_max > 0.0 ? r - r_max : 0.0;
  const double under = r_min - r > 0.0 ? r_min - r : 0.0;
  return over * over + under * under;
}

double reg_dynamics(const Vec& s, const Vec& a_enc, const Vec& s_next,
                    const TransitionModel& model) {
  const Vec pred = model_predict(model, s, a_enc);
  if (pred.size() != s_next.size()) throw ShapeError("reg_dynamics: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - s_next[i];
    acc += d * d;
  }
  return acc;
}

std::span<const double> CandidateBatch::state(int k) const {
  return {x.data() + static_cast<size_t>(k) * tuple_stride(),
          static_cast<size_t>(state_dim)};
}

std::span<const double> CandidateBatch::action(int k) const {
  return {x.data() + static_cast<size_t>(k) * tuple_stride() + state_dim,
          static_cast<size_t>(action_dim)};
}

double CandidateBatch::reward(int k) const {
  return x[static_cast<size_t>(k) * tuple_stride() + state_dim + action_dim];
}

std::span<const double> CandidateBatch::next_state(int k) const {
  return {x.data() + static_cast<size_t>(k) * tuple_stride() + state_dim +
              action_dim + 1,
          static_cast<size_t>(state_dim)};
}

CandidateBatch CandidateBatch::init_normal(const Environment& env, int batch,
                                           uint64_t seed) {
  if (batch < 1) throw ConfigError("candidate batch must be >= 1");
  CandidateBatch c;
  c.batch = batch;
  c.state_dim = env.spec().state_dim();
  c.action_dim = env.spec().action_dim();
  c.x.resize(static_cast<size_t>(batch) * c.tuple_stride());
  DetRng rng(DetRng::mix(seed, 0x1417));
  for (double& v : c.x) v = rng.normal();
  return c;
}

namespace {

int argmax_span(std::span<const double> xs) {
  int best = 0;
  for (size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) best = static_cast<int>(i);
  }
  return best;
}

Vec one_hot(int n, int k) {
  Vec v(static_cast<size_t>(n), 0.0);
  v[k] = 1.0;
  return v;
}

bool state_is_relaxed(const Environment& env) {
  return env.spec().kind == envs::EnvKind::GridLake;
}

}  // namespace

std::vector<DecodedTuple> decode(const CandidateBatch& c, const Environment& env) {
  std::vector<DecodedTuple> out;
  out.reserve(c.batch);
  const bool relax_state = state_is_relaxed(env);
  const bool discrete_a = env.spec().discrete_actions();
  for (int k = 0; k < c.batch; ++k) {
    DecodedTuple t;
    const auto s = c.state(k);
    const auto sp = c.next_state(k);
    if (relax_state) {
      t.s = one_hot(c.state_dim, argmax_span(s));
      t.s_next = one_hot(c.state_dim, argmax_span(sp));
    } else {
      t.s.assign(s.begin(), s.end());
      t.s_next.assign(sp.begin(), sp.end());
    }
    const auto a = c.action(k);
    if (discrete_a) {
      t.a = Action{argmax_span(a), {}};
    } else {
      t.a = Action{-1, Vec(a.begin(), a.end())};
    }
    t.r = c.reward(k);
    out.push_back(std::move(t));
  }
  return out;
}

void AttackProblem::validate() const {
  if (!env || !snapshot || !packet) throw ConfigError("attack problem: missing inputs");
  weights.validate();
  if (packet->net_fingerprint != hash_hex(snapshot->net.fingerprint())) {
    throw ProtocolError("attack problem: packet fingerprint does not match snapshot");
  }
  if (static_cast<int>(packet->grad.size()) != snapshot->net.param_count()) {
    throw ShapeError("attack problem: packet gradient length mismatch");
  }
  if (weights.lambda > 0.0 && weights.alpha > 0.0 && !prior) {
    throw ConfigError("attack problem: state regularizer needs a prior");
  }
  if (weights.lambda > 0.0 && weights.gamma_dyn > 0.0 && !model) {
    throw ConfigError("attack problem: dynamics regularizer needs a model");
  }
}

namespace {

struct CandidateNodes {
  std::vector<Tape::Idx> all;
  int state_dim = 0;
  int action_dim = 0;
  int batch = 1;

  int stride() const { return 2 * state_dim + action_dim + 1; }
  std::span<const Tape::Idx> state(int k) const {
    return {all.data() + static_cast<size_t>(k) * stride(),
            static_cast<size_t>(state_dim)};
  }
  std::span<const Tape::Idx> action(int k) const {
    return {all.data() + static_cast<size_t>(k) * stride() + state_dim,
            static_cast<size_t>(action_dim)};
  }
  Tape::Idx reward(int k) const {
    return all[static_cast<size_t>(k) * stride() + state_dim + action_dim];
  }
  std::span<const Tape::Idx> next_state(int k) const {
    return {all.data() + static_cast<size_t>(k) * stride() + state_dim +
                action_dim + 1,
            static_cast<size_t>(state_dim)};
  }
};

// L_fake: mean over tuples of 0.5 (Q(s,a) - (r + gamma max_a' Q_minus(s',a')))^2.
// The bootstrap term always participates; theta_minus enters as constants.
// Candidate state and action relaxations feed the scalar-head input directly.
Tape::Idx fake_loss_graph(Tape& tape, std::span<const Tape::Idx> theta,
                          const CandidateNodes& c, const Environment& env,
                          const MlpSpec& spec, const QNetwork& target) {
  std::vector<Tape::Idx> tgt(target.params.size());
  for (size_t i = 0; i < target.params.size(); ++i) {
    tgt[i] = tape.constant(target.params[i]);
  }
  const Tape::Idx gamma_c = tape.constant(env.spec().gamma);
  const Tape::Idx half = tape.constant(0.5);

  Tape::Idx acc = -1;
  for (int k = 0; k < c.batch; ++k) {
    std::vector<Tape::Idx> in(c.state(k).begin(), c.state(k).end());
    in.insert(in.end(), c.action(k).begin(), c.action(k).end());
    const Tape::Idx q_sel = num::mlp_graph(tape, spec, theta, in)[0];

    std::vector<Tape::Idx> tq;
    for (const Action& anchor : env.bootstrap_actions()) {
      std::vector<Tape::Idx> tin(c.next_state(k).begin(), c.next_state(k).end());
      for (double v : env.encode_action(anchor)) tin.push_back(tape.constant(v));
      tq.push_back(num::mlp_graph(tape, spec, tgt, tin)[0]);
    }
    const Tape::Idx y = tape.add(c.reward(k), tape.mul(gamma_c, tape.max_fold(tq)));
    const Tape::Idx d = tape.sub(q_sel, y);
    const Tape::Idx l = tape.mul(half, tape.mul(d, d));
    acc = acc < 0 ? l : tape.add(acc, l);
  }
  return tape.mul(acc, tape.constant(1.0 / static_cast<double>(c.batch)));
}

Tape::Idx squared_l2_nodes(Tape& tape, std::span<const Tape::Idx> a,
                           std::span<const Tape::Idx> b) {
  Tape::Idx acc = -1;
  for (size_t i = 0; i < a.size(); ++i) {
    const Tape::Idx d = tape.sub(a[i], b[i]);
    const Tape::Idx sq = tape.mul(d, d);
    acc = acc < 0 ? sq : tape.add(acc, sq);
  }
  return acc;
}

// Regularizer graph, averaged over the candidate batch. Terms with zero
// weight are not built at all, so weights (0,0,0) degrades bit-exactly to
// the plain matching loss.
Tape::Idx reg_total_graph(Tape& tape, const CandidateNodes& c,
                          const AttackProblem& p) {
  const auto& w = p.weights;
  const double inv_batch = 1.0 / static_cast<double>(c.batch);
  Tape::Idx total = -1;
  auto add_term = [&](double weight, Tape::Idx sum_over_batch) {
    const Tape::Idx mean = tape.mul(sum_over_batch, tape.constant(inv_batch));
    const Tape::Idx scaled = tape.mul(tape.constant(weight), mean);
    total = total < 0 ? scaled : tape.add(total, scaled);
  };

  if (w.alpha > 0.0) {
    Tape::Idx acc = -1;
    for (int k = 0; k < c.batch; ++k) {
      std::vector<Tape::Idx> mu(p.prior->mu_s.size());
      for (size_t i = 0; i < mu.size(); ++i) mu[i] = tape.constant(p.prior->mu_s[i]);
      const Tape::Idx rs = squared_l2_nodes(tape, c.state(k), mu);
      acc = acc < 0 ? rs : tape.add(acc, rs);
    }
    add_term(w.alpha, acc);
  }
  if (w.beta > 0.0) {
    const Tape::Idx rmax = tape.constant(p.env->spec().reward_max);
    const Tape::Idx rmin = tape.constant(p.env->spec().reward_min);
    Tape::Idx acc = -1;
    for (int k = 0; k < c.batch; ++k) {
      const Tape::Idx over = tape.relu(tape.sub(c.reward(k), rmax));
      const Tape::Idx under = tape.relu(tape.sub(rmin, c.reward(k)));
      const Tape::Idx rr = tape.add(tape.mul(over, over), tape.mul(under, under));
      acc = acc < 0 ? rr : tape.add(acc, rr);
    }
    add_term(w.beta, acc);
  }
  if (w.gamma_dyn > 0.0) {
    const QNetwork& f = p.model->net;
    std::vector<Tape::Idx> fp(f.params.size());
    for (size_t i = 0; i < f.params.size(); ++i) fp[i] = tape.constant(f.params[i]);
    Tape::Idx acc = -1;
    for (int k = 0; k < c.batch; ++k) {
      std::vector<Tape::Idx> in(c.state(k).begin(), c.state(k).end());
      in.insert(in.end(), c.action(k).begin(), c.action(k).end());
      const auto pred = num::mlp_graph(tape, f.spec, fp, in);
      const Tape::Idx rf = squared_l2_nodes(tape, pred, c.next_state(k));
      acc = acc < 0 ? rf : tape.add(acc, rf);
    }
    add_term(w.gamma_dyn, acc);
  }
  return total;
}

struct BuiltObjective {
  Tape::Idx total;
  Tape::Idx gm;
  std::vector<Tape::Idx> x_nodes;
};

BuiltObjective build_objective(Tape& tape, const CandidateBatch& c,
                               const AttackProblem& p) {
  const QNetwork& net = p.snapshot->net;
  std::vector<Tape::Idx> theta(net.params.size());
  for (size_t i = 0; i < net.params.size(); ++i) theta[i] = tape.constant(net.params[i]);

  CandidateNodes cn;
  cn.batch = c.batch;
  cn.state_dim = c.state_dim;
  cn.action_dim = c.action_dim;
  cn.all.resize(c.x.size());
  for (size_t i = 0; i < c.x.size(); ++i) cn.all[i] = tape.constant(c.x[i]);

  const Tape::Idx l_fake = fake_loss_graph(tape, theta, cn, *p.env, net.spec,
                                           p.snapshot->target);
  const auto g_fake = tape.gradient(l_fake, theta);

  Tape::Idx gm = -1;
  for (size_t i = 0; i < g_fake.size(); ++i) {
    const Tape::Idx d = tape.sub(g_fake[i], tape.constant(p.packet->grad[i]));
    const Tape::Idx sq = tape.mul(d, d);
    gm = gm < 0 ? sq : tape.add(gm, sq);
  }

  Tape::Idx total = gm;
  if (p.weights.any_reg_active()) {
    const Tape::Idx regs = reg_total_graph(tape, cn, p);
    if (regs >= 0) {
      total = tape.add(gm, tape.mul(tape.constant(p.weights.lambda), regs));
    }
  }
  return BuiltObjective{total, gm, std::move(cn.all)};
}

}  // namespace

double total_objective(const CandidateBatch& c, const AttackProblem& p) {
  p.validate();
  Tape tape;
  return tape.val(build_objective(tape, c, p).total);
}

ObjectiveEval objective_with_grad(const CandidateBatch& c, const AttackProblem& p,
                                  Tape& tape) {
  tape.clear();
  const BuiltObjective built = build_objective(tape, c, p);
  ObjectiveEval out;
  out.value = tape.val(built.total);
  out.grad = tape.gradient_values(built.total, built.x_nodes);
  return out;
}

double gme(const GradientPacket& packet, const CandidateBatch& c,
           const NetSnapshot& snapshot, const Environment& env) {
  AttackProblem p;
  p.env = &env;
  p.snapshot = &snapshot;
  p.packet = &packet;
  p.weights = RegWeights{0.0, 0.0, 0.0, 0.0};
  p.validate();
  Tape tape;
  return tape.val(build_objective(tape, c, p).gm);
}

ReconstructionResult rgia_attack(const AttackProblem& problem,
                                 const OptConfig& opt, uint64_t seed) {
  problem.validate();
  const auto t0 = std::chrono::steady_clock::now();

  ReconstructionResult res;
  res.seed = seed;
  res.candidate = CandidateBatch::init_normal(*problem.env,
                                              problem.packet->batch_size, seed);
  res.loss_trace.reserve(opt.iterations);

  Adam adam;
  Tape tape;
  OptConfig sched = opt;
  DetRng kick_rng(DetRng::mix(seed, 0x21C2));
  Vec best_x = res.candidate.x;
  double best_obj = std::numeric_limits<double>::infinity();
  int since_best = 0;
  int hops = 0;
  for (int it = 0; it < opt.iterations; ++it) {
    ObjectiveEval ev;
    try {
      ev = objective_with_grad(res.candidate, problem, tape);
    } catch (const NumericError& e) {
      res.aborted = true;
      res.diagnostic = std::string("non-finite objective at iteration ") +
                       std::to_string(it) + ": " + e.what();
      break;
    }
    if (!std::isfinite(ev.value)) {
      res.aborted = true;
      res.diagnostic = "non-finite objective at iteration " + std::to_string(it);
      break;
    }
    res.loss_trace.push_back(ev.value);
    ++res.iterations;
    if (ev.value < best_obj * (1.0 - 1e-6)) {
      best_obj = ev.value;
      best_x = res.candidate.x;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (opt.stall_window > 0 && since_best >= opt.stall_window) {
      // Stalled: hop from the best point and restart the moment estimates.
      // Every second hop is dynamics-guided when a model is available: the
      // next-state block is re-proposed from f(decode(s), decode(a)) and
      // the reward pulled into range, which jumps across the (r, s')
      // pseudo-solution manifold instead of diffusing inside it.
      res.candidate.x = best_x;
      ++hops;
      const bool guided = problem.model && (hops % 2 == 0);
      if (guided) {
        const auto dec = decode(res.candidate, *problem.env);
        const int stride = res.candidate.tuple_stride();
        const int sd = res.candidate.state_dim;
        const int ad = res.candidate.action_dim;
        for (int k = 0; k < res.candidate.batch; ++k) {
          const Vec pred = model_predict(*problem.model, dec[k].s,
                                         problem.env->encode_action(dec[k].a));
          double* tuple = res.candidate.x.data() + static_cast<size_t>(k) * stride;
          for (int i = 0; i < sd; ++i) {
            tuple[sd + ad + 1 + i] = pred[i] + 0.05 * kick_rng.normal();
          }
          double& r = tuple[sd + ad];
          r = std::clamp(r, problem.env->spec().reward_min,
                         problem.env->spec().reward_max) +
              0.02 * kick_rng.normal();
        }
      } else {
        for (double& x : res.candidate.x) {
          x += opt.kick_scale * kick_rng.normal();
        }
      }
      adam = Adam{};
      since_best = 0;
      continue;
    }
    if (opt.decay_floor < 1.0 && opt.iterations > 1) {
      sched.step = opt.step * std::pow(opt.decay_floor,
                                       static_cast<double>(it) /
                                           (opt.iterations - 1));
    }
    optimizer_step(res.candidate.x, ev.grad, adam, sched);
  }
  if (std::isfinite(best_obj) && all_finite(best_x)) {
    res.candidate.x = best_x;
  }

  res.decoded = decode(res.candidate, *problem.env);
  if (all_finite(res.candidate.x)) {
    res.gme = gme(*problem.packet, res.candidate, *problem.snapshot, *problem.env);
  } else {
    res.aborted = true;
    if (res.diagnostic.empty()) res.diagnostic = "non-finite candidate";
    res.gme = std::numeric_limits<double>::quiet_NaN();
  }
  res.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return res;
}

std::string result_to_json(const ReconstructionResult& r,
                           const std::string& config_hash) {
  nlohmann::json j;
  nlohmann::json tuples = nlohmann::json::array();
  for (const auto& t : r.decoded) {
    nlohmann::json jt;
    jt["s"] = t.s;
    jt["a"] = t.a.is_discrete() ? nlohmann::json(t.a.index)
                                : nlohmann::json(t.a.continuous);
    jt["r"] = t.r;
    jt["s_next"] = t.s_next;
    tuples.push_back(std::move(jt));
  }
  j["decoded"] = std::move(tuples);
  j["loss_trace"] = r.loss_trace;
  j["gme"] = r.gme;
  j["iterations"] = r.iterations;
  j["seed"] = r.seed;
  j["config_hash"] = config_hash;
  j["aborted"] = r.aborted;
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  return j.dump();
}

Vec consistency_state(const ReconstructionResult& r) {
  // Dispersion features live where the attack is under-determined: the
  // state pair. Grid kinds report decoded cell coordinates, continuous
  // kinds the raw reconstructions.
  Vec out;
  const auto& c = r.candidate;
  for (int k = 0; k < c.batch; ++k) {
    const auto s = c.state(k);
    const auto sp = c.next_state(k);
    out.insert(out.end(), s.begin(), s.end());
    out.insert(out.end(), sp.begin(), sp.end());
  }
  return out;
}

namespace {

Vec grid_consistency_state(const ReconstructionResult& r, const Environment& env) {
  Vec out;
  const int cols = env.spec().grid.cols;
  const auto& c = r.candidate;
  for (int k = 0; k < c.batch; ++k) {
    const int cell_s = argmax_span(c.state(k));
    const int cell_sp = argmax_span(c.next_state(k));
    out.push_back(static_cast<double>(cell_s / cols));
    out.push_back(static_cast<double>(cell_s % cols));
    out.push_back(static_cast<double>(cell_sp / cols));
    out.push_back(static_cast<double>(cell_sp % cols));
  }
  return out;
}

}  // namespace

MultistartResult multistart_analysis(std::span<const AttackCase> cases,
                                     const Environment& env, int k_starts,
                                     const RegWeights& weights,
                                     const StatePrior* prior,
                                     const TransitionModel* model,
                                     const OptConfig& opt, uint64_t seed) {
  if (k_starts < 2) throw ConfigError("multistart: k must be >= 2");
  if (cases.empty()) throw ConfigError("multistart: no packets");

  MultistartResult out;
  out.runs.assign(cases.size(), {});
  for (auto& v : out.runs) v.resize(k_starts);

  const int total = static_cast<int>(cases.size()) * k_starts;
  parallel_for(total, [&](int idx) {
    const int ci = idx / k_starts;
    const int si = idx % k_starts;
    AttackProblem p;
    p.env = &env;
    p.snapshot = &cases[ci].snapshot;
    p.packet = &cases[ci].packet;
    p.weights = weights;
    p.prior = prior;
    p.model = model;
    out.runs[ci][si] = rgia_attack(p, opt, DetRng::mix(seed, 0x3u, ci, si));
  });

  const bool grid = env.spec().kind != envs::EnvKind::PointMass &&
                    state_is_relaxed(env);
  std::vector<Vec> all_states;
  std::vector<int> labels;
  for (size_t ci = 0; ci < cases.size(); ++ci) {
    for (const auto& run : out.runs[ci]) {
      all_states.push_back(grid ? grid_consistency_state(run, env)
                                : consistency_state(run));
      labels.push_back(static_cast<int>(ci));
    }
  }

  metrics::SilhouetteResult sil;
  const bool ss_defined = cases.size() >= 2;
  if (ss_defined) sil = metrics::silhouette(all_states, labels);

  for (size_t ci = 0; ci < cases.size(); ++ci) {
    ConsistencyRow row;
    row.packet_id = static_cast<int>(ci);
    std::span<const Vec> states(all_states.data() + ci * k_starts,
                                static_cast<size_t>(k_starts));
    row.ed = metrics::pairwise_euclidean(states);
    row.cd = metrics::covariance_determinant(states);
    row.ss_defined = ss_defined;
    if (ss_defined) row.ss = sil.per_label.at(static_cast<int>(ci));
    out.rows.push_back(row);
  }
  return out;
}

PcaResult pca_project(std::span<const Vec> states, int dims) {
  if (states.size() < 3) throw ShapeError("pca_project: need >= 3 states");
  const int d = static_cast<int>(states[0].size());
  if (dims < 1 || dims > d) throw ShapeError("pca_project: dims out of range");

  std::vector<Vec> pts(states.begin(), states.end());
  const Matrix cov = linalg::sample_covariance(pts);

  PcaResult out;
  out.center.assign(d, 0.0);
  for (const Vec& p : pts) {
    for (int i = 0; i < d; ++i) out.center[i] += p[i];
  }
  for (double& x : out.center) x /= static_cast<double>(pts.size());

  double total_var = 0.0;
  for (int i = 0; i < d; ++i) total_var += cov.at(i, i);
  if (total_var <= 0.0) {
    out.degenerate = true;
    out.projected.assign(pts.size(), Vec(dims, 0.0));
    out.explained.assign(dims, 0.0);
    out.components = Matrix(d, dims);
    return out;
  }

  const linalg::SymEigen eig = linalg::sym_eigen(cov);
  out.components = Matrix(d, dims);
  out.explained.assign(dims, 0.0);
  for (int k = 0; k < dims; ++k) {
    Vec col(d);
    for (int i = 0; i < d; ++i) col[i] = eig.vectors.at(i, k);
    // Deterministic sign: first loading with |x| > 1e-12 made positive.
    for (int i = 0; i < d; ++i) {
      if (std::abs(col[i]) > 1e-12) {
        if (col[i] < 0.0) {
          for (double& x : col) x = -x;
        }
        break;
      }
    }
    for (int i = 0; i < d; ++i) out.components.at(i, k) = col[i];
    out.explained[k] = std::max(eig.values[k], 0.0) / total_var;
  }

  out.projected.reserve(pts.size());
  for (const Vec& p : pts) {
    Vec proj(dims, 0.0);
    for (int k = 0; k < dims; ++k) {
      double acc = 0.0;
      for (int i = 0; i < d; ++i) acc += (p[i] - out.center[i]) * out.components.at(i, k);
      proj[k] = acc;
    }
    out.projected.push_back(std::move(proj));
  }
  return out;
}

}  // namespace rgia::attack
