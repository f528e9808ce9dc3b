#include "frl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rgia::frl {

using nlohmann::json;

void GradientPacket::validate(int param_count) const {
  if (static_cast<int>(grad.size()) != param_count) {
    throw ShapeError("packet grad length != param_count");
  }
  if (batch_size < 1) throw ShapeError("packet batch_size must be >= 1");
  require_finite(grad, "packet grad");
}

void FederationConfig::validate() const {
  if (n_agents < 1) throw ConfigError("n_agents must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (rounds < 0) throw ConfigError("rounds must be >= 0");
  if (local_batch_size < 1) throw ConfigError("local_batch_size must be >= 1");
  if (aggregation != "mean") throw ConfigError("unknown aggregation: " + aggregation);
}

num::MlpSpec default_qnet_spec(const Environment& env,
                               const std::vector<int>& hidden_dims,
                               num::Activation act) {
  // Scalar head over the concatenated (state, action) encoding for every
  // env family; the bootstrap max enumerates candidate actions. Keeping the
  // action on the input side means the fake loss is not odd in the action
  // relaxation, so gradient matching pins the action sign.
  num::MlpSpec spec;
  spec.hidden_dims = hidden_dims;
  spec.activation = act;
  spec.input_dim = env.spec().state_dim() + env.spec().action_dim();
  spec.output_dim = 1;
  return spec;
}

double q_value(const QNetwork& net, const Environment& env, const Vec& s_enc,
               const Action& a) {
  Vec in = s_enc;
  const Vec a_enc = env.encode_action(a);
  in.insert(in.end(), a_enc.begin(), a_enc.end());
  return num::forward(net, in)[0];
}

double max_q(const QNetwork& net, const Environment& env, const Vec& s_enc) {
  double best = -std::numeric_limits<double>::infinity();
  for (const Action& a : env.bootstrap_actions()) {
    best = std::max(best, q_value(net, env, s_enc, a));
  }
  return best;
}

Action greedy_action(const QNetwork& net, const Environment& env, const Vec& s_enc) {
  const auto& actions = env.bootstrap_actions();
  int best = 0;
  double best_q = q_value(net, env, s_enc, actions[0]);
  for (size_t i = 1; i < actions.size(); ++i) {
    const double q = q_value(net, env, s_enc, actions[i]);
    if (q > best_q) {
      best_q = q;
      best = static_cast<int>(i);
    }
  }
  return actions[best];
}

double td_target(const QNetwork& target_net, const Environment& env,
                 const Transition& t, double gamma) {
  if (env.is_terminal_state(t.s_next)) return t.r;
  return t.r + gamma * max_q(target_net, env, t.s_next);
}

double td_loss(const QNetwork& net, const QNetwork& target_net,
               const Environment& env, std::span<const Transition> batch,
               double gamma) {
  if (batch.empty()) throw ShapeError("td_loss: empty batch");
  double acc = 0.0;
  for (const Transition& t : batch) {
    const double y = td_target(target_net, env, t, gamma);
    const double d = q_value(net, env, t.s, t.a) - y;
    acc += 0.5 * d * d;
  }
  return acc / static_cast<double>(batch.size());
}

num::Tape::Idx td_loss_graph(num::Tape& tape,
                             std::span<const num::Tape::Idx> params,
                             const num::MlpSpec& spec, const Environment& env,
                             std::span<const Transition> batch,
                             std::span<const double> targets) {
  num::Tape::Idx acc = -1;
  for (size_t k = 0; k < batch.size(); ++k) {
    const Transition& t = batch[k];
    std::vector<num::Tape::Idx> in;
    in.reserve(spec.input_dim);
    for (double x : t.s) in.push_back(tape.constant(x));
    for (double x : env.encode_action(t.a)) in.push_back(tape.constant(x));
    const auto out = num::mlp_graph(tape, spec, params, in);
    const num::Tape::Idx d = tape.sub(out[0], tape.constant(targets[k]));
    const num::Tape::Idx sq = tape.mul(tape.constant(0.5), tape.mul(d, d));
    acc = acc < 0 ? sq : tape.add(acc, sq);
  }
  return tape.mul(acc, tape.constant(1.0 / static_cast<double>(batch.size())));
}

Vec td_param_grad(const QNetwork& net, const QNetwork& target_net,
                  const Environment& env, std::span<const Transition> batch,
                  double gamma) {
  if (batch.empty()) throw ShapeError("td_param_grad: empty batch");
  std::vector<double> targets;
  targets.reserve(batch.size());
  for (const Transition& t : batch) targets.push_back(td_target(target_net, env, t, gamma));
  return num::param_grad(net, [&](num::Tape& tape, std::span<const num::Tape::Idx> p) {
    return td_loss_graph(tape, p, net.spec, env, batch, targets);
  });
}

GradientPacket make_packet(const QNetwork& net, const QNetwork& target_net,
                           const Environment& env,
                           std::span<const Transition> batch, double gamma,
                           int agent_id, int round) {
  GradientPacket p;
  p.agent_id = agent_id;
  p.round = round;
  p.batch_size = static_cast<int>(batch.size());
  p.grad = td_param_grad(net, target_net, env, batch, gamma);
  p.net_fingerprint = hash_hex(net.fingerprint());
  p.created_at = std::chrono::duration<double>(
                     std::chrono::system_clock::now().time_since_epoch())
                     .count();
  p.validate(net.param_count());
  return p;
}

AgentRoundResult agent_round(const QNetwork& net, const QNetwork& target_net,
                             const Environment& env, const Dataset& shard,
                             const FederationConfig& cfg, int agent_id,
                             int round) {
  if (shard.transitions.empty()) throw ShapeError("agent_round: empty shard");
  DetRng rng(DetRng::mix(cfg.seed, 0xA6E27, static_cast<uint64_t>(agent_id),
                         static_cast<uint64_t>(round)));
  std::vector<Transition> batch;
  batch.reserve(cfg.local_batch_size);
  for (int i = 0; i < cfg.local_batch_size; ++i) {
    batch.push_back(shard.transitions[rng.uniform_index(shard.transitions.size())]);
  }
  AgentRoundResult res;
  res.packet = make_packet(net, target_net, env, batch, env.spec().gamma,
                           agent_id, round);
  res.td_loss = td_loss(net, target_net, env, batch, env.spec().gamma);
  return res;
}

Vec aggregate(std::span<const GradientPacket> packets) {
  if (packets.empty()) throw ProtocolError("aggregate: no packets");
  const auto& first = packets.front();
  Vec sum(first.grad.size(), 0.0);
  for (const auto& p : packets) {
    if (p.net_fingerprint != first.net_fingerprint) {
      throw ProtocolError("aggregate: packet fingerprints disagree");
    }
    if (p.grad.size() != sum.size()) {
      throw ProtocolError("aggregate: packet gradient lengths disagree");
    }
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += p.grad[i];
  }
  const double inv = 1.0 / static_cast<double>(packets.size());
  for (double& x : sum) x *= inv;
  return sum;
}

QNetwork apply_update(const QNetwork& net, const Vec& agg_grad, double alpha) {
  if (agg_grad.size() != net.params.size()) {
    throw ShapeError("apply_update: gradient length mismatch");
  }
  QNetwork out = net;
  for (size_t i = 0; i < out.params.size(); ++i) out.params[i] -= alpha * agg_grad[i];
  return out;
}

void CollectingTap::on_packet(const GradientPacket& p) { packets_.push_back(p); }

double eval_greedy_return(const Environment& env, const QNetwork& net,
                          int episodes, int horizon, uint64_t seed) {
  DetRng rng(DetRng::mix(seed, 0xE7A1));
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Vec raw = env.reset(rng);
    double ret = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const Action a = greedy_action(net, env, env.encode_state(raw));
      const envs::StepResult sr = env.step(raw, a, rng);
      ret += sr.t.r;
      if (sr.terminal) break;
      raw = sr.raw_next;
    }
    total += ret;
  }
  return total / static_cast<double>(episodes);
}

namespace {

std::vector<Transition> collect_eps_greedy(const Environment& env,
                                           const QNetwork& net, int n,
                                           double epsilon, DetRng& rng) {
  std::vector<Transition> out;
  Vec raw = env.reset(rng);
  for (int i = 0; i < n; ++i) {
    Action a = rng.uniform01() < epsilon
                   ? env.sample_action(rng)
                   : greedy_action(net, env, env.encode_state(raw));
    envs::StepResult sr = env.step(raw, a, rng);
    out.push_back(std::move(sr.t));
    raw = sr.terminal ? env.reset(rng) : sr.raw_next;
  }
  return out;
}

}  // namespace

FederationResult run_federation(const Environment& env,
                                const FederationConfig& cfg,
                                std::vector<Dataset> shards,
                                const DefenseHook* defense, Tap* tap,
                                const std::vector<int>* hidden_dims) {
  cfg.validate();
  if (static_cast<int>(shards.size()) != cfg.n_agents) {
    throw ConfigError("run_federation: shard count != n_agents");
  }
  const std::vector<int> hidden = hidden_dims ? *hidden_dims : std::vector<int>{16};
  const num::MlpSpec spec = default_qnet_spec(env, hidden);

  FederationResult res;
  res.net = QNetwork::init(spec, cfg.seed);
  res.target_net = res.net;

  for (int round = 0; round < cfg.rounds; ++round) {
    if (cfg.target_refresh > 0 && round % cfg.target_refresh == 0) {
      res.target_net = res.net;
    }
    if (cfg.online_collect) {
      for (int a = 0; a < cfg.n_agents; ++a) {
        DetRng rng(DetRng::mix(cfg.seed, 0xC011EC7, static_cast<uint64_t>(a),
                               static_cast<uint64_t>(round)));
        auto fresh = collect_eps_greedy(env, res.net, cfg.collect_per_round,
                                        cfg.epsilon, rng);
        auto& ts = shards[a].transitions;
        ts.insert(ts.end(), std::make_move_iterator(fresh.begin()),
                  std::make_move_iterator(fresh.end()));
      }
    }

    std::vector<GradientPacket> uploaded;
    uploaded.reserve(cfg.n_agents);
    double loss_sum = 0.0;
    for (int a = 0; a < cfg.n_agents; ++a) {
      AgentRoundResult ar = agent_round(res.net, res.target_net, env, shards[a], cfg, a, round);
      loss_sum += ar.td_loss;
      GradientPacket p = defense ? (*defense)(ar.packet, a, round) : ar.packet;
      if (tap) tap->on_packet(p);
      uploaded.push_back(std::move(p));
      res.log.push_back(LogRow{round, a, ar.td_loss, std::nullopt});
    }
    const Vec agg = aggregate(uploaded);
    res.net = apply_update(res.net, agg, cfg.learning_rate);
    res.final_mean_td_loss = loss_sum / cfg.n_agents;

    if (cfg.eval_every > 0 && (round + 1) % cfg.eval_every == 0) {
      const double ret = eval_greedy_return(env, res.net, cfg.eval_episodes,
                                            cfg.eval_horizon,
                                            DetRng::mix(cfg.seed, 0xE7A1, round));
      res.log.push_back(LogRow{round, -1, 0.0, ret});
    }
  }
  return res;
}

std::string packet_to_json(const GradientPacket& p) {
  json j;
  j["agent_id"] = p.agent_id;
  j["round"] = p.round;
  j["batch_size"] = p.batch_size;
  j["net_fingerprint"] = p.net_fingerprint;
  j["grad"] = p.grad;
  if (!p.defense.empty()) j["defense"] = p.defense;
  return j.dump();
}

GradientPacket packet_from_json(const std::string& text) {
  const json j = json::parse(text);
  GradientPacket p;
  p.agent_id = j.at("agent_id").get<int>();
  p.round = j.at("round").get<int>();
  p.batch_size = j.at("batch_size").get<int>();
  p.net_fingerprint = j.at("net_fingerprint").get<std::string>();
  p.grad = j.at("grad").get<Vec>();
  if (j.contains("defense")) p.defense = j.at("defense").get<std::string>();
  return p;
}

void save_packet(const GradientPacket& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << packet_to_json(p);
}

GradientPacket load_packet(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for reading: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return packet_from_json(ss.str());
}

std::string training_log_csv(const std::vector<LogRow>& log) {
  std::string out = "round,agent_id,td_loss,eval_return\n";
  for (const auto& row : log) {
    out += std::to_string(row.round);
    out += ',';
    out += std::to_string(row.agent_id);
    out += ',';
    out += row.agent_id >= 0 ? format_double(row.td_loss) : "";
    out += ',';
    if (row.eval_return) out += format_double(*row.eval_return);
    out += '\n';
  }
  return out;
}

std::string qnet_to_json(const QNetwork& net) {
  json j;
  j["input_dim"] = net.spec.input_dim;
  j["hidden_dims"] = net.spec.hidden_dims;
  j["output_dim"] = net.spec.output_dim;
  j["activation"] = net.spec.activation == num::Activation::Tanh ? "tanh" : "relu";
  j["params"] = net.params;
  return j.dump();
}

QNetwork qnet_from_json(const std::string& text) {
  const json j = json::parse(text);
  num::MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.activation = j.at("activation").get<std::string>() == "relu"
                        ? num::Activation::Relu
                        : num::Activation::Tanh;
  QNetwork net{spec, j.at("params").get<Vec>()};
  if (static_cast<int>(net.params.size()) != spec.param_count()) {
    throw ShapeError("qnet json: param count mismatch");
  }
  return net;
}

}  // namespace rgia::frl
