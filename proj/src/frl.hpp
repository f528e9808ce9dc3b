#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "envs.hpp"
#include "qnet.hpp"
#include "rng.hpp"
#include "support.hpp"

namespace rgia::frl {

using envs::Action;
using envs::Dataset;
using envs::Environment;
using envs::Transition;
using num::QNetwork;

struct GradientPacket {
  int agent_id = 0;
  int round = 0;
  Vec grad;
  int batch_size = 1;
  std::string net_fingerprint;  // hex of the params the grad was taken against
  double created_at = 0.0;      // wall clock, not serialized
  std::string defense;          // empty until a defense marks the packet

  void validate(int param_count) const;
};

struct FederationConfig {
  int n_agents = 3;
  int rounds = 100;
  int local_batch_size = 16;
  double learning_rate = 0.05;
  std::string aggregation = "mean";
  uint64_t seed = 0;
  int target_refresh = 50;  // theta_minus <- theta every this many rounds
  int eval_every = 0;       // 0 disables periodic policy evaluation
  int eval_episodes = 50;
  int eval_horizon = 100;
  // Online mode: agents grow their shards with epsilon-greedy rollouts.
  bool online_collect = false;
  int collect_per_round = 8;
  double epsilon = 0.1;

  void validate() const;
};

// Q-value conventions per env family: discrete kinds use Q: s -> R^n and
// select a coordinate; continuous kinds use Q: [s;a] -> R.
num::MlpSpec default_qnet_spec(const Environment& env,
                               const std::vector<int>& hidden_dims,
                               num::Activation act = num::Activation::Tanh);

double q_value(const QNetwork& net, const Environment& env, const Vec& s_enc,
               const Action& a);
double max_q(const QNetwork& net, const Environment& env, const Vec& s_enc);
Action greedy_action(const QNetwork& net, const Environment& env, const Vec& s_enc);

// Bootstrap target y = r + gamma * max_a' Q_target(s', a'), with the max
// dropped when s' is terminal.
double td_target(const QNetwork& target_net, const Environment& env,
                 const Transition& t, double gamma);

// Mean over the batch of 0.5 * (Q(s,a) - y)^2, y detached.
double td_loss(const QNetwork& net, const QNetwork& target_net,
               const Environment& env, std::span<const Transition> batch,
               double gamma);

// Same loss as a tape graph over parameter leaves (y precomputed constants).
num::Tape::Idx td_loss_graph(num::Tape& tape,
                             std::span<const num::Tape::Idx> params,
                             const num::MlpSpec& spec, const Environment& env,
                             std::span<const Transition> batch,
                             std::span<const double> targets);

Vec td_param_grad(const QNetwork& net, const QNetwork& target_net,
                  const Environment& env, std::span<const Transition> batch,
                  double gamma);

// Build a packet from explicit transitions; agent_round samples a batch and
// delegates here.
GradientPacket make_packet(const QNetwork& net, const QNetwork& target_net,
                           const Environment& env,
                           std::span<const Transition> batch, double gamma,
                           int agent_id, int round);

struct AgentRoundResult {
  GradientPacket packet;
  double td_loss = 0.0;
};

AgentRoundResult agent_round(const QNetwork& net, const QNetwork& target_net,
                             const Environment& env, const Dataset& shard,
                             const FederationConfig& cfg, int agent_id,
                             int round);

Vec aggregate(std::span<const GradientPacket> packets);

QNetwork apply_update(const QNetwork& net, const Vec& agg_grad, double alpha);

// Packet sink for interception; implementations must tolerate concurrent
// producers. Packets are delivered by const reference and must not change.
class Tap {
 public:
  virtual ~Tap() = default;
  virtual void on_packet(const GradientPacket& p) = 0;
};

class CollectingTap : public Tap {
 public:
  void on_packet(const GradientPacket& p) override;
  const std::vector<GradientPacket>& packets() const { return packets_; }

 private:
  std::vector<GradientPacket> packets_;
};

using DefenseHook =
    std::function<GradientPacket(const GradientPacket&, int agent_id, int round)>;

struct LogRow {
  int round = 0;
  int agent_id = 0;  // -1 for evaluation rows
  double td_loss = 0.0;
  std::optional<double> eval_return;
};

struct FederationResult {
  QNetwork net;
  QNetwork target_net;
  std::vector<LogRow> log;
  double final_mean_td_loss = 0.0;
};

FederationResult run_federation(const Environment& env,
                                const FederationConfig& cfg,
                                std::vector<Dataset> shards,
                                const DefenseHook* defense = nullptr,
                                Tap* tap = nullptr,
                                const std::vector<int>* hidden_dims = nullptr);

// Mean return of the greedy policy (gridlake: undiscounted goal reward, so
// this equals the success rate; pointmass: summed reward over the horizon).
double eval_greedy_return(const Environment& env, const QNetwork& net,
                          int episodes, int horizon, uint64_t seed);

std::string packet_to_json(const GradientPacket& p);
GradientPacket packet_from_json(const std::string& text);
void save_packet(const GradientPacket& p, const std::string& path);
GradientPacket load_packet(const std::string& path);

// CSV with columns round,agent_id,td_loss,eval_return.
std::string training_log_csv(const std::vector<LogRow>& log);

std::string qnet_to_json(const QNetwork& net);
QNetwork qnet_from_json(const std::string& text);

}  // namespace rgia::frl
