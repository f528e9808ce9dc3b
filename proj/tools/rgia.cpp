#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rgialab.h"

namespace {

int status_to_exit(rgia_status s) {
  switch (s) {
    case RGIA_OK: return 0;
    case RGIA_ERR_NUMERIC: return 3;
    default: return 2;  // config/usage class
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rgialab: gradient-inversion laboratory for federated TD learning"};
  app.require_subcommand(1);

  struct SubArgs {
    std::string config;
    std::string out;
    uint64_t seed = 0;
    bool has_seed = false;
    bool deterministic = false;
  };

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train a federated Q-network on private shards"},
      {"attack", "reconstruct a transition from one intercepted packet"},
      {"ablate", "regularizer ablation (GIA / GIA-SR / GIA-RC / GIA-DC / RGIA)"},
      {"sensitivity", "weight sensitivity sweep over alpha, beta or gamma"},
      {"defense-sweep", "DP-noise defense sweep over variances"},
      {"batch-sweep", "reconstruction quality versus packet batch size"},
      {"multistart", "multi-start consistency analysis with PCA export"},
      {"prior-study", "state-prior bias study over prior sizes"},
      {"transition-study", "transition-model training-set-size study"},
      {"report", "re-aggregate a rows.csv into summary outputs"},
  };

  std::vector<SubArgs> args(commands.size());
  std::vector<CLI::App*> subs;
  for (size_t i = 0; i < commands.size(); ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].first, commands[i].second);
    sub->add_option("--config", args[i].config, "JSON config file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args[i].out, "output directory (overrides config)");
    sub->add_option("--seed", args[i].seed, "seed (replaces the config seed list)")
        ->trigger_on_parse();
    sub->add_flag("--deterministic", args[i].deterministic,
                  "exclude timing columns so outputs are byte-reproducible");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  for (size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    SubArgs& a = args[i];
    a.has_seed = subs[i]->count("--seed") > 0;

    std::ifstream f(a.config, std::ios::binary);
    if (!f) {
      std::cerr << "error: cannot read config " << a.config << "\n";
      return 2;
    }
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string config_json = ss.str();

    const rgia_status st = rgia_run_experiment(
        commands[i].first.c_str(), config_json.c_str(),
        a.out.empty() ? nullptr : a.out.c_str(),
        a.has_seed ? &a.seed : nullptr, a.deterministic ? 1 : 0);
    if (st != RGIA_OK) {
      std::cerr << "error: " << rgia_last_error() << "\n";
      return status_to_exit(st);
    }
    std::cout << commands[i].first << ": done\n";
    return 0;
  }
  return 2;
}
