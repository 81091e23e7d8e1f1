// nbpmatch: optimal non-bipartite matching and effect-ratio estimation for
// continuous treatments.
//
//   nbpmatch match    --data d.csv --out pairs.csv [--config run.cfg]
//   nbpmatch estimate --data d.csv --pairs pairs.csv --out report.csv
//   nbpmatch balance  --data d.csv --pairs pairs.csv --out balance.csv
//   nbpmatch simulate --out summary.csv --seed 7
//   nbpmatch keys

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nbp/commands.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string pairs;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool inputs) {
  cmd->add_option("--config", o.config, "key = value configuration file");
  cmd->add_option("--seed", o.seed, "random seed (sets sim.seed)");
  cmd->add_option("--out", o.out, "output path (sets io.out)");
  if (inputs) {
    cmd->add_option("--data", o.data, "dataset CSV (sets io.data)");
    cmd->add_option("--pairs", o.pairs, "pairs CSV (sets io.pairs)");
  }
  cmd->add_option("--set", o.sets, "override a config key, key=value");
}

nbp::RunConfig resolve(const CommonOptions& o) {
  nbp::RunConfig cfg = o.config.empty() ? nbp::RunConfig{} : nbp::load_config(o.config);
  for (const auto& s : o.sets) cfg.set_assignment(s);
  if (o.seed) cfg.set("sim.seed", std::to_string(*o.seed));
  if (!o.out.empty()) cfg.set("io.out", o.out);
  if (!o.data.empty()) cfg.set("io.data", o.data);
  if (!o.pairs.empty()) cfg.set("io.pairs", o.pairs);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal non-bipartite matching and effect-ratio inference"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto* match = app.add_subcommand("match", "match units into pairs");
  auto* estimate = app.add_subcommand("estimate", "effect-ratio estimates and intervals");
  auto* balance = app.add_subcommand("balance", "covariate balance table");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study");
  auto* keys = app.add_subcommand("keys", "list configuration keys and defaults");
  add_common(match, opts, true);
  add_common(estimate, opts, true);
  add_common(balance, opts, true);
  add_common(simulate, opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : nbp::exit_usage;
  }

  if (keys->parsed()) {
    for (const auto& k : nbp::RunConfig::keys()) {
      std::cout << k.name << " = " << k.default_value << "    # " << k.help << '\n';
    }
    return nbp::exit_ok;
  }

  nbp::RunConfig cfg;
  try {
    cfg = resolve(opts);
  } catch (const nbp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nbp::exit_usage;
  }

  if (match->parsed()) return nbp::cmd_match(cfg, std::cerr);
  if (estimate->parsed()) return nbp::cmd_estimate(cfg, std::cerr);
  if (balance->parsed()) return nbp::cmd_balance(cfg, std::cerr);
  return nbp::cmd_simulate(cfg, std::cerr);
}
