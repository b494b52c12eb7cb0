#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "zoomrl/zoomrl.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int cmd_run(const zoomrl::ExperimentConfig& c, const std::string& out, bool trace, bool dump, unsigned threads) {
  zoomrl::RunOptions opt;
  opt.trace = trace;
  opt.keep_partitions = dump;
  opt.threads = threads;
  const auto paths = zoomrl::run_experiment(c, opt, out.empty() ? std::optional<std::string>{} : std::optional<std::string>{out});
  std::cout << "wrote " << paths.regret.string() << '\n' << "wrote " << paths.census.string() << '\n';
  if (paths.trace) std::cout << "wrote " << paths.trace->string() << '\n';
  if (paths.partitions) std::cout << "wrote " << paths.partitions->string() << '\n';
  std::cout << "wrote " << paths.meta.string() << '\n';
  return kExitOk;
}

int cmd_oracle(const zoomrl::ExperimentConfig& c) {
  const auto env = zoomrl::build_environment(c);
  const auto table = zoomrl::optimal_values(*env, c.grid_resolution);
  const auto s1 = zoomrl::reset(*env, 1, c.seeds.front());
  std::cout << zoomrl::detail::format_double(table.lookahead(*env, 1, s1)) << '\n';
  return kExitOk;
}

int cmd_census(const zoomrl::ExperimentConfig& c, unsigned threads) {
  if (c.agent != zoomrl::AgentKind::zoomrl) throw zoomrl::ConfigError("agent", "census needs the zoomrl agent");
  zoomrl::RunOptions opt;
  opt.threads = threads;
  const auto results = zoomrl::run_seeds(c, opt);
  zoomrl::write_census_csv(std::cout, results);
  std::size_t violations = 0;
  for (const auto& r : results)
    for (const auto& row : r.census) violations += row.count > row.packing_bound ? 1 : 0;
  if (violations > 0) {
    std::cerr << violations << " census rows exceed the packing bound\n";
    return kExitInvariant;
  }
  return kExitOk;
}

int cmd_verify(const zoomrl::ExperimentConfig& c, unsigned threads, std::size_t samples) {
  if (c.agent != zoomrl::AgentKind::zoomrl) throw zoomrl::ConfigError("agent", "verify needs the zoomrl agent");
  zoomrl::RunOptions opt;
  opt.monitor = true;
  opt.monitor_samples = samples;
  opt.threads = threads;
  const auto results = zoomrl::run_seeds(c, opt);
  bool ok = true;
  for (const auto& r : results) {
    bool final_ok = true;
    for (const auto& rep : r.final_reports) final_ok = final_ok && rep.ok();
    std::cout << "seed " << r.seed << ": " << r.memory << " balls, " << r.invariant_failures << " failing episodes, final "
              << (final_ok ? "ok" : "FAILED") << '\n';
    ok = ok && final_ok && r.invariant_failures == 0;
  }
  std::cout << (ok ? "invariants hold" : "invariant violations found") << '\n';
  return ok ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive metric-space discretization for episodic Q-learning"};
  app.set_version_flag("--version", zoomrl::kVersion);
  app.require_subcommand(1);

  std::string config;
  std::string out;
  bool trace = false;
  bool dump = false;
  unsigned threads = 0;
  std::size_t samples = zoomrl::kCoverageSamples;

  auto* run = app.add_subcommand("run", "run every seed and write regret, census and meta files");
  run->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory (overrides output_dir)");
  run->add_flag("--trace", trace, "also write one row per step to trace.csv");
  run->add_flag("--dump-partitions", dump, "write final partitions to partitions.json");
  run->add_option("--threads", threads, "worker threads (default: ZOOMRL_THREADS or all cores)");

  auto* oracle = app.add_subcommand("oracle", "print V*_1 at the first seed's initial state");
  oracle->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

  auto* census = app.add_subcommand("census", "print the ball census after every seed");
  census->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  census->add_option("--threads", threads, "worker threads");

  auto* verify = app.add_subcommand("verify", "check partition invariants after every episode");
  verify->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  verify->add_option("--threads", threads, "worker threads");
  verify->add_option("--samples", samples, "coverage samples per step")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto cfg = zoomrl::ExperimentConfig::from_file(config);
    if (*run) return cmd_run(cfg, out, trace, dump, threads);
    if (*oracle) return cmd_oracle(cfg);
    if (*census) return cmd_census(cfg, threads);
    return cmd_verify(cfg, threads, samples);
  } catch (const zoomrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const zoomrl::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const zoomrl::InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  }
}
