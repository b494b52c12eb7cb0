#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "zoomrl/agent.hpp"
#include "zoomrl/baselines.hpp"
#include "zoomrl/environments.hpp"
#include "zoomrl/errors.hpp"
#include "zoomrl/metric_space.hpp"
#include "zoomrl/oracle.hpp"
#include "zoomrl/partition.hpp"

namespace zoomrl {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr std::size_t kCoverageSamples = 10000;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgentKind { zoomrl, nbql, tabular_qucb };

inline std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::zoomrl: return "zoomrl";
    case AgentKind::nbql: return "nbql";
    case AgentKind::tabular_qucb: return "tabular_qucb";
  }
  return "unknown";
}

struct ExperimentConfig {
  std::string env_name = "bump_line";
  std::map<std::string, double> env_params;
  AgentKind agent = AgentKind::zoomrl;
  int H = 3;
  int K = 1000;
  std::optional<double> L;  ///< defaults to the environment's certified constant
  double p = 0.1;
  std::optional<double> eps_misspec;
  std::vector<std::uint64_t> seeds{0};
  std::size_t grid_resolution = kDefaultGridResolution;
  std::string output_dir = "out";
  std::optional<double> net_eps;       ///< nbql only; defaults to K^(-1/(d+2))
  std::optional<double> covering_dim;  ///< defaults to the total number of axes

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
};

namespace detail {

template <class T>
T json_field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path, "missing or has the wrong type");
  }
}

inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  using detail::json_field;
  if (!j.is_object()) throw ConfigError("$", "config must be a JSON object");
  static const std::vector<std::string> known{"env", "agent", "H", "K", "L", "p", "eps_misspec", "seeds",
                                              "grid_resolution", "output_dir", "net_eps", "covering_dim"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(key, "unknown field");

  ExperimentConfig c;
  const auto env = j.find("env");
  if (env == j.end() || !env->is_object()) throw ConfigError("env", "missing or not an object");
  c.env_name = json_field<std::string>(*env, "name", "env.name");
  if (env->contains("params")) {
    const auto& params = env->at("params");
    if (!params.is_object()) throw ConfigError("env.params", "must be an object of numbers");
    for (const auto& [key, value] : params.items()) {
      if (!value.is_number()) throw ConfigError("env.params." + key, "must be a number");
      c.env_params[key] = value.get<double>();
    }
  }
  if (j.contains("agent")) {
    const auto name = json_field<std::string>(j, "agent", "agent");
    if (name == "zoomrl") c.agent = AgentKind::zoomrl;
    else if (name == "nbql") c.agent = AgentKind::nbql;
    else if (name == "tabular_qucb") c.agent = AgentKind::tabular_qucb;
    else throw ConfigError("agent", "expected zoomrl, nbql or tabular_qucb");
  }
  c.H = json_field<int>(j, "H", "H");
  c.K = json_field<int>(j, "K", "K");
  if (c.H < 1) throw ConfigError("H", "must be >= 1");
  if (c.K < 1) throw ConfigError("K", "must be >= 1");
  if (j.contains("L")) {
    c.L = json_field<double>(j, "L", "L");
    if (!(*c.L > 0.0)) throw ConfigError("L", "must be > 0");
  }
  if (j.contains("p")) c.p = json_field<double>(j, "p", "p");
  if (!(c.p > 0.0 && c.p < 1.0)) throw ConfigError("p", "must lie in (0, 1)");
  if (j.contains("eps_misspec")) {
    c.eps_misspec = json_field<double>(j, "eps_misspec", "eps_misspec");
    if (!(*c.eps_misspec >= 0.0)) throw ConfigError("eps_misspec", "must be >= 0");
  }
  if (j.contains("seeds")) {
    const auto& seeds = j.at("seeds");
    if (!seeds.is_array() || seeds.empty()) throw ConfigError("seeds", "must be a nonempty array");
    c.seeds.clear();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].is_number_integer() || seeds[i].get<std::int64_t>() < 0) throw ConfigError("seeds[" + std::to_string(i) + "]", "must be a nonnegative integer");
      c.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
  }
  if (j.contains("grid_resolution")) {
    const auto& g = j.at("grid_resolution");
    if (!g.is_number_integer() || g.get<std::int64_t>() < static_cast<std::int64_t>(kMinOracleResolution))
      throw ConfigError("grid_resolution", "must be an integer >= 16");
    c.grid_resolution = g.get<std::size_t>();
  }
  if (j.contains("output_dir")) c.output_dir = json_field<std::string>(j, "output_dir", "output_dir");
  if (j.contains("net_eps")) {
    c.net_eps = json_field<double>(j, "net_eps", "net_eps");
    if (!(*c.net_eps > 0.0 && *c.net_eps <= 1.0)) throw ConfigError("net_eps", "must lie in (0, 1]");
  }
  if (j.contains("covering_dim")) {
    c.covering_dim = json_field<double>(j, "covering_dim", "covering_dim");
    if (!(*c.covering_dim >= 0.0)) throw ConfigError("covering_dim", "must be >= 0");
  }
  return c;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return from_json(j);
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["env"] = {{"name", env_name}, {"params", env_params}};
  j["agent"] = to_string(agent);
  j["H"] = H;
  j["K"] = K;
  if (L) j["L"] = *L;
  j["p"] = p;
  if (eps_misspec) j["eps_misspec"] = *eps_misspec;
  j["seeds"] = seeds;
  j["grid_resolution"] = grid_resolution;
  j["output_dir"] = output_dir;
  if (net_eps) j["net_eps"] = *net_eps;
  if (covering_dim) j["covering_dim"] = *covering_dim;
  return j;
}

/// Environment named by the config; eps_misspec sets the perturbation size
/// of misspec_bump or wraps any other environment.
inline EnvironmentPtr build_environment(const ExperimentConfig& c) {
  auto params = c.env_params;
  if (c.eps_misspec && c.env_name == "misspec_bump") params["epsilon"] = *c.eps_misspec;
  EnvironmentPtr env = make_environment(c.env_name, params, c.H);
  if (c.eps_misspec && c.env_name != "misspec_bump" && *c.eps_misspec > 0.0) {
    const auto f = params.find("frequency");
    env = make_misspecified(env, *c.eps_misspec, f == params.end() ? 50.0 : f->second);
  }
  if (c.agent == AgentKind::tabular_qucb && !env->space().is_tabular())
    throw ConfigError("agent", "tabular_qucb needs a tabular environment");
  return env;
}

inline HyperParams hyper_params(const ExperimentConfig& c, const Environment& env) {
  HyperParams h;
  h.H = c.H;
  h.K = c.K;
  h.L = c.L.value_or(env.lipschitz_constant());
  h.p = c.p;
  h.validate();
  return h;
}

inline double net_eps(const ExperimentConfig& c, const Environment& env) {
  if (c.net_eps) return *c.net_eps;
  const double d = c.covering_dim.value_or(static_cast<double>(env.space().total_dim()));
  return default_net_eps(c.K, d);
}

struct CensusRow {
  std::uint64_t seed = 0;
  int h = 0;
  int depth = 0;
  std::size_t count = 0;
  std::size_t packing_bound = 0;
};

/// Balls per (h, depth) next to the analytic packing number M(2^-depth).
inline std::vector<CensusRow> census(const ZoomAgent& agent, std::uint64_t seed) {
  std::vector<CensusRow> rows;
  for (int h = 1; h <= agent.hyper().H; ++h) {
    const Partition& part = agent.partition(h);
    for (int d = 0; d <= part.max_depth(); ++d)
      rows.push_back({seed, h, d, part.ids_at_depth(d).size(), analytic_packing_number(part.space(), std::ldexp(1.0, -d))});
  }
  return rows;
}

inline nlohmann::json partition_to_json(const Partition& part) {
  nlohmann::json balls = nlohmann::json::array();
  for (const Ball& b : part.balls()) {
    nlohmann::json j;
    j["id"] = b.id;
    j["center"] = {{"state", std::vector<double>(b.center.state.begin(), b.center.state.end())},
                   {"action", std::vector<double>(b.center.action.begin(), b.center.action.end())}};
    j["depth"] = b.depth;
    j["q_hat"] = b.q_hat;
    j["visits"] = b.visits;
    j["parent_id"] = b.parent_id ? nlohmann::json(*b.parent_id) : nlohmann::json(nullptr);
    balls.push_back(std::move(j));
  }
  return {{"step", part.step()}, {"balls", std::move(balls)}};
}

struct RunOptions {
  bool trace = false;
  bool monitor = false;  ///< check partition invariants after every episode
  std::size_t monitor_samples = kCoverageSamples;
  bool keep_partitions = false;
  unsigned threads = 0;  ///< 0: ZOOMRL_THREADS, else hardware concurrency
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<RegretRecord> regret;
  std::vector<CensusRow> census;
  std::vector<StepRecord> trace;
  std::size_t memory = 0;  ///< balls (zoomrl) or net cells (baselines) across all steps
  std::size_t skipped_activations = 0;
  std::size_t invariant_failures = 0;  ///< episodes after which a monitored check failed
  std::vector<InvariantReport> final_reports;
  nlohmann::json partitions;
  std::vector<double> optimism_gaps;  ///< V_1(s_1^k) - V*_1(s_1^k) at the start of each episode (zoomrl only)
};

/// Runs one seeded trial: K episodes, regret against the oracle table, and
/// whatever the options ask for.
inline SeedResult run_seed(const ExperimentConfig& c, const EnvironmentPtr& env, const ValueTable& table, std::uint64_t seed,
                           const RunOptions& opt = {}) {
  const HyperParams hp = hyper_params(c, *env);
  SeedResult out;
  out.seed = seed;
  std::vector<EpisodeRecord> episodes;
  episodes.reserve(static_cast<std::size_t>(c.K));
  auto keep = [&](EpisodeRecord&& rec) {
    if (opt.trace) out.trace.insert(out.trace.end(), rec.steps.begin(), rec.steps.end());
    rec.steps.clear();
    rec.steps.shrink_to_fit();
    episodes.push_back(std::move(rec));
  };
  if (c.agent == AgentKind::zoomrl) {
    ZoomAgent agent(env->space_ptr(), hp, seed);
    std::vector<InvariantMonitor> monitors;
    if (opt.monitor)
      for (int h = 1; h <= hp.H; ++h) monitors.emplace_back(agent.partition(h), opt.monitor_samples, seed * 7919 + static_cast<std::uint64_t>(h));
    for (int k = 1; k <= c.K; ++k) {
      const Coords s1 = reset(*env, k, seed);
      out.optimism_gaps.push_back(agent.value_estimate(1, s1) - table.lookahead(*env, 1, s1));
      keep(agent.run_episode(*env, k));
      if (opt.monitor) {
        bool ok = true;
        for (int h = 1; h <= hp.H; ++h) ok = monitors[static_cast<std::size_t>(h - 1)].refresh(agent.partition(h)).ok() && ok;
        if (!ok) ++out.invariant_failures;
      }
    }
    out.census = census(agent, seed);
    out.memory = agent.total_balls();
    out.skipped_activations = agent.skipped_activations();
    if (opt.monitor)
      for (int h = 1; h <= hp.H; ++h) out.final_reports.push_back(verify_invariants(agent.partition(h), opt.monitor_samples, seed + 17));
    if (opt.keep_partitions) {
      out.partitions = nlohmann::json::array();
      for (int h = 1; h <= hp.H; ++h) out.partitions.push_back(partition_to_json(agent.partition(h)));
    }
  } else {
    NetAgent agent = c.agent == AgentKind::nbql ? NetAgent::nbql(env->space_ptr(), net_eps(c, *env), hp, seed)
                                                : NetAgent::tabular_qucb(env->space_ptr(), hp, seed);
    for (int k = 1; k <= c.K; ++k) keep(agent.run_episode(*env, k));
    out.memory = agent.memory_cells();
  }
  out.regret = regret_curve(episodes, table, *env, c.K);
  return out;
}

inline unsigned worker_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ZOOMRL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs every seed on a worker pool; results come back in seed order.
inline std::vector<SeedResult> run_seeds(const ExperimentConfig& c, const RunOptions& opt = {}) {
  const EnvironmentPtr env = build_environment(c);
  hyper_params(c, *env);
  const ValueTable table = optimal_values(*env, c.grid_resolution);
  std::vector<SeedResult> results(c.seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < c.seeds.size(); i = next++) {
      try {
        results[i] = run_seed(c, env, table, c.seeds[i], opt);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<unsigned>(worker_count(opt.threads), static_cast<unsigned>(c.seeds.size()));
  if (n <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

struct ArtifactPaths {
  std::filesystem::path regret;
  std::filesystem::path census;
  std::filesystem::path meta;
  std::optional<std::filesystem::path> trace;
  std::optional<std::filesystem::path> partitions;
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

inline void close_output(std::ofstream& out, const std::filesystem::path& p) {
  out.close();
  if (!out) throw IoError("failed writing '" + p.string() + "'");
}

}  // namespace detail

inline void write_regret_csv(std::ostream& out, const std::vector<SeedResult>& results) {
  using detail::format_double;
  out << "seed,k,v_star,v_pi,increment,cumulative\n";
  for (const auto& r : results)
    for (const auto& g : r.regret)
      out << r.seed << ',' << g.k << ',' << format_double(g.v_star_s1) << ',' << format_double(g.v_pi_s1) << ','
          << format_double(g.increment) << ',' << format_double(g.cumulative) << '\n';
}

inline void write_census_csv(std::ostream& out, const std::vector<SeedResult>& results) {
  out << "seed,h,depth,count,packing_bound\n";
  for (const auto& r : results)
    for (const auto& c : r.census) out << c.seed << ',' << c.h << ',' << c.depth << ',' << c.count << ',' << c.packing_bound << '\n';
}

inline void write_trace_csv(std::ostream& out, const std::vector<SeedResult>& results) {
  using detail::format_double;
  out << "seed,k,h,ball_id,depth,reward,v_next,t_after\n";
  for (const auto& r : results)
    for (const auto& s : r.trace)
      out << r.seed << ',' << s.k << ',' << s.h << ',' << s.ball_id << ',' << s.depth << ',' << format_double(s.reward) << ','
          << format_double(s.v_next) << ',' << s.t_after << '\n';
}

/// Runs the experiment and writes regret.csv, census.csv and meta.json
/// (plus trace.csv and partitions.json on request) under `out_dir`.
inline ArtifactPaths run_experiment(const ExperimentConfig& c, RunOptions opt = {}, std::optional<std::string> out_dir = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path dir = out_dir.value_or(c.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const auto results = run_seeds(c, opt);
  const EnvironmentPtr env = build_environment(c);
  const HyperParams hp = hyper_params(c, *env);

  ArtifactPaths paths{dir / "regret.csv", dir / "census.csv", dir / "meta.json", std::nullopt, std::nullopt};
  {
    auto out = detail::open_output(paths.regret);
    write_regret_csv(out, results);
    detail::close_output(out, paths.regret);
  }
  {
    auto out = detail::open_output(paths.census);
    write_census_csv(out, results);
    detail::close_output(out, paths.census);
  }
  if (opt.trace) {
    paths.trace = dir / "trace.csv";
    auto out = detail::open_output(*paths.trace);
    write_trace_csv(out, results);
    detail::close_output(out, *paths.trace);
  }
  if (opt.keep_partitions && c.agent == AgentKind::zoomrl) {
    paths.partitions = dir / "partitions.json";
    nlohmann::json j = nlohmann::json::object();
    for (const auto& r : results) j[std::to_string(r.seed)] = r.partitions;
    auto out = detail::open_output(*paths.partitions);
    out << j.dump(1) << '\n';
    detail::close_output(out, *paths.partitions);
  }
  nlohmann::json meta;
  meta["config"] = c.to_json();
  meta["version"] = kVersion;
  meta["compiler"] = __VERSION__;
  meta["json_library"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                         std::to_string(NLOHMANN_JSON_VERSION_PATCH);
  meta["environment"] = {{"name", env->name()}, {"params", env->params()}, {"deterministic", env->deterministic()}};
  meta["hyper"] = {{"H", hp.H}, {"K", hp.K}, {"L", hp.L}, {"p", hp.p}, {"iota", hp.iota()}};
  meta["regret_estimated"] = !env->deterministic();
  if (c.agent == AgentKind::nbql) meta["net_eps"] = net_eps(c, *env);
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& r : results)
    per_seed.push_back({{"seed", r.seed},
                        {"memory", r.memory},
                        {"skipped_activations", r.skipped_activations},
                        {"final_cumulative_regret", r.regret.empty() ? 0.0 : r.regret.back().cumulative}});
  meta["seeds"] = per_seed;
  meta["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  {
    auto out = detail::open_output(paths.meta);
    out << meta.dump(2) << '\n';
    detail::close_output(out, paths.meta);
  }
  return paths;
}

}  // namespace zoomrl
