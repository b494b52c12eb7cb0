#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zoomrl/errors.hpp"
#include "zoomrl/metric_space.hpp"
#include "zoomrl/partition.hpp"

namespace zoomrl {

/// Counter-based uniform noise: every draw is a pure function of
/// (seed, episode, step, purpose, index), so an episode can be replayed
/// without carrying generator state around.
class SeedStream {
 public:
  enum class Purpose : std::uint64_t { initial_state = 1, transition = 2, evaluation = 3 };

  explicit SeedStream(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double uniform(std::uint64_t k, std::uint64_t h, Purpose purpose, std::uint64_t index = 0) const noexcept {
    std::uint64_t x = detail::mix64(seed_);
    x = detail::mix64(x ^ k);
    x = detail::mix64(x ^ (h << 8) ^ static_cast<std::uint64_t>(purpose));
    x = detail::mix64(x ^ index);
    return static_cast<double>(x >> 11) * 0x1.0p-53;
  }

  std::vector<double> draws(std::uint64_t k, std::uint64_t h, Purpose purpose, std::size_t n) const {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = uniform(k, h, purpose, i);
    return out;
  }

 private:
  std::uint64_t seed_;
};

/// Episodic finite-horizon MDP with known dynamics. Randomness enters only
/// through the uniform draws passed in, so the oracle can integrate over it.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::map<std::string, double> params() const = 0;
  virtual const std::shared_ptr<const MetricSpace>& space_ptr() const = 0;
  virtual int horizon() const = 0;

  /// r_h(s, a) in [0, 1].
  virtual double reward(int h, const Coords& s, const Coords& a) const = 0;
  virtual Coords transition(int h, const Coords& s, const Coords& a, std::span<const double> noise) const = 0;
  virtual Coords initial_state(int k, std::span<const double> noise) const = 0;

  virtual std::size_t transition_noise_dim() const { return 0; }
  virtual std::size_t initial_noise_dim() const { return 0; }

  /// Certified Lipschitz constant of Q* (of its Lipschitz part when misspecified).
  virtual double lipschitz_constant() const = 0;
  /// Uniform bound on the perturbation added to a Lipschitz base model.
  virtual double misspecification() const { return 0.0; }
  /// Extra actions worth checking at state s when maximizing on a grid.
  virtual std::vector<Coords> candidate_actions(int /*h*/, const Coords& /*s*/) const { return {}; }

  const MetricSpace& space() const { return *space_ptr(); }
  bool deterministic() const { return transition_noise_dim() == 0; }
};

using EnvironmentPtr = std::shared_ptr<const Environment>;

inline Coords reset(const Environment& env, int k, std::uint64_t seed) {
  const SeedStream stream(seed);
  const auto noise = stream.draws(static_cast<std::uint64_t>(k), 0, SeedStream::Purpose::initial_state, env.initial_noise_dim());
  return env.initial_state(k, noise);
}

struct Transition {
  double reward = 0.0;
  Coords next_state;
};

inline Transition step(const Environment& env, int h, const Coords& s, const Coords& a, std::span<const double> noise) {
  if (h < 1 || h > env.horizon()) throw ContractError("step: h outside [1, H]");
  if (!env.space().contains_state(s)) throw DomainError("step: state outside bounds");
  if (!env.space().is_valid_action(a)) throw DomainError("step: action outside bounds");
  return {env.reward(h, s, a), env.transition(h, s, a, noise)};
}

inline Transition step(const Environment& env, int h, const Coords& s, const Coords& a, const SeedStream& stream, int k) {
  const auto noise = stream.draws(static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(h), SeedStream::Purpose::transition,
                                  env.transition_noise_dim());
  return step(env, h, s, a, noise);
}

/// S = A = [0, 1] under product_max. s' = clamp(s + 0.2 (a - 0.5) [+ noise]),
/// r(s, a) = max(0, 1 - 2|a - s|). Every state can earn reward 1 by playing
/// a = s, so V*_h = H - h + 1 and Q* inherits the reward's Lipschitz
/// constant, 4 under the max metric.
class BumpLine final : public Environment {
 public:
  /// start < 0 draws s_1 uniformly; otherwise s_1 = start.
  BumpLine(int horizon, double start = -1.0, double noise = 0.0)
      : space_(std::make_shared<const MetricSpace>(MetricSpace::box({{0.0, 1.0}}, {{0.0, 1.0}}))),
        horizon_(horizon),
        start_(start),
        noise_(noise) {
    if (horizon < 1) throw ContractError("BumpLine: H must be >= 1");
    if (start > 1.0) throw ContractError("BumpLine: start outside [0, 1]");
    if (noise < 0.0) throw ContractError("BumpLine: noise must be >= 0");
  }

  std::string name() const override { return noise_ > 0.0 ? "bump_line_noisy" : "bump_line"; }
  std::map<std::string, double> params() const override { return {{"H", horizon_}, {"start", start_}, {"noise", noise_}}; }
  const std::shared_ptr<const MetricSpace>& space_ptr() const override { return space_; }
  int horizon() const override { return horizon_; }

  double reward(int, const Coords& s, const Coords& a) const override {
    return std::max(0.0, 1.0 - 2.0 * std::abs(a[0] - s[0]));
  }
  Coords transition(int, const Coords& s, const Coords& a, std::span<const double> noise) const override {
    double next = s[0] + 0.2 * (a[0] - 0.5);
    if (noise_ > 0.0) next += noise_ * (2.0 * noise[0] - 1.0);
    return Coords{std::clamp(next, 0.0, 1.0)};
  }
  Coords initial_state(int, std::span<const double> noise) const override {
    return Coords{start_ >= 0.0 ? start_ : noise[0]};
  }
  std::size_t transition_noise_dim() const override { return noise_ > 0.0 ? 1 : 0; }
  std::size_t initial_noise_dim() const override { return start_ >= 0.0 ? 0 : 1; }
  double lipschitz_constant() const override { return 4.0; }
  std::vector<Coords> candidate_actions(int, const Coords& s) const override { return {s}; }

 private:
  std::shared_ptr<const MetricSpace> space_;
  int horizon_;
  double start_;
  double noise_;
};

/// N states in a row, actions {0: left, 1: right}, deterministic moves
/// clamped at the ends. Reward 1 for choosing "right" in the last state.
/// Starts in state 0, so V*_1 = max(0, H - (N - 1)).
class TabularChain final : public Environment {
 public:
  TabularChain(int horizon, int num_states = 5)
      : space_(std::make_shared<const MetricSpace>(MetricSpace::tabular(num_states, 2))),
        horizon_(horizon),
        num_states_(num_states) {
    if (horizon < 1) throw ContractError("TabularChain: H must be >= 1");
    if (num_states < 2) throw ContractError("TabularChain: need at least 2 states");
  }

  std::string name() const override { return "tabular_chain"; }
  std::map<std::string, double> params() const override { return {{"H", horizon_}, {"num_states", num_states_}}; }
  const std::shared_ptr<const MetricSpace>& space_ptr() const override { return space_; }
  int horizon() const override { return horizon_; }

  double reward(int, const Coords& s, const Coords& a) const override {
    return (static_cast<int>(s[0]) == num_states_ - 1 && a[0] == 1.0) ? 1.0 : 0.0;
  }
  Coords transition(int, const Coords& s, const Coords& a, std::span<const double>) const override {
    const int move = a[0] == 1.0 ? 1 : -1;
    return Coords{static_cast<double>(std::clamp(static_cast<int>(s[0]) + move, 0, num_states_ - 1))};
  }
  Coords initial_state(int, std::span<const double>) const override { return Coords{0.0}; }
  // Q* takes values in [0, H] and distinct pairs sit at distance 1.
  double lipschitz_constant() const override { return static_cast<double>(horizon_); }

 private:
  std::shared_ptr<const MetricSpace> space_;
  int horizon_;
  int num_states_;
};

/// Reward replaced by clamp(r + eps sin(frequency pi a_0), 0, 1); dynamics
/// unchanged. Each reward moves by at most eps.
class Misspecified final : public Environment {
 public:
  Misspecified(EnvironmentPtr base, double epsilon, double frequency)
      : base_(std::move(base)), epsilon_(epsilon), frequency_(frequency) {
    if (!base_) throw ContractError("Misspecified: null base environment");
    if (epsilon < 0.0) throw ContractError("Misspecified: epsilon must be >= 0");
  }

  std::string name() const override { return "misspec(" + base_->name() + ")"; }
  std::map<std::string, double> params() const override {
    auto p = base_->params();
    p["epsilon"] = epsilon_;
    p["frequency"] = frequency_;
    return p;
  }
  const std::shared_ptr<const MetricSpace>& space_ptr() const override { return base_->space_ptr(); }
  int horizon() const override { return base_->horizon(); }

  double perturbation(const Coords& a) const { return epsilon_ * std::sin(frequency_ * std::numbers::pi * a[0]); }

  double reward(int h, const Coords& s, const Coords& a) const override {
    const double r = base_->reward(h, s, a);
    if (epsilon_ == 0.0) return r;
    return std::clamp(r + perturbation(a), 0.0, 1.0);
  }
  Coords transition(int h, const Coords& s, const Coords& a, std::span<const double> noise) const override {
    return base_->transition(h, s, a, noise);
  }
  Coords initial_state(int k, std::span<const double> noise) const override { return base_->initial_state(k, noise); }
  std::size_t transition_noise_dim() const override { return base_->transition_noise_dim(); }
  std::size_t initial_noise_dim() const override { return base_->initial_noise_dim(); }
  double lipschitz_constant() const override { return base_->lipschitz_constant(); }
  double misspecification() const override { return epsilon_; }
  std::vector<Coords> candidate_actions(int h, const Coords& s) const override { return base_->candidate_actions(h, s); }

  const Environment& base() const noexcept { return *base_; }
  double epsilon() const noexcept { return epsilon_; }

 private:
  EnvironmentPtr base_;
  double epsilon_;
  double frequency_;
};

inline EnvironmentPtr make_misspecified(EnvironmentPtr env, double epsilon, double frequency) {
  return std::make_shared<const Misspecified>(std::move(env), epsilon, frequency);
}

/// Builds a built-in environment by name: bump_line, bump_line_noisy,
/// tabular_chain, misspec_bump. Unknown names or bad parameters raise
/// ConfigError naming the field.
inline EnvironmentPtr make_environment(const std::string& name, const std::map<std::string, double>& params, int horizon) {
  auto get = [&](const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  };
  try {
    if (name == "bump_line") return std::make_shared<const BumpLine>(horizon, get("start", -1.0), get("noise", 0.0));
    if (name == "bump_line_noisy") return std::make_shared<const BumpLine>(horizon, get("start", -1.0), get("noise", 0.05));
    if (name == "tabular_chain")
      return std::make_shared<const TabularChain>(horizon, static_cast<int>(get("num_states", 5)));
    if (name == "misspec_bump") {
      auto base = std::make_shared<const BumpLine>(horizon, get("start", -1.0), get("noise", 0.0));
      return make_misspecified(base, get("epsilon", 0.05), get("frequency", 50.0));
    }
  } catch (const ContractError& e) {
    throw ConfigError("env.params", e.what());
  }
  throw ConfigError("env.name", "unknown environment '" + name + "'");
}

}  // namespace zoomrl
