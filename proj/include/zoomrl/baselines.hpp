#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "zoomrl/agent.hpp"
#include "zoomrl/environments.hpp"
#include "zoomrl/errors.hpp"
#include "zoomrl/metric_space.hpp"

namespace zoomrl {

/// Tabular space with unit distance between distinct pairs.
inline MetricSpace tabular_metric_space(int num_states, int num_actions) {
  return MetricSpace::tabular(num_states, num_actions);
}

/// eps = K^(-1/(d+2)), capped at 1.
inline double default_net_eps(int K, double covering_dim) {
  if (K < 1) throw ContractError("default_net_eps: K must be >= 1");
  if (!(covering_dim >= 0.0)) throw ContractError("default_net_eps: covering dimension must be >= 0");
  return std::min(1.0, std::pow(static_cast<double>(K), -1.0 / (covering_dim + 2.0)));
}

/// Optimistic Q-learning over a fixed eps-net: states snap to the nearest
/// net state and actions range over the net actions. The update matches the
/// adaptive agent's with a constant discretization bias in place of 2L rad.
class NetAgent {
 public:
  /// Uniform-net learner with bias 2 L eps.
  static NetAgent nbql(std::shared_ptr<const MetricSpace> space, double eps, HyperParams hyper, std::uint64_t seed = 0) {
    return NetAgent(std::move(space), eps, hyper, seed, "nbql", true);
  }
  /// Exact tabular learner: one cell per pair and no discretization bias.
  static NetAgent tabular_qucb(std::shared_ptr<const MetricSpace> space, HyperParams hyper, std::uint64_t seed = 0) {
    if (!space || !space->is_tabular()) throw ContractError("tabular_qucb: needs a tabular space");
    return NetAgent(std::move(space), 0.5, hyper, seed, "tabular_qucb", false);
  }

  const std::string& name() const noexcept { return name_; }
  double eps() const noexcept { return eps_; }
  const HyperParams& hyper() const noexcept { return hyper_; }
  int episode() const noexcept { return episode_; }
  const NetAxes& net() const noexcept { return net_; }
  std::size_t state_cells() const noexcept { return num_states_; }
  std::size_t action_cells() const noexcept { return num_actions_; }
  /// Cells per step (|net|).
  std::size_t net_size() const noexcept { return num_states_ * num_actions_; }
  /// Cells held across all steps (|net| H).
  std::size_t memory_cells() const noexcept { return net_size() * static_cast<std::size_t>(hyper_.H); }
  double bias() const noexcept { return bias_; }

  std::size_t cell(std::size_t state_index, std::size_t action_index) const noexcept {
    return state_index * num_actions_ + action_index;
  }
  double q_hat(int h, std::size_t c) const { return q_.at(static_cast<std::size_t>(h - 1)).at(c); }
  std::int64_t visits(int h, std::size_t c) const { return n_.at(static_cast<std::size_t>(h - 1)).at(c); }

  /// Highest-q net action at the snapped state; ties go to the lowest index.
  std::size_t greedy_action_index(int h, const Coords& s) const {
    const std::size_t si = net_.nearest_state(s);
    const auto& q = q_.at(static_cast<std::size_t>(h - 1));
    std::size_t best = 0;
    for (std::size_t j = 1; j < num_actions_; ++j)
      if (q[cell(si, j)] > q[cell(si, best)]) best = j;
    return best;
  }
  Coords greedy_action(int h, const Coords& s) const { return net_.action_at(greedy_action_index(h, s)); }

  double value_estimate(int h, const Coords& s) const {
    if (h == hyper_.H + 1) return 0.0;
    if (h < 1 || h > hyper_.H + 1) throw ContractError("value_estimate: h outside [1, H + 1]");
    const std::size_t si = net_.nearest_state(s);
    const auto& q = q_[static_cast<std::size_t>(h - 1)];
    double best = q[cell(si, 0)];
    for (std::size_t j = 1; j < num_actions_; ++j) best = std::max(best, q[cell(si, j)]);
    return std::min(static_cast<double>(hyper_.H), best);
  }

  EpisodeRecord run_episode(const Environment& env, int k) {
    if (k != episode_ + 1) throw ContractError("run_episode: episodes must run in order");
    if (env.horizon() != hyper_.H) throw ContractError("run_episode: environment horizon differs from H");
    const SeedStream stream(seed_);
    EpisodeRecord rec;
    rec.k = k;
    rec.initial_state = reset(env, k, seed_);
    Coords s = rec.initial_state;
    for (int h = 1; h <= hyper_.H; ++h) {
      const std::size_t si = net_.nearest_state(s);
      const std::size_t aj = greedy_action_index(h, s);
      const std::size_t c = cell(si, aj);
      const Coords a = net_.action_at(aj);
      const Transition tr = step(env, h, s, a, stream, k);
      StepRecord sr;
      sr.k = k;
      sr.h = h;
      sr.state = s;
      sr.action = a;
      sr.ball_id = static_cast<int>(c);
      sr.depth = 0;
      sr.reward = tr.reward;
      sr.next_state = tr.next_state;
      sr.v_next = value_estimate(h + 1, tr.next_state);
      auto& q = q_[static_cast<std::size_t>(h - 1)][c];
      const std::int64_t t = ++n_[static_cast<std::size_t>(h - 1)][c];
      const double alpha = learning_rate(t, hyper_.H);
      q = (1.0 - alpha) * q + alpha * (tr.reward + sr.v_next + bonus(t, hyper_) + bias_);
      sr.t_after = t;
      rec.realized_return += tr.reward;
      rec.steps.push_back(sr);
      s = tr.next_state;
    }
    episode_ = k;
    return rec;
  }

 private:
  NetAgent(std::shared_ptr<const MetricSpace> space, double eps, HyperParams hyper, std::uint64_t seed, std::string name,
           bool biased)
      : space_(std::move(space)), hyper_(hyper), seed_(seed), eps_(eps), name_(std::move(name)) {
    if (!space_) throw ContractError("NetAgent: null space");
    hyper_.validate();
    net_ = covering_axes(*space_, eps);
    num_states_ = net_.state_count();
    num_actions_ = net_.action_count();
    bias_ = biased ? 2.0 * hyper_.L * eps : 0.0;
    q_.assign(static_cast<std::size_t>(hyper_.H), std::vector<double>(net_size(), static_cast<double>(hyper_.H)));
    n_.assign(static_cast<std::size_t>(hyper_.H), std::vector<std::int64_t>(net_size(), 0));
  }

  std::shared_ptr<const MetricSpace> space_;
  HyperParams hyper_;
  std::uint64_t seed_;
  double eps_;
  std::string name_;
  NetAxes net_;
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  double bias_ = 0.0;
  std::vector<std::vector<double>> q_;
  std::vector<std::vector<std::int64_t>> n_;
  int episode_ = 0;
};

}  // namespace zoomrl
