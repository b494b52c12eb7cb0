#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "zoomrl/agent.hpp"
#include "zoomrl/environments.hpp"
#include "zoomrl/errors.hpp"
#include "zoomrl/metric_space.hpp"

namespace zoomrl {

inline constexpr std::size_t kMinOracleResolution = 16;
inline constexpr std::size_t kNoiseNodes = 32;
inline constexpr std::size_t kMonteCarloRollouts = 512;
inline constexpr double kRegretTolerance = 1e-9;

/// Q* and V* on a product grid, by backward induction. Next states snap to
/// the nearest grid state; noise is integrated with the midpoint rule.
class ValueTable {
 public:
  int horizon() const noexcept { return horizon_; }
  std::size_t resolution() const noexcept { return resolution_; }
  const std::vector<std::vector<double>>& state_axes() const noexcept { return state_axes_; }
  const std::vector<std::vector<double>>& action_axes() const noexcept { return action_axes_; }
  std::size_t state_count() const noexcept { return states_.size(); }
  std::size_t action_count() const noexcept { return actions_.size(); }
  const Coords& state_at(std::size_t i) const { return states_.at(i); }
  const Coords& action_at(std::size_t j) const { return actions_.at(j); }

  /// Q*_h at grid state i and grid action j.
  double q_star(int h, std::size_t i, std::size_t j) const {
    check_step(h, horizon_);
    return q_[static_cast<std::size_t>(h - 1)][i * actions_.size() + j];
  }
  /// V*_h at grid state i (also maximizes over the environment's candidate actions).
  double v_star(int h, std::size_t i) const {
    if (h == horizon_ + 1) return 0.0;
    check_step(h, horizon_);
    return v_[static_cast<std::size_t>(h - 1)][i];
  }
  /// V*_h at the grid state nearest to s.
  double v_nearest(int h, const Coords& s) const { return v_star(h, nearest_state(s)); }

  std::size_t nearest_state(const Coords& s) const {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < state_axes_.size(); ++i) flat = flat * state_axes_[i].size() + nearest_on_axis(state_axes_[i], s[i]);
    return flat;
  }

  /// max_a r_h(s, a) + E V*_{h+1}(s') evaluated exactly at s over the grid
  /// and candidate actions; equals v_star at grid states.
  double lookahead(const Environment& env, int h, const Coords& s) const {
    check_step(h, horizon_);
    double best = -std::numeric_limits<double>::infinity();
    for (const Coords& a : actions_) best = std::max(best, backup(env, h, s, a));
    for (const Coords& a : env.candidate_actions(h, s))
      if (env.space().is_valid_action(a)) best = std::max(best, backup(env, h, s, a));
    return best;
  }

  /// r_h(s, a) + E V*_{h+1}(nearest(s')).
  double backup(const Environment& env, int h, const Coords& s, const Coords& a) const {
    double future = 0.0;
    if (h < horizon_) {
      if (noise_nodes_.empty()) {
        future = v_nearest(h + 1, env.transition(h, s, a, {}));
      } else {
        for (const auto& node : noise_nodes_) future += v_nearest(h + 1, env.transition(h, s, a, node));
        future /= static_cast<double>(noise_nodes_.size());
      }
    }
    return env.reward(h, s, a) + future;
  }

 private:
  friend ValueTable optimal_values(const Environment& env, std::size_t resolution);

  static void check_step(int h, int horizon) {
    if (h < 1 || h > horizon) throw ContractError("ValueTable: h outside [1, H]");
  }
  static std::size_t nearest_on_axis(const std::vector<double>& ax, double x) {
    auto it = std::lower_bound(ax.begin(), ax.end(), x);
    auto j = static_cast<std::size_t>(it - ax.begin());
    if (j == ax.size()) return ax.size() - 1;
    if (j > 0 && (x - ax[j - 1]) <= (ax[j] - x)) return j - 1;
    return j;
  }
  static std::vector<Coords> product(const std::vector<std::vector<double>>& axes) {
    std::size_t n = 1;
    for (const auto& ax : axes) n *= ax.size();
    std::vector<Coords> out;
    out.reserve(n);
    for (std::size_t f = 0; f < n; ++f) {
      Coords c = Coords::filled(axes.size(), 0.0);
      std::size_t rest = f;
      for (std::size_t i = axes.size(); i-- > 0;) {
        c[i] = axes[i][rest % axes[i].size()];
        rest /= axes[i].size();
      }
      out.push_back(c);
    }
    return out;
  }

  int horizon_ = 0;
  std::size_t resolution_ = 0;
  std::vector<std::vector<double>> state_axes_;
  std::vector<std::vector<double>> action_axes_;
  std::vector<Coords> states_;
  std::vector<Coords> actions_;
  std::vector<std::vector<double>> noise_nodes_;
  std::vector<std::vector<double>> q_;
  std::vector<std::vector<double>> v_;
};

/// Backward induction for h = H..1 on a grid of `resolution` intervals per
/// continuous axis (resolution + 1 points) or every integer for tabular axes.
inline ValueTable optimal_values(const Environment& env, std::size_t resolution = kDefaultGridResolution) {
  const MetricSpace& space = env.space();
  if (resolution < kMinOracleResolution) throw ContractError("optimal_values: resolution must be >= 16");
  if (space.total_dim() > kMaxGridDimension) throw PrecisionError("optimal_values: grid oracle supports at most 3 dimensions");
  ValueTable t;
  t.horizon_ = env.horizon();
  t.resolution_ = resolution;
  for (const Interval& iv : space.state_bounds()) t.state_axes_.push_back(space.axis_grid(iv, resolution + 1));
  for (const Interval& iv : space.action_bounds()) t.action_axes_.push_back(space.axis_grid(iv, resolution + 1));
  t.states_ = ValueTable::product(t.state_axes_);
  t.actions_ = ValueTable::product(t.action_axes_);
  const std::size_t nd = env.transition_noise_dim();
  if (nd > 0) {
    std::vector<std::vector<double>> axes(nd);
    for (auto& ax : axes)
      for (std::size_t i = 0; i < kNoiseNodes; ++i) ax.push_back((static_cast<double>(i) + 0.5) / static_cast<double>(kNoiseNodes));
    for (const Coords& c : ValueTable::product(axes)) t.noise_nodes_.emplace_back(c.begin(), c.end());
  }
  const auto H = static_cast<std::size_t>(env.horizon());
  t.q_.assign(H, std::vector<double>(t.states_.size() * t.actions_.size(), 0.0));
  t.v_.assign(H, std::vector<double>(t.states_.size(), 0.0));
  for (int h = env.horizon(); h >= 1; --h) {
    auto& q = t.q_[static_cast<std::size_t>(h - 1)];
    auto& v = t.v_[static_cast<std::size_t>(h - 1)];
    for (std::size_t i = 0; i < t.states_.size(); ++i) {
      const Coords& s = t.states_[i];
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < t.actions_.size(); ++j) {
        const double val = t.backup(env, h, s, t.actions_[j]);
        q[i * t.actions_.size() + j] = val;
        best = std::max(best, val);
      }
      for (const Coords& a : env.candidate_actions(h, s))
        if (space.is_valid_action(a)) best = std::max(best, t.backup(env, h, s, a));
      v[i] = best;
    }
  }
  return t;
}

using Policy = std::function<Coords(int h, const Coords& s)>;

struct PolicyValue {
  double value = 0.0;
  double standard_error = 0.0;
  bool exact = true;
};

/// V^pi_1(s1): one exact rollout for deterministic environments, otherwise
/// the mean of 512 rollouts driven by the evaluation noise stream.
inline PolicyValue evaluate_policy(const Environment& env, const Policy& policy, const Coords& s1, std::uint64_t seed = 0,
                                   std::size_t rollouts = kMonteCarloRollouts) {
  auto rollout = [&](std::uint64_t m) {
    const SeedStream stream(seed);
    Coords s = s1;
    double total = 0.0;
    for (int h = 1; h <= env.horizon(); ++h) {
      const auto noise = stream.draws(m, static_cast<std::uint64_t>(h), SeedStream::Purpose::evaluation, env.transition_noise_dim());
      const Transition tr = step(env, h, s, policy(h, s), noise);
      total += tr.reward;
      s = tr.next_state;
    }
    return total;
  };
  if (env.deterministic()) return {rollout(0), 0.0, true};
  if (rollouts < 2) throw ContractError("evaluate_policy: need at least 2 rollouts");
  double sum = 0.0;
  double sq = 0.0;
  for (std::size_t m = 0; m < rollouts; ++m) {
    const double r = rollout(m);
    sum += r;
    sq += r * r;
  }
  const double n = static_cast<double>(rollouts);
  const double mean = sum / n;
  const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n), false};
}

struct RegretRecord {
  int k = 0;
  double v_star_s1 = 0.0;
  double v_pi_s1 = 0.0;
  double increment = 0.0;
  double cumulative = 0.0;
  bool estimated = false;  ///< v_pi is a realized return rather than an exact value
};

/// Per-episode regret V*_1(s1) - V^pi_k_1(s1). A deterministic policy on a
/// deterministic environment earns exactly its realized return, so that is
/// V^pi_k; on stochastic environments the realized return is an unbiased
/// estimate and rows are flagged.
inline std::vector<RegretRecord> regret_curve(std::span<const EpisodeRecord> records, const ValueTable& table,
                                              const Environment& env) {
  if (table.horizon() != env.horizon()) throw ContractError("regret_curve: table horizon differs from the environment's");
  std::vector<RegretRecord> out;
  out.reserve(records.size());
  double cumulative = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EpisodeRecord& rec = records[i];
    if (rec.k != static_cast<int>(i) + 1) throw ContractError("regret_curve: expected one record per episode, in order");
    RegretRecord r;
    r.k = rec.k;
    r.v_star_s1 = table.lookahead(env, 1, rec.initial_state);
    r.v_pi_s1 = rec.realized_return;
    r.increment = r.v_star_s1 - r.v_pi_s1;
    cumulative += r.increment;
    r.cumulative = cumulative;
    r.estimated = !env.deterministic();
    out.push_back(r);
  }
  return out;
}

inline std::vector<RegretRecord> regret_curve(std::span<const EpisodeRecord> records, const ValueTable& table,
                                              const Environment& env, int expected_episodes) {
  if (static_cast<int>(records.size()) != expected_episodes)
    throw ContractError("regret_curve: record count differs from the episode count");
  return regret_curve(records, table, env);
}

/// Largest |Q*_h(x) - Q*_h(y)| / dist(x, y) over grid neighbours (all
/// 3^d - 1 offsets), maximized over h.
inline double estimate_lipschitz(const ValueTable& table, const MetricSpace& space) {
  const auto& sa = table.state_axes();
  const auto& aa = table.action_axes();
  std::vector<std::size_t> dims;
  for (const auto& ax : sa) dims.push_back(ax.size());
  for (const auto& ax : aa) dims.push_back(ax.size());
  const std::size_t nd = dims.size();
  const std::size_t na = table.action_count();
  std::size_t offsets = 1;
  for (std::size_t i = 0; i < nd; ++i) offsets *= 3;
  double best = 0.0;
  std::vector<std::size_t> idx(nd, 0);
  auto flat_of = [&](const std::vector<std::size_t>& ix, std::size_t& si, std::size_t& aj) {
    si = 0;
    aj = 0;
    for (std::size_t i = 0; i < sa.size(); ++i) si = si * dims[i] + ix[i];
    for (std::size_t i = sa.size(); i < nd; ++i) aj = aj * dims[i] + ix[i];
  };
  const std::size_t total = table.state_count() * na;
  for (int h = 1; h <= table.horizon(); ++h) {
    for (std::size_t f = 0; f < total; ++f) {
      std::size_t rest = f;
      for (std::size_t i = nd; i-- > 0;) {
        idx[i] = rest % dims[i];
        rest /= dims[i];
      }
      std::size_t si = 0;
      std::size_t aj = 0;
      flat_of(idx, si, aj);
      const Point x{table.state_at(si), table.action_at(aj)};
      const double qx = table.q_star(h, si, aj);
      for (std::size_t o = 0; o < offsets; ++o) {
        std::vector<std::size_t> nb = idx;
        std::size_t code = o;
        bool forward = false;
        bool valid = true;
        bool zero = true;
        for (std::size_t i = 0; i < nd && valid; ++i) {
          const int delta = static_cast<int>(code % 3) - 1;
          code /= 3;
          if (delta != 0 && zero) {
            forward = delta > 0;
            zero = false;
          }
          const long v = static_cast<long>(idx[i]) + delta;
          if (v < 0 || v >= static_cast<long>(dims[i])) valid = false;
          else nb[i] = static_cast<std::size_t>(v);
        }
        if (!valid || zero || !forward) continue;
        std::size_t sj = 0;
        std::size_t ak = 0;
        flat_of(nb, sj, ak);
        const Point y{table.state_at(sj), table.action_at(ak)};
        const double d = space.distance(x, y);
        if (d > 0.0) best = std::max(best, std::abs(qx - table.q_star(h, sj, ak)) / d);
      }
    }
  }
  return best;
}

}  // namespace zoomrl
