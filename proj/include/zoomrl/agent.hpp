#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "zoomrl/environments.hpp"
#include "zoomrl/errors.hpp"
#include "zoomrl/metric_space.hpp"
#include "zoomrl/partition.hpp"

namespace zoomrl {

/// Horizon, episode budget, Lipschitz constant and failure probability.
/// iota = ln(4 H K^2 / p).
struct HyperParams {
  int H = 1;
  int K = 1;
  double L = 1.0;
  double p = 0.1;

  double iota() const noexcept {
    const double h = H;
    const double k = K;
    return std::log(4.0 * h * k * k / p);
  }

  void validate() const {
    if (H < 1) throw ContractError("HyperParams: H must be >= 1");
    if (K < 1) throw ContractError("HyperParams: K must be >= 1");
    if (!(L > 0.0)) throw ContractError("HyperParams: L must be > 0");
    if (!(p > 0.0 && p < 1.0)) throw ContractError("HyperParams: p must lie in (0, 1)");
  }
};

/// alpha_t = (H + 1) / (H + t).
inline double learning_rate(std::int64_t t, int H) {
  if (t < 1) throw ContractError("learning_rate: t must be >= 1");
  return (static_cast<double>(H) + 1.0) / (static_cast<double>(H) + static_cast<double>(t));
}

struct AlphaWeights {
  double alpha0 = 1.0;          ///< prod_{j<=t} (1 - alpha_j)
  std::vector<double> weights;  ///< weights[i-1] = alpha_i prod_{j=i+1..t} (1 - alpha_j)
};

/// Weights that express the t-th Q estimate as a combination of the prior H
/// and the t observed targets.
inline AlphaWeights alpha_weights(std::int64_t t, int H) {
  if (t < 0) throw ContractError("alpha_weights: t must be >= 0");
  AlphaWeights out;
  out.weights.assign(static_cast<std::size_t>(t), 0.0);
  double tail = 1.0;  // prod_{j=i+1..t} (1 - alpha_j)
  for (std::int64_t i = t; i >= 1; --i) {
    const double a = learning_rate(i, H);
    out.weights[static_cast<std::size_t>(i - 1)] = a * tail;
    tail *= 1.0 - a;
  }
  out.alpha0 = tail;
  return out;
}

/// Hoeffding-style bonus u_t = 4 sqrt(H^3 iota / t).
inline double bonus(std::int64_t t, int H, double iota) {
  if (t < 1) throw ContractError("bonus: t must be >= 1");
  const double h = H;
  return 4.0 * std::sqrt(h * h * h * iota / static_cast<double>(t));
}

inline double bonus(std::int64_t t, const HyperParams& hyper) { return bonus(t, hyper.H, hyper.iota()); }

struct StepRecord {
  int k = 0;
  int h = 0;
  Coords state;
  Coords action;
  int ball_id = 0;
  int depth = 0;
  double reward = 0.0;
  Coords next_state;
  double v_next = 0.0;
  std::int64_t t_after = 0;
};

struct EpisodeRecord {
  int k = 0;
  Coords initial_state;
  std::vector<StepRecord> steps;
  double realized_return = 0.0;
};

struct Selection {
  int ball_id = 0;
  Coords action;
  double index = 0.0;
};

/// Relevant ball with the largest index; ties go to the smaller radius,
/// then the lower id.
inline Selection select_ball(const Partition& part, const Coords& s, double lipschitz) {
  const auto relevant = part.relevant_balls(s);
  const RelevantBall* best = nullptr;
  double best_index = 0.0;
  int best_depth = 0;
  for (const RelevantBall& rel : relevant) {
    const double idx = part.index(rel.ball_id, lipschitz);
    const int depth = part.ball(rel.ball_id).depth;
    const bool better = best == nullptr || idx > best_index ||
                        (idx == best_index && (depth > best_depth || (depth == best_depth && rel.ball_id < best->ball_id)));
    if (better) {
      best = &rel;
      best_index = idx;
      best_depth = depth;
    }
  }
  return {best->ball_id, best->witness, best_index};
}

/// The adaptive-discretization Q-learner: one ball partition per step,
/// optimistic index-based selection, and half-radius activation.
class ZoomAgent {
 public:
  ZoomAgent(std::shared_ptr<const MetricSpace> space, HyperParams hyper, std::uint64_t seed = 0)
      : space_(std::move(space)), hyper_(hyper), seed_(seed) {
    hyper_.validate();
    partitions_.reserve(static_cast<std::size_t>(hyper_.H));
    for (int h = 1; h <= hyper_.H; ++h) partitions_.emplace_back(space_, h, hyper_.H);
    iota_ = hyper_.iota();
  }

  const HyperParams& hyper() const noexcept { return hyper_; }
  int episode() const noexcept { return episode_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const MetricSpace& space() const noexcept { return *space_; }
  const Partition& partition(int h) const { return partitions_.at(static_cast<std::size_t>(h - 1)); }
  std::size_t total_balls() const noexcept {
    std::size_t n = 0;
    for (const auto& p : partitions_) n += p.size();
    return n;
  }
  /// Activations skipped because a same-depth ball already sat too close.
  std::size_t skipped_activations() const noexcept { return skipped_activations_; }

  Selection select_ball(int h, const Coords& s) const { return zoomrl::select_ball(partition(h), s, hyper_.L); }

  /// V_h(s) = min(H, max index over relevant balls); zero past the horizon.
  double value_estimate(int h, const Coords& s) const {
    if (h == hyper_.H + 1) return 0.0;
    if (h < 1 || h > hyper_.H + 1) throw ContractError("value_estimate: h outside [1, H + 1]");
    const Partition& part = partition(h);
    double best = -std::numeric_limits<double>::infinity();
    for (const RelevantBall& rel : part.relevant_balls(s)) best = std::max(best, part.index(rel.ball_id, hyper_.L));
    return std::min(static_cast<double>(hyper_.H), best);
  }

  /// Increments the visit count, blends the target into q_hat with
  /// alpha_t, then activates a child at the visited pair if the ball has
  /// reached 1/rad^2 visits.
  void update(int h, const StepRecord& record) {
    Partition& part = partitions_.at(static_cast<std::size_t>(h - 1));
    const Ball& b = part.ball(record.ball_id);
    const double rad = b.radius();
    const std::int64_t t = part.increment_visits(record.ball_id);
    const double alpha = learning_rate(t, hyper_.H);
    const double u = bonus(t, hyper_.H, iota_);
    const double target = record.reward + record.v_next + u + 2.0 * hyper_.L * rad;
    part.set_q_hat(record.ball_id, (1.0 - alpha) * part.ball(record.ball_id).q_hat + alpha * target);

    const Ball& updated = part.ball(record.ball_id);
    if (updated.visits >= activation_threshold(updated.depth)) {
      const Point center{record.state, record.action};
      if (part.packing_admits(updated.depth + 1, center)) {
        part.activate_child(record.ball_id, center, static_cast<double>(hyper_.H));
      } else {
        ++skipped_activations_;
      }
    }
  }

  /// One episode: select, act, query V at the next state, update, activate.
  EpisodeRecord run_episode(const Environment& env, int k) {
    if (k != episode_ + 1) throw ContractError("run_episode: episodes must run in order");
    if (env.horizon() != hyper_.H) throw ContractError("run_episode: environment horizon differs from H");
    const SeedStream stream(seed_);
    EpisodeRecord rec;
    rec.k = k;
    rec.initial_state = reset(env, k, seed_);
    rec.steps.reserve(static_cast<std::size_t>(hyper_.H));
    Coords s = rec.initial_state;
    for (int h = 1; h <= hyper_.H; ++h) {
      const Selection sel = select_ball(h, s);
      const Transition tr = step(env, h, s, sel.action, stream, k);
      StepRecord sr;
      sr.k = k;
      sr.h = h;
      sr.state = s;
      sr.action = sel.action;
      sr.ball_id = sel.ball_id;
      sr.depth = partition(h).ball(sel.ball_id).depth;
      sr.reward = tr.reward;
      sr.next_state = tr.next_state;
      sr.v_next = value_estimate(h + 1, tr.next_state);
      update(h, sr);
      sr.t_after = partition(h).ball(sel.ball_id).visits;
      rec.realized_return += tr.reward;
      rec.steps.push_back(sr);
      s = tr.next_state;
    }
    episode_ = k;
    return rec;
  }

  /// Greedy action of the current partitions, i.e. the policy the next
  /// episode will execute.
  Coords policy_action(int h, const Coords& s) const { return select_ball(h, s).action; }

 private:
  std::shared_ptr<const MetricSpace> space_;
  HyperParams hyper_;
  std::uint64_t seed_ = 0;
  double iota_ = 0.0;
  std::vector<Partition> partitions_;
  int episode_ = 0;
  std::size_t skipped_activations_ = 0;
};

}  // namespace zoomrl
