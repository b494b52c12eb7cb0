#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zoomrl/errors.hpp"
#include "zoomrl/metric_space.hpp"

namespace zoomrl {

/// Closed ball {x : dist(center, x) <= 2^-depth} with its learning statistics.
struct Ball {
  int id = 0;
  Point center;
  int depth = 0;
  std::optional<int> parent_id;
  double q_hat = 0.0;
  std::int64_t visits = 0;

  double radius() const noexcept { return std::ldexp(1.0, -depth); }
};

/// Visit count at which a ball of the given depth may spawn a child (1/rad^2).
inline std::int64_t activation_threshold(int depth) noexcept {
  if (depth >= 31) return std::numeric_limits<std::int64_t>::max();
  return std::int64_t{1} << (2 * depth);
}

struct RelevantBall {
  int ball_id = 0;
  Coords witness;  ///< an action a with (s, a) in dom(ball)
};

struct InvariantReport {
  bool cover_ok = true;
  bool packing_ok = true;
  std::size_t samples = 0;
  std::size_t uncovered = 0;
  std::vector<std::pair<int, int>> packing_violations;

  bool ok() const noexcept { return cover_ok && packing_ok; }
};

inline constexpr std::size_t kWitnessSamples = 64;
inline constexpr std::size_t kWitnessCandidateCap = 4096;

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_coords(std::uint64_t h, const Coords& c) noexcept {
  for (double v : c) {
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(v));
    h = mix64(h ^ bits);
  }
  return h;
}

/// Doubles a with |a - c| / scale <= r form a closed interval [lo, hi] of
/// doubles; compute its exact endpoints so interval arithmetic agrees with
/// the metric bit for bit.
struct ExactInterval {
  double lo;
  double hi;
};

/// Monotone map from doubles to integers: a < b iff key(a) < key(b).
inline std::int64_t order_key(double x) noexcept {
  std::int64_t bits = 0;
  std::memcpy(&bits, &x, sizeof(x));
  return bits >= 0 ? bits : std::numeric_limits<std::int64_t>::min() - bits;
}

inline double from_order_key(std::int64_t key) noexcept {
  const std::int64_t bits = key >= 0 ? key : std::numeric_limits<std::int64_t>::min() - key;
  double x = 0.0;
  std::memcpy(&x, &bits, sizeof(x));
  return x;
}

/// Last double in (in, out] direction from `in` that satisfies `pred`,
/// given pred(in) holds, pred(out) fails, and pred is monotone between them.
template <class Pred>
double last_inside(double in, double out, Pred pred) noexcept {
  std::int64_t good = order_key(in);
  std::int64_t bad = order_key(out);
  while (good + 1 != bad && good - 1 != bad) {
    const std::int64_t mid = good + (bad - good) / 2;
    if (pred(from_order_key(mid)))
      good = mid;
    else
      bad = mid;
  }
  return from_order_key(good);
}

inline ExactInterval exact_ball_interval(double c, double r, double scale) noexcept {
  auto inside = [&](double a) { return std::abs(a - c) / scale <= r; };
  const double reach = 2.0 * r * scale + 1.0;
  return {last_inside(c, c - reach, inside), last_inside(c, c + reach, inside)};
}

/// Sorted, disjoint, non-adjacent closed double intervals.
class IntervalUnion {
 public:
  void add(ExactInterval iv) { pending_.push_back(iv); }

  void commit() {
    if (pending_.empty()) return;
    merged_.insert(merged_.end(), pending_.begin(), pending_.end());
    pending_.clear();
    std::sort(merged_.begin(), merged_.end(), [](const ExactInterval& a, const ExactInterval& b) { return a.lo < b.lo; });
    std::vector<ExactInterval> out;
    out.reserve(merged_.size());
    for (const ExactInterval& iv : merged_) {
      if (!out.empty() && iv.lo <= std::nextafter(out.back().hi, std::numeric_limits<double>::infinity())) {
        out.back().hi = std::max(out.back().hi, iv.hi);
      } else {
        out.push_back(iv);
      }
    }
    merged_ = std::move(out);
  }

  /// Merged interval containing x, if any.
  const ExactInterval* find(double x) const noexcept {
    auto it = std::upper_bound(merged_.begin(), merged_.end(), x,
                               [](double v, const ExactInterval& iv) { return v < iv.lo; });
    if (it == merged_.begin()) return nullptr;
    --it;
    return x <= it->hi ? &*it : nullptr;
  }

  /// Free double in [slice.lo, slice.hi] nearest to target (target must lie in the slice).
  std::optional<double> nearest_free(double target, ExactInterval slice) const noexcept {
    const ExactInterval* hit = find(target);
    if (hit == nullptr) return target;
    const double inf = std::numeric_limits<double>::infinity();
    std::optional<double> left;
    std::optional<double> right;
    const double below = std::nextafter(hit->lo, -inf);
    const double above = std::nextafter(hit->hi, inf);
    if (below >= slice.lo) left = below;
    if (above <= slice.hi) right = above;
    if (left && right) return (target - *left) <= (*right - target) ? left : right;
    return left ? left : right;
  }

 private:
  std::vector<ExactInterval> merged_;
  std::vector<ExactInterval> pending_;
};

}  // namespace detail

/// Adaptive ball partition for one step h. Balls are never removed; their
/// ids are creation order and index into `balls()`.
class Partition {
 public:
  /// Fresh partition: one ball of radius 1 centered at the box midpoint,
  /// q_hat = H, no visits.
  Partition(std::shared_ptr<const MetricSpace> space, int step, int horizon) : space_(std::move(space)), step_(step) {
    if (!space_) throw ContractError("Partition: null space");
    if (horizon < 1 || step < 1 || step > horizon) throw ContractError("Partition: need 1 <= h <= H");
    Ball root;
    root.id = 0;
    root.center = space_->midpoint();
    root.depth = 0;
    root.q_hat = static_cast<double>(horizon);
    insert(std::move(root));
  }

  /// Unchecked construction from explicit balls (tests, debugging dumps).
  static Partition from_balls(std::shared_ptr<const MetricSpace> space, int step, std::vector<Ball> balls) {
    Partition p(std::move(space), step);
    for (std::size_t i = 0; i < balls.size(); ++i) {
      balls[i].id = static_cast<int>(i);
      p.insert(std::move(balls[i]));
    }
    return p;
  }

  int step() const noexcept { return step_; }
  const MetricSpace& space() const noexcept { return *space_; }
  const std::shared_ptr<const MetricSpace>& space_ptr() const noexcept { return space_; }
  std::span<const Ball> balls() const noexcept { return balls_; }
  std::size_t size() const noexcept { return balls_.size(); }
  int max_depth() const noexcept { return static_cast<int>(by_depth_.size()) - 1; }
  std::span<const int> ids_at_depth(int depth) const noexcept {
    if (depth < 0 || depth >= static_cast<int>(by_depth_.size())) return {};
    return by_depth_[static_cast<std::size_t>(depth)];
  }

  const Ball& ball(int id) const {
    if (id < 0 || id >= static_cast<int>(balls_.size())) throw LookupError("Partition: unknown ball id " + std::to_string(id));
    return balls_[static_cast<std::size_t>(id)];
  }

  bool ball_contains(const Ball& b, const Point& x) const noexcept { return space_->distance(b.center, x) <= b.radius(); }

  /// x in B and x in no ball of strictly smaller radius.
  bool domain_contains(int id, const Point& x) const {
    const Ball& b = ball(id);
    if (!ball_contains(b, x)) return false;
    for (int d = b.depth + 1; d <= max_depth(); ++d)
      for (int other : by_depth_[static_cast<std::size_t>(d)])
        if (ball_contains(balls_[static_cast<std::size_t>(other)], x)) return false;
    return true;
  }

  /// Balls whose domain meets {s} x A, each with a verified witness action.
  /// Witness order: the ball's own center action if free, else the free
  /// action nearest to it (exact for one action axis and tabular spaces),
  /// else a candidate-grid search, else seeded rejection sampling.
  std::vector<RelevantBall> relevant_balls(const Coords& s) const {
    if (!space_->contains_state(s)) throw DomainError("relevant_balls: state outside bounds");
    std::vector<RelevantBall> out;
    if (space_->is_tabular())
      relevant_tabular(s, out);
    else if (space_->action_dim() == 1)
      relevant_interval(s, out);
    else
      relevant_boxes(s, out);
    if (out.empty()) throw InvariantViolation("relevant_balls: no relevant ball (domains fail to cover the state)");
    return out;
  }

  /// L rad(B) + min over B' with rad(B') >= rad(B) of { q_hat(B') + L dist(B, B') }.
  double index(int id, double lipschitz) const {
    const Ball& b = ball(id);
    double best = b.q_hat;
    for (int d = 0; d <= b.depth; ++d) {
      for (int other : by_depth_[static_cast<std::size_t>(d)]) {
        const Ball& o = balls_[static_cast<std::size_t>(other)];
        const double cand = o.q_hat + lipschitz * space_->distance(b.center, o.center);
        if (cand < best) best = cand;
      }
    }
    return lipschitz * b.radius() + best;
  }

  /// Adds a child of half the parent's radius at `center`. Requires
  /// visits(parent) >= 1/rad(parent)^2 and center in dom(parent).
  int activate_child(int parent_id, const Point& center, double horizon) {
    const Ball& parent = ball(parent_id);
    if (parent.visits < activation_threshold(parent.depth))
      throw ContractError("activate_child: parent has not reached the activation threshold");
    if (!domain_contains(parent_id, center)) throw ContractError("activate_child: center outside the parent's domain");
    Ball child;
    child.id = static_cast<int>(balls_.size());
    child.center = center;
    child.depth = parent.depth + 1;
    child.parent_id = parent_id;
    child.q_hat = horizon;
    child.visits = 0;
    const int id = child.id;
    insert(std::move(child));
    return id;
  }

  /// True if a ball of `depth` centered at `center` would keep depth-level
  /// centers pairwise farther apart than the radius.
  bool packing_admits(int depth, const Point& center) const {
    const double r = std::ldexp(1.0, -depth);
    for (int other : ids_at_depth(depth))
      if (!(space_->distance(balls_[static_cast<std::size_t>(other)].center, center) > r)) return false;
    return true;
  }

  std::int64_t increment_visits(int id) { return ++mutable_ball(id).visits; }
  void set_q_hat(int id, double q) { mutable_ball(id).q_hat = q; }

  /// Deepest ball containing x (lowest id among equals), or -1.
  int deepest_containing(const Point& x) const noexcept {
    for (int d = max_depth(); d >= 0; --d)
      for (int id : by_depth_[static_cast<std::size_t>(d)])
        if (ball_contains(balls_[static_cast<std::size_t>(id)], x)) return id;
    return -1;
  }

 private:
  Partition(std::shared_ptr<const MetricSpace> space, int step) : space_(std::move(space)), step_(step) {}

  Ball& mutable_ball(int id) {
    if (id < 0 || id >= static_cast<int>(balls_.size())) throw LookupError("Partition: unknown ball id " + std::to_string(id));
    return balls_[static_cast<std::size_t>(id)];
  }

  void insert(Ball b) {
    const auto d = static_cast<std::size_t>(b.depth);
    if (by_depth_.size() <= d) by_depth_.resize(d + 1);
    by_depth_[d].push_back(b.id);
    balls_.push_back(std::move(b));
  }

  std::vector<int> state_close_by_depth(const Coords& s, std::vector<std::size_t>& group_begin) const {
    std::vector<int> ids;
    group_begin.clear();
    for (int d = max_depth(); d >= 0; --d) {
      group_begin.push_back(ids.size());
      const double r = std::ldexp(1.0, -d);
      for (int id : by_depth_[static_cast<std::size_t>(d)])
        if (space_->state_distance(balls_[static_cast<std::size_t>(id)].center.state, s) <= r) ids.push_back(id);
    }
    group_begin.push_back(ids.size());
    return ids;
  }

  void relevant_tabular(const Coords& s, std::vector<RelevantBall>& out) const {
    // Balls of radius < 1 hold only their center; radius 1 holds everything.
    const int na = space_->num_actions();
    for (int d = max_depth(); d >= 0; --d) {
      for (int id : by_depth_[static_cast<std::size_t>(d)]) {
        const Ball& b = balls_[static_cast<std::size_t>(id)];
        if (b.radius() < 1.0) {
          if (b.center.state != s || !space_->is_valid_action(b.center.action)) continue;
          if (domain_contains(id, b.center)) out.push_back({id, b.center.action});
          continue;
        }
        std::vector<int> actions(static_cast<std::size_t>(na));
        for (int a = 0; a < na; ++a) actions[static_cast<std::size_t>(a)] = a;
        const double target = b.center.action[0];
        std::stable_sort(actions.begin(), actions.end(),
                         [&](int x, int y) { return std::abs(x - target) < std::abs(y - target); });
        for (int a : actions) {
          Point x{s, Coords{static_cast<double>(a)}};
          if (domain_contains(id, x)) {
            out.push_back({id, x.action});
            break;
          }
        }
      }
    }
  }

  void relevant_interval(const Coords& s, std::vector<RelevantBall>& out) const {
    std::vector<std::size_t> groups;
    const std::vector<int> close = state_close_by_depth(s, groups);
    const Interval bounds = space_->action_bounds()[0];
    const double scale = space_->diameter_scale();
    detail::IntervalUnion covered;
    for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
      for (std::size_t i = groups[g]; i < groups[g + 1]; ++i) {
        const Ball& b = balls_[static_cast<std::size_t>(close[i])];
        const double c = b.center.action[0];
        const detail::ExactInterval iv = detail::exact_ball_interval(c, b.radius(), scale);
        const detail::ExactInterval slice{std::max(iv.lo, bounds.lo), std::min(iv.hi, bounds.hi)};
        // Pending intervals of this depth group do not exclude each other;
        // nearest_free only consults the committed (strictly deeper) union.
        covered.add(iv);
        if (slice.lo > slice.hi) continue;
        const double target = std::clamp(c, slice.lo, slice.hi);
        const std::optional<double> free = covered.nearest_free(target, slice);
        if (!free) continue;
        RelevantBall rel{b.id, Coords{*free}};
        // The interval bookkeeping mirrors the metric exactly; confirm anyway.
        if (domain_contains(b.id, Point{s, rel.witness})) out.push_back(std::move(rel));
        else if (auto w = search_witness_boxes(b, s)) out.push_back({b.id, *w});
      }
      covered.commit();
    }
  }

  void relevant_boxes(const Coords& s, std::vector<RelevantBall>& out) const {
    for (int d = max_depth(); d >= 0; --d) {
      const double r = std::ldexp(1.0, -d);
      for (int id : by_depth_[static_cast<std::size_t>(d)]) {
        const Ball& b = balls_[static_cast<std::size_t>(id)];
        if (space_->state_distance(b.center.state, s) > r) continue;
        if (auto w = search_witness_boxes(b, s)) out.push_back({id, *w});
      }
    }
  }

  /// General witness search for box action spaces: center action, then the
  /// product grid of candidate coordinates (excluder boundaries, excluder
  /// center coordinates, slice ends), then seeded rejection sampling.
  std::optional<Coords> search_witness_boxes(const Ball& b, const Coords& s) const {
    const double r = b.radius();
    const double scale = space_->diameter_scale();
    const std::size_t na = space_->action_dim();
    std::vector<const Ball*> excluders;
    for (int d = b.depth + 1; d <= max_depth(); ++d) {
      const double rd = std::ldexp(1.0, -d);
      for (int id : by_depth_[static_cast<std::size_t>(d)]) {
        const Ball& o = balls_[static_cast<std::size_t>(id)];
        if (space_->state_distance(o.center.state, s) <= rd) excluders.push_back(&o);
      }
    }
    std::vector<detail::ExactInterval> slice(na);
    for (std::size_t j = 0; j < na; ++j) {
      const auto iv = detail::exact_ball_interval(b.center.action[j], r, scale);
      slice[j] = {std::max(iv.lo, space_->action_bounds()[j].lo), std::min(iv.hi, space_->action_bounds()[j].hi)};
      if (slice[j].lo > slice[j].hi) return std::nullopt;
    }
    auto free = [&](const Coords& a) {
      for (std::size_t j = 0; j < na; ++j)
        if (a[j] < slice[j].lo || a[j] > slice[j].hi) return false;
      Point x{s, a};
      if (!ball_contains(b, x)) return false;
      for (const Ball* o : excluders)
        if (ball_contains(*o, x)) return false;
      return true;
    };
    Coords start = b.center.action;
    for (std::size_t j = 0; j < na; ++j) start[j] = std::clamp(start[j], slice[j].lo, slice[j].hi);
    if (free(start)) return start;

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> cands(na);
    for (std::size_t j = 0; j < na; ++j) {
      auto& c = cands[j];
      c.push_back(start[j]);
      for (const Ball* o : excluders) {
        const auto iv = detail::exact_ball_interval(o->center.action[j], o->radius(), scale);
        c.push_back(std::nextafter(iv.lo, -inf));
        c.push_back(std::nextafter(iv.hi, inf));
        c.push_back(o->center.action[j]);
      }
      c.push_back(slice[j].lo);
      c.push_back(slice[j].hi);
      std::erase_if(c, [&](double v) { return v < slice[j].lo || v > slice[j].hi; });
      const double t = start[j];
      std::sort(c.begin(), c.end(), [t](double x, double y) { return std::abs(x - t) < std::abs(y - t) || (std::abs(x - t) == std::abs(y - t) && x < y); });
      c.erase(std::unique(c.begin(), c.end()), c.end());
    }
    std::size_t combos = 1;
    for (const auto& c : cands) combos = (combos > kWitnessCandidateCap / std::max<std::size_t>(1, c.size())) ? kWitnessCandidateCap + 1 : combos * c.size();
    if (combos <= kWitnessCandidateCap) {
      std::vector<std::size_t> idx(na, 0);
      Coords a = start;
      for (std::size_t n = 0; n < combos; ++n) {
        std::size_t rest = n;
        for (std::size_t j = 0; j < na; ++j) {
          a[j] = cands[j][rest % cands[j].size()];
          rest /= cands[j].size();
        }
        if (free(a)) return a;
      }
    }
    std::mt19937_64 rng(detail::hash_coords(detail::mix64(static_cast<std::uint64_t>(b.id) + 0x5151), s));
    for (std::size_t n = 0; n < kWitnessSamples; ++n) {
      Coords a = start;
      for (std::size_t j = 0; j < na; ++j) {
        std::uniform_real_distribution<double> u(slice[j].lo, slice[j].hi);
        a[j] = slice[j].hi > slice[j].lo ? std::min(u(rng), slice[j].hi) : slice[j].lo;
      }
      if (free(a)) return a;
    }
    return std::nullopt;
  }

  std::shared_ptr<const MetricSpace> space_;
  int step_ = 1;
  std::vector<Ball> balls_;
  std::vector<std::vector<int>> by_depth_;
};

/// Samples `sample_count` points and checks that each lies in some domain,
/// and that centers at every depth are pairwise farther apart than 2^-depth.
/// Failures are reported, never thrown.
inline InvariantReport verify_invariants(const Partition& partition, std::size_t sample_count, std::uint64_t seed = 0) {
  if (sample_count < 1) throw ContractError("verify_invariants: sample_count must be >= 1");
  InvariantReport report;
  const MetricSpace& space = partition.space();
  std::mt19937_64 rng(seed);
  for (std::size_t n = 0; n < sample_count; ++n) {
    const Point x = space.sample_point(rng);
    const int owner = partition.deepest_containing(x);
    if (owner < 0 || !partition.domain_contains(owner, x)) {
      ++report.uncovered;
      report.cover_ok = false;
    }
  }
  report.samples = sample_count;
  for (int d = 0; d <= partition.max_depth(); ++d) {
    const auto ids = partition.ids_at_depth(d);
    const double r = std::ldexp(1.0, -d);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j)
        if (!(space.distance(partition.ball(ids[i]).center, partition.ball(ids[j]).center) > r)) {
          report.packing_ok = false;
          report.packing_violations.emplace_back(ids[i], ids[j]);
        }
  }
  if (partition.ids_at_depth(0).size() != 1) report.packing_ok = false;
  return report;
}

/// Incremental version of verify_invariants over a fixed sample set: after
/// each `refresh`, the report equals a full check on the same samples.
/// Only samples inside newly added balls are re-examined.
class InvariantMonitor {
 public:
  InvariantMonitor(const Partition& partition, std::size_t sample_count, std::uint64_t seed) {
    if (sample_count < 1) throw ContractError("InvariantMonitor: sample_count must be >= 1");
    std::mt19937_64 rng(seed);
    samples_.reserve(sample_count);
    owners_.assign(sample_count, -1);
    missing_ = sample_count;
    for (std::size_t n = 0; n < sample_count; ++n) samples_.push_back(partition.space().sample_point(rng));
    report_.samples = sample_count;
    refresh(partition);
  }

  const InvariantReport& refresh(const Partition& partition) {
    const MetricSpace& space = partition.space();
    const auto balls = partition.balls();
    for (std::size_t id = seen_; id < balls.size(); ++id) {
      const Ball& b = balls[id];
      const double r = b.radius();
      for (int other : partition.ids_at_depth(b.depth)) {
        if (other >= static_cast<int>(id)) break;
        if (!(space.distance(balls[static_cast<std::size_t>(other)].center, b.center) > r)) {
          report_.packing_ok = false;
          report_.packing_violations.emplace_back(other, static_cast<int>(id));
        }
      }
      if (b.depth == 0 && id != 0) report_.packing_ok = false;
      for (std::size_t n = 0; n < samples_.size(); ++n) {
        if (!partition.ball_contains(b, samples_[n])) continue;
        const int owner = owners_[n];
        if (owner < 0) --missing_;
        if (owner < 0 || balls[static_cast<std::size_t>(owner)].depth < b.depth) owners_[n] = static_cast<int>(id);
        dirty_.push_back(n);
      }
    }
    seen_ = balls.size();
    std::sort(dirty_.begin(), dirty_.end());
    dirty_.erase(std::unique(dirty_.begin(), dirty_.end()), dirty_.end());
    for (std::size_t n : dirty_) {
      const bool covered = owners_[n] >= 0 && partition.domain_contains(owners_[n], samples_[n]);
      if (covered != covered_flag(n)) set_covered(n, covered);
    }
    dirty_.clear();
    report_.cover_ok = uncovered_.empty() && missing_ == 0;
    report_.uncovered = uncovered_.size() + missing_;
    return report_;
  }

  const InvariantReport& report() const noexcept { return report_; }

 private:
  bool covered_flag(std::size_t n) const { return std::find(uncovered_.begin(), uncovered_.end(), n) == uncovered_.end(); }
  void set_covered(std::size_t n, bool covered) {
    if (covered)
      std::erase(uncovered_, n);
    else
      uncovered_.push_back(n);
  }

  std::vector<Point> samples_;
  std::vector<int> owners_;
  std::vector<std::size_t> dirty_;
  std::vector<std::size_t> uncovered_;
  std::size_t seen_ = 0;
  std::size_t missing_ = 0;
  InvariantReport report_;
};

}  // namespace zoomrl
