#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "zoomrl/errors.hpp"

namespace zoomrl {

inline constexpr std::size_t kMaxAxes = 4;

/// Fixed-capacity coordinate vector. Unused slots are kept at zero so that
/// the defaulted comparison is a value comparison.
class Coords {
 public:
  Coords() = default;
  Coords(std::initializer_list<double> values) {
    if (values.size() > kMaxAxes) throw ContractError("Coords: too many axes");
    for (double v : values) v_[n_++] = v;
  }
  explicit Coords(std::span<const double> values) {
    if (values.size() > kMaxAxes) throw ContractError("Coords: too many axes");
    for (double v : values) v_[n_++] = v;
  }
  static Coords filled(std::size_t n, double value) {
    if (n > kMaxAxes) throw ContractError("Coords: too many axes");
    Coords c;
    c.n_ = static_cast<std::uint8_t>(n);
    for (std::size_t i = 0; i < n; ++i) c.v_[i] = value;
    return c;
  }

  std::size_t size() const noexcept { return n_; }
  bool empty() const noexcept { return n_ == 0; }
  double operator[](std::size_t i) const noexcept { return v_[i]; }
  double& operator[](std::size_t i) noexcept { return v_[i]; }
  const double* begin() const noexcept { return v_.data(); }
  const double* end() const noexcept { return v_.data() + n_; }
  double* begin() noexcept { return v_.data(); }
  double* end() noexcept { return v_.data() + n_; }

  friend bool operator==(const Coords&, const Coords&) = default;

 private:
  std::array<double, kMaxAxes> v_{};
  std::uint8_t n_ = 0;
};

inline std::ostream& operator<<(std::ostream& os, const Coords& c) {
  os << '(';
  for (std::size_t i = 0; i < c.size(); ++i) os << (i ? ", " : "") << c[i];
  return os << ')';
}

/// A state-action pair x = (s, a).
struct Point {
  Coords state;
  Coords action;
  friend bool operator==(const Point&, const Point&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Point& p) {
  return os << '[' << p.state << ' ' << p.action << ']';
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
};

enum class MetricKind {
  product_max,  ///< max over all coordinates of |x_i - y_i|, divided by the diameter scale
  tabular,      ///< 0 for identical pairs, 1 otherwise
};

/// Compact state-action space X = S x A with a metric normalized so that
/// every distance is at most 1. Immutable after construction.
class MetricSpace {
 public:
  static MetricSpace box(std::vector<Interval> state_bounds, std::vector<Interval> action_bounds) {
    if (state_bounds.empty() || action_bounds.empty())
      throw ContractError("MetricSpace::box: state and action need at least one axis");
    if (state_bounds.size() > kMaxAxes || action_bounds.size() > kMaxAxes)
      throw ContractError("MetricSpace::box: at most 4 axes per component");
    double widest = 0.0;
    for (const auto* bounds : {&state_bounds, &action_bounds}) {
      for (const Interval& iv : *bounds) {
        if (!(iv.lo <= iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
          throw ContractError("MetricSpace::box: malformed interval");
        widest = std::max(widest, iv.width());
      }
    }
    MetricSpace space;
    space.kind_ = MetricKind::product_max;
    space.state_bounds_ = std::move(state_bounds);
    space.action_bounds_ = std::move(action_bounds);
    space.scale_ = widest > 0.0 ? widest : 1.0;
    return space;
  }

  static MetricSpace tabular(int num_states, int num_actions) {
    if (num_states < 1 || num_actions < 1) throw ContractError("MetricSpace::tabular: sizes must be >= 1");
    MetricSpace space;
    space.kind_ = MetricKind::tabular;
    space.state_bounds_ = {Interval{0.0, static_cast<double>(num_states - 1)}};
    space.action_bounds_ = {Interval{0.0, static_cast<double>(num_actions - 1)}};
    space.scale_ = 1.0;
    space.num_states_ = num_states;
    space.num_actions_ = num_actions;
    return space;
  }

  MetricKind kind() const noexcept { return kind_; }
  bool is_tabular() const noexcept { return kind_ == MetricKind::tabular; }
  std::size_t state_dim() const noexcept { return state_bounds_.size(); }
  std::size_t action_dim() const noexcept { return action_bounds_.size(); }
  std::size_t total_dim() const noexcept { return state_dim() + action_dim(); }
  const std::vector<Interval>& state_bounds() const noexcept { return state_bounds_; }
  const std::vector<Interval>& action_bounds() const noexcept { return action_bounds_; }
  double diameter_scale() const noexcept { return scale_; }
  int num_states() const noexcept { return num_states_; }
  int num_actions() const noexcept { return num_actions_; }

  bool contains_state(const Coords& s) const noexcept { return within(s, state_bounds_); }
  bool contains_action(const Coords& a) const noexcept { return within(a, action_bounds_); }
  bool contains(const Point& x) const noexcept { return contains_state(x.state) && contains_action(x.action); }

  /// True for actions an agent may execute: in bounds, and integral for tabular spaces.
  bool is_valid_action(const Coords& a) const noexcept {
    if (!contains_action(a)) return false;
    return !is_tabular() || a[0] == std::floor(a[0]);
  }
  bool is_valid_state(const Coords& s) const noexcept {
    if (!contains_state(s)) return false;
    return !is_tabular() || s[0] == std::floor(s[0]);
  }

  /// Checked distance; throws DomainError for out-of-bounds points.
  double dist(const Point& x, const Point& y) const {
    if (!contains(x) || !contains(y)) throw DomainError("dist: point outside the space bounds");
    return distance(x, y);
  }

  /// Unchecked distance, in [0, 1] for in-bounds points.
  double distance(const Point& x, const Point& y) const noexcept {
    if (kind_ == MetricKind::tabular) return (x == y) ? 0.0 : 1.0;
    return std::max(raw_max(x.state, y.state), raw_max(x.action, y.action)) / scale_;
  }

  /// Contribution of the state components alone. Under product_max,
  /// distance(x, y) <= r iff state_distance <= r and action_distance <= r.
  double state_distance(const Coords& s, const Coords& t) const noexcept {
    if (kind_ == MetricKind::tabular) return s == t ? 0.0 : 1.0;
    return raw_max(s, t) / scale_;
  }
  double action_distance(const Coords& a, const Coords& b) const noexcept {
    if (kind_ == MetricKind::tabular) return a == b ? 0.0 : 1.0;
    return raw_max(a, b) / scale_;
  }

  Point midpoint() const {
    Point p;
    p.state = mid(state_bounds_);
    p.action = mid(action_bounds_);
    return p;
  }

  template <class Rng>
  Coords sample_state(Rng& rng) const {
    return sample(state_bounds_, rng);
  }
  template <class Rng>
  Coords sample_action(Rng& rng) const {
    return sample(action_bounds_, rng);
  }
  template <class Rng>
  Point sample_point(Rng& rng) const {
    Point p;
    p.state = sample_state(rng);
    p.action = sample_action(rng);
    return p;
  }

  Coords clamp_state(Coords s) const noexcept { return clamp(std::move(s), state_bounds_); }
  Coords clamp_action(Coords a) const noexcept { return clamp(std::move(a), action_bounds_); }

  /// Grid coordinates along one axis: `points` evenly spaced values covering
  /// the interval (both endpoints included). Tabular axes enumerate integers.
  std::vector<double> axis_grid(const Interval& iv, std::size_t points) const {
    std::vector<double> out;
    if (is_tabular()) {
      for (double v = iv.lo; v <= iv.hi; v += 1.0) out.push_back(v);
      return out;
    }
    if (points < 2 || iv.width() == 0.0) return {iv.lo};
    out.reserve(points);
    const double step = iv.width() / static_cast<double>(points - 1);
    for (std::size_t i = 0; i + 1 < points; ++i) out.push_back(iv.lo + step * static_cast<double>(i));
    out.push_back(iv.hi);
    return out;
  }

 private:
  MetricSpace() = default;

  static bool within(const Coords& c, const std::vector<Interval>& bounds) noexcept {
    if (c.size() != bounds.size()) return false;
    for (std::size_t i = 0; i < c.size(); ++i)
      if (!(c[i] >= bounds[i].lo && c[i] <= bounds[i].hi)) return false;
    return true;
  }
  static double raw_max(const Coords& a, const Coords& b) noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
  }
  static Coords mid(const std::vector<Interval>& bounds) {
    Coords c = Coords::filled(bounds.size(), 0.0);
    for (std::size_t i = 0; i < bounds.size(); ++i) c[i] = 0.5 * (bounds[i].lo + bounds[i].hi);
    return c;
  }
  template <class Rng>
  Coords sample(const std::vector<Interval>& bounds, Rng& rng) const {
    Coords c = Coords::filled(bounds.size(), 0.0);
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      if (is_tabular()) {
        std::uniform_int_distribution<int> pick(static_cast<int>(bounds[i].lo), static_cast<int>(bounds[i].hi));
        c[i] = pick(rng);
      } else {
        std::uniform_real_distribution<double> u(bounds[i].lo, bounds[i].hi);
        c[i] = bounds[i].width() > 0.0 ? std::min(u(rng), bounds[i].hi) : bounds[i].lo;
      }
    }
    return c;
  }
  static Coords clamp(Coords c, const std::vector<Interval>& bounds) noexcept {
    for (std::size_t i = 0; i < c.size() && i < bounds.size(); ++i) c[i] = std::clamp(c[i], bounds[i].lo, bounds[i].hi);
    return c;
  }

  MetricKind kind_ = MetricKind::product_max;
  std::vector<Interval> state_bounds_;
  std::vector<Interval> action_bounds_;
  double scale_ = 1.0;
  int num_states_ = 0;
  int num_actions_ = 0;
};

/// Witnessed r-packing: pairwise distances strictly greater than `radius`.
struct PackingReport {
  double radius = 0.0;
  std::size_t count = 0;
  std::vector<Point> witness_points;
};

inline constexpr std::size_t kDefaultGridResolution = 256;
inline constexpr std::size_t kMaxGridDimension = 3;

namespace detail {

/// Enumerates the product grid (state axes first, then action axes) in
/// lexicographic order and calls `fn(const Point&)` for every grid point.
template <class Fn>
void for_each_grid_point(const MetricSpace& space, std::size_t resolution, Fn&& fn) {
  std::vector<std::vector<double>> axes;
  for (const Interval& iv : space.state_bounds()) axes.push_back(space.axis_grid(iv, resolution));
  for (const Interval& iv : space.action_bounds()) axes.push_back(space.axis_grid(iv, resolution));
  std::vector<std::size_t> idx(axes.size(), 0);
  const std::size_t ns = space.state_dim();
  Point p;
  p.state = Coords::filled(ns, 0.0);
  p.action = Coords::filled(space.action_dim(), 0.0);
  while (true) {
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (i < ns)
        p.state[i] = axes[i][idx[i]];
      else
        p.action[i - ns] = axes[i][idx[i]];
    }
    fn(static_cast<const Point&>(p));
    std::size_t axis = axes.size();
    while (axis > 0) {
      --axis;
      if (++idx[axis] < axes[axis].size()) break;
      idx[axis] = 0;
      if (axis == 0) return;
    }
    if (axes.empty()) return;
  }
}

inline void check_grid_dimension(const MetricSpace& space) {
  if (!space.is_tabular() && space.total_dim() > kMaxGridDimension)
    throw PrecisionError("grid oracles support at most 3 total dimensions");
}

}  // namespace detail

/// Exact packing number of a box under product_max (per-axis count is the
/// largest n with (n-1)*r*scale < side, multiplied over axes), or of a
/// tabular space (|S||A| for r < 1, else 1).
inline std::size_t analytic_packing_number(const MetricSpace& space, double r) {
  if (!(r > 0.0)) throw ContractError("analytic_packing_number: r must be positive");
  if (space.is_tabular())
    return r < 1.0 ? static_cast<std::size_t>(space.num_states()) * static_cast<std::size_t>(space.num_actions()) : 1;
  std::size_t total = 1;
  auto per_axis = [&](const Interval& iv) -> std::size_t {
    if (iv.width() == 0.0) return 1;
    const double ratio = iv.width() / (r * space.diameter_scale());
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(ratio)));
  };
  for (const Interval& iv : space.state_bounds()) total *= per_axis(iv);
  for (const Interval& iv : space.action_bounds()) total *= per_axis(iv);
  return total;
}

/// Greedy maximal r-packing over the grid with `resolution` points per axis.
/// Gives a lower bound on M(r) that is exact for boxes once the grid is fine.
inline PackingReport packing_number(const MetricSpace& space, double r, std::size_t resolution = 1001) {
  if (!(r > 0.0 && r <= 1.0)) throw ContractError("packing_number: r must lie in (0, 1]");
  detail::check_grid_dimension(space);
  if (!space.is_tabular()) {
    if (resolution < 2) throw PrecisionError("packing_number: resolution too small");
    for (const auto* bounds : {&space.state_bounds(), &space.action_bounds()})
      for (const Interval& iv : *bounds) {
        const double spacing = iv.width() / static_cast<double>(resolution - 1) / space.diameter_scale();
        if (spacing > r / 4.0) throw PrecisionError("packing_number: grid spacing exceeds r/4");
      }
  }
  PackingReport report;
  report.radius = r;
  detail::for_each_grid_point(space, resolution, [&](const Point& p) {
    for (const Point& q : report.witness_points)
      if (!(space.distance(p, q) > r)) return;
    report.witness_points.push_back(p);
  });
  report.count = report.witness_points.size();
  return report;
}

/// Per-axis coordinates of a product eps-net. For a box each axis holds
/// ceil(side / (2 eps scale)) cell centers; for tabular spaces every
/// integer (eps < 1) or a single point (eps >= 1).
struct NetAxes {
  std::vector<std::vector<double>> state_axes;
  std::vector<std::vector<double>> action_axes;

  std::size_t state_count() const {
    std::size_t n = 1;
    for (const auto& ax : state_axes) n *= ax.size();
    return n;
  }
  std::size_t action_count() const {
    std::size_t n = 1;
    for (const auto& ax : action_axes) n *= ax.size();
    return n;
  }
  Coords state_at(std::size_t flat) const { return unflatten(state_axes, flat); }
  Coords action_at(std::size_t flat) const { return unflatten(action_axes, flat); }

  /// Index of the nearest net state (per-axis nearest is nearest under max metric).
  std::size_t nearest_state(const Coords& s) const {
    std::size_t flat = 0;
    for (std::size_t i = 0; i < state_axes.size(); ++i) {
      const auto& ax = state_axes[i];
      auto it = std::lower_bound(ax.begin(), ax.end(), s[i]);
      std::size_t j = static_cast<std::size_t>(it - ax.begin());
      if (j == ax.size()) {
        j = ax.size() - 1;
      } else if (j > 0 && (s[i] - ax[j - 1]) <= (ax[j] - s[i])) {
        --j;
      }
      flat = flat * ax.size() + j;
    }
    return flat;
  }

 private:
  static Coords unflatten(const std::vector<std::vector<double>>& axes, std::size_t flat) {
    Coords c = Coords::filled(axes.size(), 0.0);
    for (std::size_t i = axes.size(); i-- > 0;) {
      c[i] = axes[i][flat % axes[i].size()];
      flat /= axes[i].size();
    }
    return c;
  }
};

inline NetAxes covering_axes(const MetricSpace& space, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ContractError("covering_net: eps must lie in (0, 1]");
  NetAxes net;
  if (space.is_tabular()) {
    if (eps >= 1.0) {
      net.state_axes = {{0.0}};
      net.action_axes = {{0.0}};
    } else {
      net.state_axes = {space.axis_grid(space.state_bounds()[0], 0)};
      net.action_axes = {space.axis_grid(space.action_bounds()[0], 0)};
    }
    return net;
  }
  auto axis = [&](const Interval& iv) {
    if (iv.width() == 0.0) return std::vector<double>{iv.lo};
    const double reach = eps * space.diameter_scale();
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(iv.width() / (2.0 * reach))));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = iv.lo + iv.width() * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
    return out;
  };
  for (const Interval& iv : space.state_bounds()) net.state_axes.push_back(axis(iv));
  for (const Interval& iv : space.action_bounds()) net.action_axes.push_back(axis(iv));
  return net;
}

/// An eps-net of the space, built as a product of per-axis nets. Minimal for
/// boxes under product_max; not claimed minimal in general.
inline std::vector<Point> covering_net(const MetricSpace& space, double eps) {
  const NetAxes axes = covering_axes(space, eps);
  std::vector<Point> out;
  out.reserve(axes.state_count() * axes.action_count());
  for (std::size_t i = 0; i < axes.state_count(); ++i)
    for (std::size_t j = 0; j < axes.action_count(); ++j) out.push_back(Point{axes.state_at(i), axes.action_at(j)});
  return out;
}

}  // namespace zoomrl
