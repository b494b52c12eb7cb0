#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "zoomrl/agent.hpp"

using namespace zoomrl;

namespace {

// Incremental recursion: weights after t steps from weights after t - 1.
std::vector<double> recursive_weights(std::int64_t t, int H, double& alpha0) {
  std::vector<double> w;
  alpha0 = 1.0;
  for (std::int64_t j = 1; j <= t; ++j) {
    const double a = (H + 1.0) / (H + static_cast<double>(j));
    for (double& x : w) x *= 1.0 - a;
    alpha0 *= 1.0 - a;
    w.push_back(a);
  }
  return w;
}

HyperParams hp(int H, int K, double L) {
  HyperParams h;
  h.H = H;
  h.K = K;
  h.L = L;
  h.p = 0.1;
  return h;
}

std::shared_ptr<const MetricSpace> unit_square() {
  return std::make_shared<const MetricSpace>(MetricSpace::box({{0.0, 1.0}}, {{0.0, 1.0}}));
}

}  // namespace

TEST(HyperParams, IotaAndValidation) {
  const auto h = hp(3, 1000, 4.0);
  EXPECT_DOUBLE_EQ(h.iota(), std::log(4.0 * 3.0 * 1e6 / 0.1));
  EXPECT_GT(h.iota(), 0.0);
  EXPECT_THROW(hp(0, 10, 1.0).validate(), ContractError);
  EXPECT_THROW(hp(1, 0, 1.0).validate(), ContractError);
  EXPECT_THROW(hp(1, 10, 0.0).validate(), ContractError);
  auto bad = hp(1, 10, 1.0);
  bad.p = 1.0;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(LearningRate, Examples) {
  for (int H : {1, 2, 5, 9}) EXPECT_EQ(learning_rate(1, H), 1.0);
  EXPECT_EQ(learning_rate(3, 1), 0.5);
  double prev = 1.0;
  for (std::int64_t t = 2; t < 10000; t += 7) {
    const double a = learning_rate(t, 3);
    EXPECT_LT(a, prev);
    EXPECT_GT(a, 0.0);
    prev = a;
  }
  EXPECT_THROW(learning_rate(0, 2), ContractError);
}

TEST(AlphaWeights, ZeroSteps) {
  const auto w = alpha_weights(0, 3);
  EXPECT_EQ(w.alpha0, 1.0);
  EXPECT_TRUE(w.weights.empty());
}

TEST(AlphaWeights, PositiveStepsHaveNoPriorWeight) {
  for (std::int64_t t : {1, 2, 10, 500}) {
    const auto w = alpha_weights(t, 2);
    EXPECT_EQ(w.alpha0, 0.0);
    EXPECT_NEAR(std::accumulate(w.weights.begin(), w.weights.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(AlphaWeights, HorizonOneThreeSteps) {
  const auto w = alpha_weights(3, 1);
  ASSERT_EQ(w.weights.size(), 3u);
  EXPECT_NEAR(w.weights[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(w.weights[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(w.weights[2], 1.0 / 2.0, 1e-15);
}

TEST(AlphaWeights, MatchesIncrementalRecursion) {
  for (int H : {1, 2, 5}) {
    for (std::int64_t t : {1, 2, 3, 17, 300}) {
      double a0 = 0.0;
      const auto ref = recursive_weights(t, H, a0);
      const auto w = alpha_weights(t, H);
      EXPECT_NEAR(w.alpha0, a0, 1e-15);
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(w.weights[i], ref[i], 1e-13);
    }
  }
}

TEST(AlphaWeights, HorizonOneClosedForm) {
  // alpha_t^i = 2i / (t (t + 1)) when H = 1.
  const std::int64_t t = 50;
  const auto w = alpha_weights(t, 1);
  for (std::int64_t i = 1; i <= t; ++i) EXPECT_NEAR(w.weights[std::size_t(i - 1)], 2.0 * i / double(t * (t + 1)), 1e-14);
}

TEST(Bonus, Examples) {
  EXPECT_NEAR(bonus(16, 1, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(bonus(2, 2, 1.0), 8.0, 1e-14);
  const auto h = hp(3, 100, 1.0);
  EXPECT_DOUBLE_EQ(bonus(5, h), 4.0 * std::sqrt(27.0 * h.iota() / 5.0));
  double prev = bonus(1, h);
  for (std::int64_t t = 2; t < 100; ++t) {
    EXPECT_LT(bonus(t, h), prev);
    prev = bonus(t, h);
  }
  EXPECT_THROW(bonus(0, h), ContractError);
}

TEST(SelectBall, FreshAgentPicksRoot) {
  const ZoomAgent agent(unit_square(), hp(2, 10, 1.0));
  const auto sel = agent.select_ball(1, {0.3});
  EXPECT_EQ(sel.ball_id, 0);
  EXPECT_EQ(sel.action, Coords{0.5});
}

TEST(SelectBall, TwoIndicesPicksLarger) {
  // L = 1. Root at (0, 0) q = 2.0: index 3.0. Child at (0.5, 0.9) q = 1.5: index 0.5 + min(1.5, 2.9) = 2.0.
  Ball root;
  root.center = {{0.0}, {0.0}};
  root.q_hat = 2.0;
  Ball child;
  child.center = {{0.5}, {0.9}};
  child.depth = 1;
  child.q_hat = 1.5;
  const auto p = Partition::from_balls(unit_square(), 1, {root, child});
  EXPECT_DOUBLE_EQ(p.index(0, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(p.index(1, 1.0), 2.0);
  ASSERT_EQ(p.relevant_balls({0.2}).size(), 2u);
  const auto sel = select_ball(p, {0.2}, 1.0);
  EXPECT_EQ(sel.ball_id, 0);
  EXPECT_EQ(sel.action, Coords{0.0});
  EXPECT_EQ(sel.index, 3.0);
}

TEST(SelectBall, EqualIndicesPreferSmallerRadius) {
  // L = 1. Root at (0, 0) q = 1.5: index 2.5. Child at (0.5, 0.9) q = 2.0: index 0.5 + min(2.0, 1.5 + 0.9) = 2.5.
  Ball root;
  root.center = {{0.0}, {0.0}};
  root.q_hat = 1.5;
  Ball child;
  child.center = {{0.5}, {0.9}};
  child.depth = 1;
  child.q_hat = 2.0;
  const auto p = Partition::from_balls(unit_square(), 1, {root, child});
  ASSERT_DOUBLE_EQ(p.index(0, 1.0), 2.5);
  ASSERT_DOUBLE_EQ(p.index(1, 1.0), 2.5);
  ASSERT_EQ(p.relevant_balls({0.2}).size(), 2u);
  EXPECT_EQ(select_ball(p, {0.2}, 1.0).ball_id, 1);
}

TEST(SelectBall, EqualIndicesEqualRadiiPreferLowerId) {
  Ball root;
  root.center = {{0.5}, {0.5}};
  root.q_hat = 5.0;
  Ball a;
  a.center = {{0.25}, {0.2}};
  a.depth = 1;
  a.q_hat = 1.0;
  Ball b = a;
  b.center = {{0.25}, {0.8}};
  const auto p = Partition::from_balls(unit_square(), 1, {root, a, b});
  ASSERT_DOUBLE_EQ(p.index(1, 1.0), p.index(2, 1.0));
  EXPECT_EQ(select_ball(p, {0.25}, 1.0).ball_id, 1);
}

TEST(ValueEstimate, PastHorizonIsZero) {
  const ZoomAgent agent(unit_square(), hp(2, 10, 1.0));
  EXPECT_EQ(agent.value_estimate(3, {0.4}), 0.0);
}

TEST(ValueEstimate, FreshAgentClipsToH) {
  const ZoomAgent agent(unit_square(), hp(2, 10, 1.0));
  EXPECT_DOUBLE_EQ(agent.partition(1).index(0, 1.0), 3.0);
  EXPECT_EQ(agent.value_estimate(1, {0.4}), 2.0);
}

TEST(ValueEstimate, BoundedThroughoutRun) {
  ZoomAgent agent(unit_square(), hp(3, 300, 4.0), 7);
  const BumpLine env(3);
  std::mt19937_64 rng(1);
  for (int k = 1; k <= 300; ++k) {
    agent.run_episode(env, k);
    for (int h = 1; h <= 4; ++h) {
      const double v = agent.value_estimate(h, agent.space().sample_state(rng));
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 3.0);
    }
  }
}

TEST(Update, FirstVisitDiscardsPrior) {
  const auto h = hp(2, 10, 1.0);
  ZoomAgent agent(unit_square(), h);
  StepRecord r;
  r.k = 1;
  r.h = 1;
  r.state = {0.3};
  r.action = {0.5};
  r.ball_id = 0;
  r.reward = 0.4;
  r.v_next = 1.25;
  agent.update(1, r);
  const Ball& root = agent.partition(1).ball(0);
  EXPECT_EQ(root.visits, 1);
  EXPECT_DOUBLE_EQ(root.q_hat, 0.4 + 1.25 + bonus(1, h) + 2.0 * 1.0 * 1.0);
  // Root after its first update: exactly one depth-1 child at the visited pair.
  ASSERT_EQ(agent.partition(1).size(), 2u);
  const Ball& child = agent.partition(1).ball(1);
  EXPECT_EQ(child.depth, 1);
  EXPECT_EQ(child.center, (Point{{0.3}, {0.5}}));
  EXPECT_EQ(child.q_hat, 2.0);
  EXPECT_EQ(child.visits, 0);
}

TEST(RunEpisode, HorizonOneHasOneStep) {
  ZoomAgent agent(unit_square(), hp(1, 5, 4.0));
  const BumpLine env(1);
  const auto rec = agent.run_episode(env, 1);
  EXPECT_EQ(rec.steps.size(), 1u);
  EXPECT_THROW(agent.run_episode(env, 3), ContractError);
}

TEST(RunEpisode, ReturnsWithinBoundsAndRecordsConsistent) {
  ZoomAgent agent(unit_square(), hp(3, 200, 4.0), 3);
  const BumpLine env(3);
  for (int k = 1; k <= 200; ++k) {
    const auto rec = agent.run_episode(env, k);
    EXPECT_GE(rec.realized_return, 0.0);
    EXPECT_LE(rec.realized_return, 3.0);
    ASSERT_EQ(rec.steps.size(), 3u);
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
      const auto& s = rec.steps[i];
      EXPECT_EQ(s.h, int(i) + 1);
      EXPECT_GE(s.v_next, 0.0);
      EXPECT_LE(s.v_next, 3.0);
      if (i + 1 < rec.steps.size()) {
        EXPECT_EQ(s.next_state, rec.steps[i + 1].state);
      }
    }
    EXPECT_EQ(rec.steps.back().v_next, 0.0);
  }
}

TEST(RunEpisode, SameSeedSameTrace) {
  const BumpLine env(3);
  ZoomAgent a(unit_square(), hp(3, 100, 4.0), 11);
  ZoomAgent b(unit_square(), hp(3, 100, 4.0), 11);
  for (int k = 1; k <= 100; ++k) {
    const auto ra = a.run_episode(env, k);
    const auto rb = b.run_episode(env, k);
    ASSERT_EQ(ra.realized_return, rb.realized_return);
    for (std::size_t i = 0; i < ra.steps.size(); ++i) ASSERT_EQ(ra.steps[i].action, rb.steps[i].action);
  }
}

TEST(RunEpisode, TraceReplaysToQHat) {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto h = hp(3, 400, 4.0);
    ZoomAgent agent(unit_square(), h, seed);
    const BumpLine env(3);
    std::map<std::pair<int, int>, std::vector<StepRecord>> by_ball;
    for (int k = 1; k <= 400; ++k)
      for (const auto& s : agent.run_episode(env, k).steps) by_ball[{s.h, s.ball_id}].push_back(s);
    for (int step = 1; step <= 3; ++step) {
      const Partition& part = agent.partition(step);
      for (const Ball& b : part.balls()) {
        const auto it = by_ball.find({step, b.id});
        const auto& rows = it == by_ball.end() ? std::vector<StepRecord>{} : it->second;
        ASSERT_EQ(static_cast<std::int64_t>(rows.size()), b.visits);
        const auto w = alpha_weights(b.visits, 3);
        double q = w.alpha0 * 3.0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          EXPECT_EQ(rows[i].t_after, static_cast<std::int64_t>(i) + 1);
          q += w.weights[i] * (rows[i].reward + rows[i].v_next + bonus(std::int64_t(i) + 1, h) + 2.0 * h.L * b.radius());
        }
        EXPECT_NEAR(b.q_hat, q, 1e-8);
      }
    }
  }
}

TEST(RunEpisode, CentersOnlyGrow) {
  ZoomAgent agent(unit_square(), hp(2, 300, 4.0), 5);
  const BumpLine env(2);
  std::vector<Point> before;
  for (int k = 1; k <= 300; ++k) {
    agent.run_episode(env, k);
    const auto balls = agent.partition(1).balls();
    ASSERT_GE(balls.size(), before.size());
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(balls[i].center, before[i]);
    before.clear();
    for (const Ball& b : balls) before.push_back(b.center);
  }
}
