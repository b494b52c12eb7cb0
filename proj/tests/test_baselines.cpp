#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "zoomrl/baselines.hpp"

using namespace zoomrl;

namespace {

HyperParams hyper(int H, int K, double L) {
  HyperParams h;
  h.H = H;
  h.K = K;
  h.L = L;
  h.p = 0.1;
  return h;
}

auto unit_square() { return std::make_shared<const MetricSpace>(MetricSpace::box({{0.0, 1.0}}, {{0.0, 1.0}})); }

}  // namespace

TEST(DefaultNetEps, RootOfEpisodeCount) {
  EXPECT_DOUBLE_EQ(default_net_eps(4096, 2.0), 0.125);
  EXPECT_DOUBLE_EQ(default_net_eps(1, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(default_net_eps(100, 0.0), 0.1);
  EXPECT_THROW(default_net_eps(0, 2.0), ContractError);
}

TEST(TabularMetric, UnitDistances) {
  const auto space = tabular_metric_space(5, 2);
  EXPECT_EQ(space.dist({{1.0}, {0.0}}, {{1.0}, {1.0}}), 1.0);
  EXPECT_EQ(space.dist({{3.0}, {1.0}}, {{3.0}, {1.0}}), 0.0);
}

TEST(NetAgent, CoarsestNetIsOneCell) {
  const NetAgent agent = NetAgent::nbql(unit_square(), 1.0, hyper(3, 10, 4.0));
  EXPECT_EQ(agent.net_size(), 1u);
  EXPECT_EQ(agent.memory_cells(), 3u);
  EXPECT_DOUBLE_EQ(agent.bias(), 8.0);
}

TEST(NetAgent, TabularHasOneCellPerPairAndNoBias) {
  const auto space = std::make_shared<const MetricSpace>(tabular_metric_space(5, 2));
  const NetAgent agent = NetAgent::tabular_qucb(space, hyper(5, 10, 5.0));
  EXPECT_EQ(agent.net_size(), 10u);
  EXPECT_EQ(agent.bias(), 0.0);
  EXPECT_EQ(agent.name(), "tabular_qucb");
  EXPECT_THROW(NetAgent::tabular_qucb(unit_square(), hyper(5, 10, 5.0)), ContractError);
}

TEST(NetAgent, NetStatesCoverWithinEps) {
  for (double eps : {0.5, 0.25, 0.1}) {
    const NetAgent agent = NetAgent::nbql(unit_square(), eps, hyper(2, 10, 1.0));
    for (int i = 0; i <= 1000; ++i) {
      const Coords s{i / 1000.0};
      const Coords snapped = agent.net().state_at(agent.net().nearest_state(s));
      EXPECT_LE(std::abs(snapped[0] - s[0]), eps + 1e-12);
    }
    EXPECT_DOUBLE_EQ(agent.bias(), 2.0 * eps);
  }
}

TEST(NetAgent, FreshTiesGoToLowestActionIndex) {
  const NetAgent agent = NetAgent::nbql(unit_square(), 0.25, hyper(3, 10, 4.0));
  ASSERT_GT(agent.action_cells(), 1u);
  EXPECT_EQ(agent.greedy_action_index(1, {0.7}), 0u);
  EXPECT_EQ(agent.value_estimate(1, {0.7}), 3.0);
  EXPECT_EQ(agent.value_estimate(4, {0.7}), 0.0);
}

TEST(NetAgent, FirstEpisodeOnChainByHand) {
  const int H = 5;
  const TabularChain env(H);
  const HyperParams hp = hyper(H, 100, H);
  NetAgent agent = NetAgent::tabular_qucb(env.space_ptr(), hp);
  const EpisodeRecord rec = agent.run_episode(env, 1);
  const double u1 = 4.0 * std::sqrt(125.0 * std::log(4.0 * 5.0 * 100.0 * 100.0 / 0.1));
  ASSERT_EQ(rec.steps.size(), 5u);
  for (const StepRecord& s : rec.steps) {
    // every cell ties at H, so action 0 is taken and the chain stays at state 0
    EXPECT_EQ(s.action, Coords{0.0});
    EXPECT_EQ(s.state, Coords{0.0});
    EXPECT_EQ(s.reward, 0.0);
    EXPECT_EQ(s.t_after, 1);
  }
  const std::size_t c = agent.cell(0, 0);
  for (int h = 1; h < H; ++h) EXPECT_NEAR(agent.q_hat(h, c), 5.0 + u1, 1e-9);
  EXPECT_NEAR(agent.q_hat(H, c), u1, 1e-9);
  EXPECT_EQ(agent.q_hat(1, agent.cell(0, 1)), 5.0);
  EXPECT_EQ(agent.visits(1, c), 1);
  EXPECT_EQ(rec.realized_return, 0.0);
}

TEST(NetAgent, ReturnsAndEstimatesBounded) {
  const BumpLine env(3);
  NetAgent agent = NetAgent::nbql(env.space_ptr(), 0.125, hyper(3, 300, 4.0), 5);
  for (int k = 1; k <= 300; ++k) {
    const EpisodeRecord rec = agent.run_episode(env, k);
    EXPECT_GE(rec.realized_return, 0.0);
    EXPECT_LE(rec.realized_return, 3.0);
    for (const StepRecord& s : rec.steps) {
      EXPECT_GE(s.v_next, 0.0);
      EXPECT_LE(s.v_next, 3.0);
    }
  }
}

TEST(NetAgent, SameSeedSameTrajectory) {
  const BumpLine env(3);
  NetAgent a = NetAgent::nbql(env.space_ptr(), 0.25, hyper(3, 50, 4.0), 9);
  NetAgent b = NetAgent::nbql(env.space_ptr(), 0.25, hyper(3, 50, 4.0), 9);
  for (int k = 1; k <= 50; ++k) {
    const auto ra = a.run_episode(env, k);
    const auto rb = b.run_episode(env, k);
    ASSERT_EQ(ra.realized_return, rb.realized_return);
    for (std::size_t i = 0; i < ra.steps.size(); ++i) ASSERT_EQ(ra.steps[i].action, rb.steps[i].action);
  }
}

TEST(NetAgent, EpisodesMustRunInOrder) {
  const BumpLine env(3);
  NetAgent agent = NetAgent::nbql(env.space_ptr(), 0.5, hyper(3, 5, 4.0));
  EXPECT_THROW(agent.run_episode(env, 2), ContractError);
  const BumpLine other(4);
  EXPECT_THROW(agent.run_episode(other, 1), ContractError);
}
