// Runs the adaptive agent on BumpLine and prints regret and partition growth.
#include <iostream>

#include "zoomrl/zoomrl.hpp"

int main() {
  using namespace zoomrl;
  const BumpLine env(3);
  HyperParams hp;
  hp.H = 3;
  hp.K = 2000;
  hp.L = env.lipschitz_constant();

  ZoomAgent agent(env.space_ptr(), hp, 7);
  const ValueTable table = optimal_values(env, 128);
  std::vector<EpisodeRecord> episodes;
  for (int k = 1; k <= hp.K; ++k) episodes.push_back(agent.run_episode(env, k));
  const auto regret = regret_curve(episodes, table, env, hp.K);

  for (int k : {1, 10, 100, 1000, 2000})
    std::cout << "k=" << k << "  cumulative regret=" << regret[static_cast<std::size_t>(k - 1)].cumulative << '\n';
  for (int h = 1; h <= hp.H; ++h)
    std::cout << "step " << h << ": " << agent.partition(h).size() << " balls, max depth " << agent.partition(h).max_depth() << '\n';
  const auto rep = verify_invariants(agent.partition(1), 10000, 1);
  std::cout << "partition invariants " << (rep.ok() ? "hold" : "FAIL") << '\n';
}
