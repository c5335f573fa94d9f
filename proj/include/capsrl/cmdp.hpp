#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "capsrl/rng.hpp"

namespace capsrl {

// Finite-horizon constrained MDP. Costs attach to states and are non-negative
// integers in [0, c_max], which keeps the accumulated-cost axis finite so the
// exact augmented-state DP terminates with no discretization error. Rewards
// attach to (state, action).
struct Cmdp {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;  // T: timesteps 0..T, T actions per episode
  int c_max = 0;
  std::vector<std::vector<std::vector<double>>> transition;  // P[s][a][s']
  std::vector<std::vector<double>> reward;                   // r[s][a]
  std::vector<int> cost;                                     // c[s]
  std::vector<double> mu0;
  std::string name;
};

struct Violation {
  std::string field;    // which invariant family
  std::string index;    // offending index, e.g. "(s=0,a=0)"
  double observed = 0;  // observed value
  std::string message;
};

// Empty iff all Cmdp invariants hold. Diagnostic: never throws.
std::vector<Violation> validate(const Cmdp& cmdp);

// Throws InternalError listing the first violations if the instance is bad.
void require_valid(const Cmdp& cmdp);

// A cost-aware policy maps (state, timestep, accumulated cost strictly before
// now) to an action. Stationary policies simply ignore t and c_before.
using CostAwarePolicy = std::function<int(int s, int t, long long c_before)>;

struct Step {
  int t = 0;
  int s = 0;
  int a = 0;
  double r = 0.0;
  int c = 0;  // cost incurred entering the successor state c(s_{t+1})
};

struct Trajectory {
  std::vector<Step> steps;  // exactly horizon entries, t = 0..T-1
  double total_reward = 0.0;
  long long total_cost = 0;  // sum of step costs = costs of s_1..s_T
  int final_state = 0;       // s_T (its cost is already in total_cost)
};

// Rolls one episode: s_0 ~ mu0, a_t = policy(s_t, t, c_<t), s_{t+1} ~ P.
// The budget passed to the policy is the accumulated cost of states visited
// strictly before t, including c(s_0). Deterministic given the seed.
Trajectory sample_episode(const Cmdp& cmdp, const CostAwarePolicy& policy, RngSeed seed);

// The canonical 3-state, 2-action, horizon-1 deterministic instance used
// throughout the tests: action 0 ("safe") earns 0.2 and lands on a cost-0
// state; action 1 ("risky") earns 1.0 and lands on a cost-1 state.
inline constexpr int kChain3Safe = 0;
inline constexpr int kChain3Risky = 1;
Cmdp make_chain3();

// Grid navigation with hazard cells. Cells are row-major ids (row*width+col).
// Actions: 0=up, 1=right, 2=down, 3=left, 4=stay; moving off-grid stays in
// place; with probability slip_prob a move deviates +/-90 degrees (stay never
// slips). Entering a hazard costs 1. Reward is 1 per step at the absorbing
// goal and -0.01 elsewhere, so the shortest route through a hazard can beat
// the safe detour and the reward/cost optima differ. The initial state is the
// first non-hazard, non-goal cell in row-major order.
Cmdp make_hazard_gridworld(int width, int height, const std::vector<int>& hazards, int goal,
                           double slip_prob, int horizon);

// Random instance: each (s,a) has exactly `branching` supported successors
// with flat-Dirichlet probabilities, rewards uniform in [0,1], costs uniform
// integers in [0, cost_max], mu0 = point mass on state 0.
Cmdp make_random_cmdp(int n_states, int n_actions, int horizon, int branching, int cost_max,
                      RngSeed seed);

// { s' : P[s][a][s'] > 0 }, strict positivity, ascending order.
std::vector<int> support(const Cmdp& cmdp, int s, int a);

std::string cmdp_to_json(const Cmdp& cmdp);
Cmdp cmdp_from_json(const std::string& text);
void save_cmdp(const Cmdp& cmdp, const std::filesystem::path& path);
Cmdp load_cmdp(const std::filesystem::path& path);

}  // namespace capsrl
