#pragma once

#include <string>
#include <vector>

#include "capsrl/cmdp.hpp"

namespace capsrl {

// Absolute tolerance for admissibility and bound checks: pure double DP on
// desk-scale instances accumulates far less error than this.
inline constexpr double kBoundTol = 1e-9;

// Non-stationary exact Q/V tables, one slice per timestep t = 0..T. The t = T
// slice is the definitional fill (qc[T][s][a] = c[s], qr[T][s][a] = 0); all
// decisions happen at t < T. DP here is undiscounted, matching the theorem.
struct ValueTables {
  int horizon = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<std::vector<std::vector<double>>> qc, qr;  // [t][s][a]
  std::vector<std::vector<double>> vc, vr;               // [t][s]
  bool cost_solved = false;
  bool reward_solved = false;
};

// Backward induction for the cost objective: vc[T][s] = c[s],
// qc[t][s][a] = c[s] + sum_s' P[s][a][s'] vc[t+1][s'], vc[t][s] = min_a qc.
ValueTables solve_cost_optimal(const Cmdp& cmdp);

// Reward analog: vr[T][s] = 0, max over actions.
ValueTables solve_reward_optimal(const Cmdp& cmdp);

// Both objectives in one table set.
ValueTables solve_all(const Cmdp& cmdp);

// Min achievable expected return (backward induction with min over actions);
// supplies r_min for the evaluation module's normalization.
std::vector<std::vector<double>> solve_reward_minimal(const Cmdp& cmdp);

// Optimal-cost variation: epsilon = max over (s,a,t), t < T, of the spread of
// vc[t+1][s'] across s' in support(s,a). The next-timestep indexing follows
// the proof's inductive step. Deterministic instances give epsilon = 0.
struct VariationReport {
  double epsilon = 0.0;
  int s = -1, a = -1, t = -1;     // witness achieving the max spread
  int s_hi = -1, s_lo = -1;       // successors realizing max/min
};
VariationReport optimal_cost_variation(const Cmdp& cmdp, const ValueTables& vt);

// Expected remaining cost v[t][s][b] under a fixed cost-aware policy, with the
// accumulated-cost axis b = 0..T*c_max explicit: v[T][s][b] = c[s],
// v[t][s][b] = c[s] + sum_s' P[s][pi(s,t,b)][s'] v[t+1][s'][b + c[s]].
struct AugmentedValue {
  int horizon = 0;
  int n_states = 0;
  int b_max = 0;  // inclusive upper bound of the accumulated-cost axis
  std::vector<std::vector<std::vector<double>>> v;  // [t][s][b]
};
AugmentedValue evaluate_policy_cost(const Cmdp& cmdp, const CostAwarePolicy& policy);

// Reward counterpart (terminal value 0, reward r[s][a] per step).
AugmentedValue evaluate_policy_reward(const Cmdp& cmdp, const CostAwarePolicy& policy);

// Reachable (s,t,b) triples under a policy: forward closure from
// {(s0, 0, 0) : mu0[s0] > 0}. Triples at t = T are included (no action).
struct AugmentedTriple {
  int s = 0;
  int t = 0;
  long long b = 0;
};
std::vector<AugmentedTriple> reachable_triples(const Cmdp& cmdp, const CostAwarePolicy& policy);

// Assumption 1 check: qc[t][s][policy(s,t,b)] <= max{vc[t][s], kappa - b} + tol
// for every reachable (s,t,b) with t < T.
struct AdmissibilityReport {
  bool pass = true;
  int s = -1, t = -1;
  long long b = 0;          // first violation witness
  double q_value = 0.0;     // qc at the witness
  double bound = 0.0;       // max{vc, kappa-b} at the witness
  long long checked = 0;    // number of (s,t,b) decision points examined
};
AdmissibilityReport check_admissible(const Cmdp& cmdp, const CostAwarePolicy& policy,
                                     double kappa, const ValueTables& vt);

// Theorem 1 check: for a kappa-admissible policy, asserts
// v[t][s][b] <= max{vc[t][s], kappa - b} + (T - t) * epsilon + tol on every
// reachable triple and reports the maximum violation (expected <= 0).
struct BoundReport {
  bool applicable = false;  // false when the admissibility precondition failed
  AdmissibilityReport admissibility;
  double kappa = 0.0;
  double epsilon = 0.0;
  double max_violation = 0.0;  // max over triples of v - bound
  int worst_s = -1, worst_t = -1;
  long long worst_b = 0;
  long long checked = 0;
};
BoundReport verify_theorem_bound(const Cmdp& cmdp, const CostAwarePolicy& policy, double kappa);

std::string bound_report_to_json(const BoundReport& report, const std::string& env_name);
std::string variation_report_to_json(const VariationReport& report, const std::string& env_name);

}  // namespace capsrl
