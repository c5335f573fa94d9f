#pragma once

// Test-time policy switching. A trained artifact carries K head policies
// ordered [reward head, intermediate heads by ascending lambda, cost head]
// plus reward/cost Q estimators. At each step the switcher collects every
// head's proposed action, filters the proposals against the remaining cost
// budget using Q^c, and picks the proposal with the best Q^r; when nothing
// passes the filter it falls back to the proposal with the least estimated
// cost-to-go. The threshold kappa is a pure test-time input, so one training
// run serves every budget.

#include <functional>
#include <vector>

#include "capsrl/cmdp.hpp"
#include "capsrl/oracle.hpp"
#include "capsrl/trainers.hpp"

namespace capsrl {

// Slack on the budget comparison so exact-table verification cannot fail on
// last-bit arithmetic.
inline constexpr double kFeasibilityTol = 1e-9;

// Q estimate for (s, a, t); the per-head form lets each head consult its own
// estimator (used by the FQE switching variants).
using QFunction = std::function<double(int s, int a, int t)>;
using HeadQFunction = std::function<double(int k, int s, int a, int t)>;

enum class PolicySource { tabular, learned, oracle_exact };

// Ordered head policies. Invariant: at least two entries, the first is the
// reward head and the last is the cost head; lambda_values has K - 2 entries
// for the intermediate heads.
struct PolicySet {
  std::vector<HeadPolicyFn> policies;
  std::vector<double> lambda_values;
  PolicySource source = PolicySource::learned;

  int heads() const { return static_cast<int>(policies.size()); }
};

// Cost threshold plus the cost accumulated strictly before the current state
// (c_before is 0 at t = 0 and grows by the landed cost of each visited state).
struct BudgetState {
  double kappa = 0.0;
  long long c_before = 0;
};

// Full record of one switching step, enough to audit the filter and the
// selection. fallback_used holds exactly when feasible_mask is all false; the
// chosen action always comes from candidate_actions.
struct Decision {
  int chosen_action = -1;
  int chosen_head = -1;
  std::vector<int> candidate_actions;   // one per head
  std::vector<char> feasible_mask;      // one per head
  bool fallback_used = false;
  std::vector<double> qc_estimates;     // raw (unclamped) per candidate
  std::vector<double> qr_estimates;
};

// Observer invoked with every Decision a switching policy makes.
using DecisionSink = std::function<void(int s, int t, long long c_before, const Decision&)>;

// Filter step: head indices whose proposal fits the remaining budget, i.e.
// max(qc(s, a, t), 0) + c_before <= kappa + tolerance. The clamp keeps a
// negative learned estimate from fabricating budget.
std::vector<int> feasible_set(const PolicySet& ps, const QFunction& qc, int s, int t,
                              const BudgetState& budget);

// Filter + select: reward-best feasible proposal, ties broken by head order;
// on an empty feasible set, the proposal with minimum qc, ties by head order.
// Duplicate proposals are evaluated once and attributed to the earliest head.
Decision select_action(const PolicySet& ps, const QFunction& qr, const QFunction& qc, int s,
                       int t, const BudgetState& budget);

// Same switching logic with per-head estimators (each head's proposal scored
// by its own Q tables). select_action is this with head-independent tables.
Decision select_action_per_head(const PolicySet& ps, const HeadQFunction& qr,
                                const HeadQFunction& qc, int s, int t,
                                const BudgetState& budget);

// Exact-table artifact: DP value tables plus the K greedy head policies they
// induce (head 0 maximizes q_reward, head K-1 minimizes q_cost, intermediate
// head k maximizes q_reward - lambda_k q_cost; lowest action index on ties).
struct ExactArtifacts {
  ValueTables tables;
  int K = 2;
  std::vector<double> lambda_values;
  std::vector<std::vector<std::vector<int>>> policy;  // [head][t][s]
};

ExactArtifacts make_exact_artifacts(const ValueTables& vt, int K);

// Switching policies pluggable into sample_episode / evaluate_policy_cost /
// check_admissible. The artifact is captured by reference and must outlive
// the returned policy. Throws MissingInputError when the artifact lacks the
// Q estimators the switch needs (e.g. a behavior-cloning baseline).
CostAwarePolicy caps_policy(const TrainedArtifacts& artifacts, double kappa,
                            DecisionSink sink = nullptr);
CostAwarePolicy caps_policy(const ExactArtifacts& artifacts, double kappa,
                            DecisionSink sink = nullptr);

// FQE switching variants: fqe_reward supplies one reward estimator per head.
// With fqe_cost == nullptr the cost filter keeps the artifact's own Q^c
// ("reward FQE"); otherwise each head is filtered by its own FQE cost table
// ("reward-cost FQE").
CostAwarePolicy caps_policy_fqe_variant(const TrainedArtifacts& artifacts,
                                        const std::vector<FqeTable>& fqe_reward,
                                        const std::vector<FqeTable>* fqe_cost, double kappa,
                                        DecisionSink sink = nullptr);

// Building blocks shared with evaluation and tests.
PolicySet policy_set_from(const TrainedArtifacts& artifacts);
PolicySet policy_set_from(const ExactArtifacts& artifacts);
QFunction q_reward_fn(const TrainedArtifacts& artifacts);
QFunction q_cost_fn(const TrainedArtifacts& artifacts);
QFunction q_reward_fn(const ExactArtifacts& artifacts);
QFunction q_cost_fn(const ExactArtifacts& artifacts);

}  // namespace capsrl
