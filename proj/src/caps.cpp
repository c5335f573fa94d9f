#include "capsrl/caps.hpp"

#include <algorithm>
#include <utility>

#include "capsrl/errors.hpp"

namespace capsrl {

namespace {

void require_policy_set(const PolicySet& ps) {
  if (ps.heads() < 2) {
    throw InternalError("policy set must have at least two heads (reward and cost)");
  }
  if (ps.lambda_values.size() != static_cast<std::size_t>(ps.heads() - 2)) {
    throw InternalError("policy set lambda_values must have K - 2 entries");
  }
}

// Core switching step. share_estimates means the estimators do not depend on
// the head, so duplicate proposals can copy the earlier head's scores instead
// of re-evaluating.
Decision decide(const PolicySet& ps, const HeadQFunction& qr, const HeadQFunction& qc, int s,
                int t, const BudgetState& budget, bool share_estimates) {
  require_policy_set(ps);
  const int K = ps.heads();
  Decision d;
  d.candidate_actions.resize(static_cast<std::size_t>(K));
  d.feasible_mask.assign(static_cast<std::size_t>(K), 0);
  d.qc_estimates.resize(static_cast<std::size_t>(K));
  d.qr_estimates.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    const int a = ps.policies[ku](s, t);
    d.candidate_actions[ku] = a;
    int earlier = -1;
    if (share_estimates) {
      for (int j = 0; j < k; ++j) {
        if (d.candidate_actions[static_cast<std::size_t>(j)] == a) {
          earlier = j;
          break;
        }
      }
    }
    if (earlier >= 0) {
      d.qc_estimates[ku] = d.qc_estimates[static_cast<std::size_t>(earlier)];
      d.qr_estimates[ku] = d.qr_estimates[static_cast<std::size_t>(earlier)];
    } else {
      d.qc_estimates[ku] = qc(k, s, a, t);
      d.qr_estimates[ku] = qr(k, s, a, t);
    }
    const double charged = std::max(d.qc_estimates[ku], 0.0);
    if (charged + static_cast<double>(budget.c_before) <= budget.kappa + kFeasibilityTol) {
      d.feasible_mask[ku] = 1;
    }
  }
  int best = -1;
  for (int k = 0; k < K; ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    if (d.feasible_mask[ku] &&
        (best < 0 || d.qr_estimates[ku] > d.qr_estimates[static_cast<std::size_t>(best)])) {
      best = k;
    }
  }
  if (best >= 0) {
    d.fallback_used = false;
  } else {
    d.fallback_used = true;
    best = 0;
    for (int k = 1; k < K; ++k) {
      if (d.qc_estimates[static_cast<std::size_t>(k)] <
          d.qc_estimates[static_cast<std::size_t>(best)]) {
        best = k;
      }
    }
  }
  d.chosen_head = best;
  d.chosen_action = d.candidate_actions[static_cast<std::size_t>(best)];
  return d;
}

HeadQFunction lift(QFunction q) {
  return [q = std::move(q)](int, int s, int a, int t) { return q(s, a, t); };
}

CostAwarePolicy make_switching_policy(PolicySet ps, HeadQFunction qr, HeadQFunction qc,
                                      bool share_estimates, double kappa, DecisionSink sink) {
  require_policy_set(ps);
  return [ps = std::move(ps), qr = std::move(qr), qc = std::move(qc), share_estimates, kappa,
          sink = std::move(sink)](int s, int t, long long c_before) {
    const BudgetState budget{kappa, c_before};
    const Decision d = decide(ps, qr, qc, s, t, budget, share_estimates);
    if (sink) {
      sink(s, t, c_before, d);
    }
    return d.chosen_action;
  };
}

void require_complete(const TrainedArtifacts& artifacts) {
  if (artifacts.K < 2) {
    throw MissingInputError("switching needs at least two heads; artifact has K=" +
                            std::to_string(artifacts.K));
  }
  if (!artifacts.has_critics()) {
    throw MissingInputError("switching needs reward and cost Q estimators; artifact has none");
  }
}

}  // namespace

std::vector<int> feasible_set(const PolicySet& ps, const QFunction& qc, int s, int t,
                              const BudgetState& budget) {
  require_policy_set(ps);
  std::vector<int> out;
  std::vector<int> candidates(static_cast<std::size_t>(ps.heads()));
  std::vector<double> estimates(static_cast<std::size_t>(ps.heads()));
  for (int k = 0; k < ps.heads(); ++k) {
    const std::size_t ku = static_cast<std::size_t>(k);
    const int a = ps.policies[ku](s, t);
    candidates[ku] = a;
    int earlier = -1;
    for (int j = 0; j < k; ++j) {
      if (candidates[static_cast<std::size_t>(j)] == a) {
        earlier = j;
        break;
      }
    }
    estimates[ku] =
        earlier >= 0 ? estimates[static_cast<std::size_t>(earlier)] : qc(s, a, t);
    const double charged = std::max(estimates[ku], 0.0);
    if (charged + static_cast<double>(budget.c_before) <= budget.kappa + kFeasibilityTol) {
      out.push_back(k);
    }
  }
  return out;
}

Decision select_action(const PolicySet& ps, const QFunction& qr, const QFunction& qc, int s,
                       int t, const BudgetState& budget) {
  return decide(ps, lift(qr), lift(qc), s, t, budget, /*share_estimates=*/true);
}

Decision select_action_per_head(const PolicySet& ps, const HeadQFunction& qr,
                                const HeadQFunction& qc, int s, int t,
                                const BudgetState& budget) {
  return decide(ps, qr, qc, s, t, budget, /*share_estimates=*/false);
}

ExactArtifacts make_exact_artifacts(const ValueTables& vt, int K) {
  if (K < 2) {
    throw InternalError("make_exact_artifacts: K must be >= 2");
  }
  if (!vt.cost_solved || !vt.reward_solved) {
    throw MissingInputError("make_exact_artifacts needs both cost and reward tables solved");
  }
  ExactArtifacts out;
  out.tables = vt;
  out.K = K;
  out.lambda_values = lambda_schedule(K);
  out.policy.assign(static_cast<std::size_t>(K),
                    std::vector<std::vector<int>>(static_cast<std::size_t>(vt.horizon),
                                                  std::vector<int>(
                                                      static_cast<std::size_t>(vt.n_states), 0)));
  for (int k = 0; k < K; ++k) {
    for (int t = 0; t < vt.horizon; ++t) {
      for (int s = 0; s < vt.n_states; ++s) {
        int best = 0;
        double best_score = 0.0;
        for (int a = 0; a < vt.n_actions; ++a) {
          const double qr = vt.qr[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                                 [static_cast<std::size_t>(a)];
          const double qc = vt.qc[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                                 [static_cast<std::size_t>(a)];
          double score = 0.0;
          if (k == 0) {
            score = qr;
          } else if (k == K - 1) {
            score = -qc;
          } else {
            score = qr - out.lambda_values[static_cast<std::size_t>(k - 1)] * qc;
          }
          if (a == 0 || score > best_score) {
            best = a;
            best_score = score;
          }
        }
        out.policy[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)]
                  [static_cast<std::size_t>(s)] = best;
      }
    }
  }
  return out;
}

PolicySet policy_set_from(const TrainedArtifacts& artifacts) {
  PolicySet ps;
  ps.lambda_values = artifacts.lambda_values;
  ps.source = artifacts.algo == Algo::tabular ? PolicySource::tabular : PolicySource::learned;
  for (int k = 0; k < artifacts.K; ++k) {
    ps.policies.push_back(
        [&artifacts, k](int s, int t) { return artifacts.head_action(k, s, t); });
  }
  return ps;
}

PolicySet policy_set_from(const ExactArtifacts& artifacts) {
  PolicySet ps;
  ps.lambda_values = artifacts.lambda_values;
  ps.source = PolicySource::oracle_exact;
  for (int k = 0; k < artifacts.K; ++k) {
    ps.policies.push_back([&artifacts, k](int s, int t) {
      return artifacts.policy[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)]
                             [static_cast<std::size_t>(s)];
    });
  }
  return ps;
}

QFunction q_reward_fn(const TrainedArtifacts& artifacts) {
  return [&artifacts](int s, int a, int t) { return artifacts.q_reward_at(s, a, t); };
}

QFunction q_cost_fn(const TrainedArtifacts& artifacts) {
  return [&artifacts](int s, int a, int t) { return artifacts.q_cost_at(s, a, t); };
}

QFunction q_reward_fn(const ExactArtifacts& artifacts) {
  return [&artifacts](int s, int a, int t) {
    return artifacts.tables.qr[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                              [static_cast<std::size_t>(a)];
  };
}

QFunction q_cost_fn(const ExactArtifacts& artifacts) {
  return [&artifacts](int s, int a, int t) {
    return artifacts.tables.qc[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                              [static_cast<std::size_t>(a)];
  };
}

CostAwarePolicy caps_policy(const TrainedArtifacts& artifacts, double kappa, DecisionSink sink) {
  require_complete(artifacts);
  return make_switching_policy(policy_set_from(artifacts), lift(q_reward_fn(artifacts)),
                               lift(q_cost_fn(artifacts)), /*share_estimates=*/true, kappa,
                               std::move(sink));
}

CostAwarePolicy caps_policy(const ExactArtifacts& artifacts, double kappa, DecisionSink sink) {
  return make_switching_policy(policy_set_from(artifacts), lift(q_reward_fn(artifacts)),
                               lift(q_cost_fn(artifacts)), /*share_estimates=*/true, kappa,
                               std::move(sink));
}

CostAwarePolicy caps_policy_fqe_variant(const TrainedArtifacts& artifacts,
                                        const std::vector<FqeTable>& fqe_reward,
                                        const std::vector<FqeTable>* fqe_cost, double kappa,
                                        DecisionSink sink) {
  if (artifacts.K < 2) {
    throw MissingInputError("switching needs at least two heads; artifact has K=" +
                            std::to_string(artifacts.K));
  }
  if (fqe_reward.size() != static_cast<std::size_t>(artifacts.K)) {
    throw MissingInputError("reward FQE variant needs one reward estimator per head");
  }
  HeadQFunction qr = [&fqe_reward](int k, int s, int a, int t) {
    return fqe_reward[static_cast<std::size_t>(k)].q_at(s, a, t);
  };
  HeadQFunction qc;
  if (fqe_cost != nullptr) {
    if (fqe_cost->size() != static_cast<std::size_t>(artifacts.K)) {
      throw MissingInputError("reward-cost FQE variant needs one cost estimator per head");
    }
    qc = [fqe_cost](int k, int s, int a, int t) {
      return (*fqe_cost)[static_cast<std::size_t>(k)].q_at(s, a, t);
    };
  } else {
    if (!artifacts.has_critics()) {
      throw MissingInputError("reward FQE variant keeps the artifact's cost critic, but the "
                              "artifact has none");
    }
    qc = lift(q_cost_fn(artifacts));
  }
  return make_switching_policy(policy_set_from(artifacts), std::move(qr), std::move(qc),
                               /*share_estimates=*/false, kappa, std::move(sink));
}

}  // namespace capsrl
