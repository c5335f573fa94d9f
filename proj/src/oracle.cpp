#include "capsrl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <utility>

#include "capsrl/errors.hpp"
#include "capsrl/io.hpp"

namespace capsrl {

namespace {

enum class Objective { cost, reward };

// Shared backward-induction core. Cost: terminal c[s], per-step c[s], min.
// Reward: terminal 0, per-step r[s][a], max (or min for solve_reward_minimal).
void solve_into(const Cmdp& m, Objective obj, bool minimize,
                std::vector<std::vector<std::vector<double>>>& q,
                std::vector<std::vector<double>>& v) {
  const int T = m.horizon;
  const int S = m.n_states;
  const int A = m.n_actions;
  q.assign(static_cast<std::size_t>(T) + 1,
           std::vector<std::vector<double>>(static_cast<std::size_t>(S),
                                            std::vector<double>(static_cast<std::size_t>(A), 0.0)));
  v.assign(static_cast<std::size_t>(T) + 1, std::vector<double>(static_cast<std::size_t>(S), 0.0));
  for (int s = 0; s < S; ++s) {
    const double terminal = obj == Objective::cost ? static_cast<double>(m.cost[s]) : 0.0;
    v[static_cast<std::size_t>(T)][static_cast<std::size_t>(s)] = terminal;
    for (int a = 0; a < A; ++a) {
      q[static_cast<std::size_t>(T)][static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] =
          terminal;  // definitional fill; no action is taken at t = T
    }
  }
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      double best = minimize ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        double expo = 0.0;
        for (int sn = 0; sn < S; ++sn) {
          const double p = m.transition[s][a][sn];
          if (p > 0.0) {
            expo += p * v[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(sn)];
          }
        }
        const double immediate =
            obj == Objective::cost ? static_cast<double>(m.cost[s]) : m.reward[s][a];
        const double qv = immediate + expo;
        q[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = qv;
        best = minimize ? std::min(best, qv) : std::max(best, qv);
      }
      v[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] = best;
    }
  }
}

AugmentedValue evaluate_policy(const Cmdp& m, const CostAwarePolicy& policy, Objective obj) {
  require_valid(m);
  const int T = m.horizon;
  const int S = m.n_states;
  AugmentedValue av;
  av.horizon = T;
  av.n_states = S;
  av.b_max = T * m.c_max;
  const int B = av.b_max + 1;
  av.v.assign(static_cast<std::size_t>(T) + 1,
              std::vector<std::vector<double>>(static_cast<std::size_t>(S),
                                               std::vector<double>(static_cast<std::size_t>(B), 0.0)));
  for (int s = 0; s < S; ++s) {
    const double terminal = obj == Objective::cost ? static_cast<double>(m.cost[s]) : 0.0;
    for (int b = 0; b < B; ++b) {
      av.v[static_cast<std::size_t>(T)][static_cast<std::size_t>(s)][static_cast<std::size_t>(b)] =
          terminal;
    }
  }
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < S; ++s) {
      for (int b = 0; b < B; ++b) {
        const int a = policy(s, t, b);
        if (a < 0 || a >= m.n_actions) {
          throw InternalError("evaluate_policy: policy returned out-of-range action");
        }
        // Accumulated cost after leaving s; clamped defensively although
        // b + c[s] <= T*c_max holds for reachable triples by construction.
        const int b_next = std::min(b + m.cost[s], av.b_max);
        double expo = 0.0;
        for (int sn = 0; sn < S; ++sn) {
          const double p = m.transition[s][a][sn];
          if (p > 0.0) {
            expo += p * av.v[static_cast<std::size_t>(t) + 1][static_cast<std::size_t>(sn)]
                         [static_cast<std::size_t>(b_next)];
          }
        }
        const double immediate =
            obj == Objective::cost ? static_cast<double>(m.cost[s]) : m.reward[s][a];
        av.v[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)][static_cast<std::size_t>(b)] =
            immediate + expo;
      }
    }
  }
  return av;
}

}  // namespace

ValueTables solve_cost_optimal(const Cmdp& m) {
  require_valid(m);
  ValueTables vt;
  vt.horizon = m.horizon;
  vt.n_states = m.n_states;
  vt.n_actions = m.n_actions;
  solve_into(m, Objective::cost, /*minimize=*/true, vt.qc, vt.vc);
  vt.cost_solved = true;
  return vt;
}

ValueTables solve_reward_optimal(const Cmdp& m) {
  require_valid(m);
  ValueTables vt;
  vt.horizon = m.horizon;
  vt.n_states = m.n_states;
  vt.n_actions = m.n_actions;
  solve_into(m, Objective::reward, /*minimize=*/false, vt.qr, vt.vr);
  vt.reward_solved = true;
  return vt;
}

ValueTables solve_all(const Cmdp& m) {
  ValueTables vt = solve_cost_optimal(m);
  ValueTables vr = solve_reward_optimal(m);
  vt.qr = std::move(vr.qr);
  vt.vr = std::move(vr.vr);
  vt.reward_solved = true;
  return vt;
}

std::vector<std::vector<double>> solve_reward_minimal(const Cmdp& m) {
  require_valid(m);
  std::vector<std::vector<std::vector<double>>> q;
  std::vector<std::vector<double>> v;
  solve_into(m, Objective::reward, /*minimize=*/true, q, v);
  return v;
}

VariationReport optimal_cost_variation(const Cmdp& m, const ValueTables& vt) {
  if (!vt.cost_solved) {
    throw InternalError("optimal_cost_variation: cost tables not solved");
  }
  VariationReport rep;
  for (int t = 0; t < m.horizon; ++t) {
    const auto& vnext = vt.vc[static_cast<std::size_t>(t) + 1];
    for (int s = 0; s < m.n_states; ++s) {
      for (int a = 0; a < m.n_actions; ++a) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        int lo_s = -1, hi_s = -1;
        for (int sn = 0; sn < m.n_states; ++sn) {
          if (m.transition[s][a][sn] > 0.0) {
            const double val = vnext[static_cast<std::size_t>(sn)];
            if (val < lo) {
              lo = val;
              lo_s = sn;
            }
            if (val > hi) {
              hi = val;
              hi_s = sn;
            }
          }
        }
        const double spread = hi - lo;
        if (hi_s >= 0 && spread > rep.epsilon) {
          rep.epsilon = spread;
          rep.s = s;
          rep.a = a;
          rep.t = t;
          rep.s_hi = hi_s;
          rep.s_lo = lo_s;
        }
      }
    }
  }
  return rep;
}

AugmentedValue evaluate_policy_cost(const Cmdp& m, const CostAwarePolicy& policy) {
  return evaluate_policy(m, policy, Objective::cost);
}

AugmentedValue evaluate_policy_reward(const Cmdp& m, const CostAwarePolicy& policy) {
  return evaluate_policy(m, policy, Objective::reward);
}

std::vector<AugmentedTriple> reachable_triples(const Cmdp& m, const CostAwarePolicy& policy) {
  require_valid(m);
  const int T = m.horizon;
  // visited[t] holds (s,b) pairs seen at timestep t.
  std::vector<std::set<std::pair<int, long long>>> visited(static_cast<std::size_t>(T) + 1);
  std::deque<AugmentedTriple> frontier;
  for (int s = 0; s < m.n_states; ++s) {
    if (m.mu0[static_cast<std::size_t>(s)] > 0.0) {
      visited[0].insert({s, 0});
      frontier.push_back({s, 0, 0});
    }
  }
  std::vector<AugmentedTriple> out;
  while (!frontier.empty()) {
    const AugmentedTriple cur = frontier.front();
    frontier.pop_front();
    out.push_back(cur);
    if (cur.t == T) {
      continue;
    }
    const int a = policy(cur.s, cur.t, cur.b);
    if (a < 0 || a >= m.n_actions) {
      throw InternalError("reachable_triples: policy returned out-of-range action");
    }
    const long long b_next = cur.b + m.cost[static_cast<std::size_t>(cur.s)];
    for (int sn = 0; sn < m.n_states; ++sn) {
      if (m.transition[static_cast<std::size_t>(cur.s)][static_cast<std::size_t>(a)]
                      [static_cast<std::size_t>(sn)] > 0.0) {
        if (visited[static_cast<std::size_t>(cur.t) + 1].insert({sn, b_next}).second) {
          frontier.push_back({sn, cur.t + 1, b_next});
        }
      }
    }
  }
  return out;
}

AdmissibilityReport check_admissible(const Cmdp& m, const CostAwarePolicy& policy, double kappa,
                                     const ValueTables& vt) {
  if (!vt.cost_solved) {
    throw InternalError("check_admissible: cost tables not solved");
  }
  AdmissibilityReport rep;
  for (const AugmentedTriple& node : reachable_triples(m, policy)) {
    if (node.t >= m.horizon) {
      continue;  // no decision at t = T
    }
    ++rep.checked;
    const int a = policy(node.s, node.t, node.b);
    const double q = vt.qc[static_cast<std::size_t>(node.t)][static_cast<std::size_t>(node.s)]
                          [static_cast<std::size_t>(a)];
    const double bound = std::max(
        vt.vc[static_cast<std::size_t>(node.t)][static_cast<std::size_t>(node.s)],
        kappa - static_cast<double>(node.b));
    if (q > bound + kBoundTol) {
      rep.pass = false;
      rep.s = node.s;
      rep.t = node.t;
      rep.b = node.b;
      rep.q_value = q;
      rep.bound = bound;
      return rep;
    }
  }
  return rep;
}

BoundReport verify_theorem_bound(const Cmdp& m, const CostAwarePolicy& policy, double kappa) {
  BoundReport rep;
  rep.kappa = kappa;
  const ValueTables vt = solve_cost_optimal(m);
  rep.epsilon = optimal_cost_variation(m, vt).epsilon;
  rep.admissibility = check_admissible(m, policy, kappa, vt);
  if (!rep.admissibility.pass) {
    rep.applicable = false;  // Theorem 1 does not apply; report says so
    return rep;
  }
  rep.applicable = true;
  const AugmentedValue av = evaluate_policy_cost(m, policy);
  rep.max_violation = -std::numeric_limits<double>::infinity();
  for (const AugmentedTriple& node : reachable_triples(m, policy)) {
    ++rep.checked;
    const double value = av.v[static_cast<std::size_t>(node.t)][static_cast<std::size_t>(node.s)]
                             [static_cast<std::size_t>(std::min<long long>(node.b, av.b_max))];
    const double bound =
        std::max(vt.vc[static_cast<std::size_t>(node.t)][static_cast<std::size_t>(node.s)],
                 kappa - static_cast<double>(node.b)) +
        static_cast<double>(m.horizon - node.t) * rep.epsilon;
    const double violation = value - bound;
    if (violation > rep.max_violation) {
      rep.max_violation = violation;
      rep.worst_s = node.s;
      rep.worst_t = node.t;
      rep.worst_b = node.b;
    }
  }
  return rep;
}

std::string bound_report_to_json(const BoundReport& rep, const std::string& env_name) {
  JsonWriter w;
  w.begin_object();
  w.key("env").value(env_name);
  w.key("kappa").value(rep.kappa);
  w.key("applicable").value(rep.applicable);
  w.key("admissible").value(rep.admissibility.pass);
  if (!rep.admissibility.pass) {
    w.key("admissibility_witness").begin_object();
    w.key("s").value(rep.admissibility.s);
    w.key("t").value(rep.admissibility.t);
    w.key("b").value(rep.admissibility.b);
    w.key("q_value").value(rep.admissibility.q_value);
    w.key("bound").value(rep.admissibility.bound);
    w.end_object();
  }
  w.key("epsilon").value(rep.epsilon);
  w.key("max_violation").value(rep.applicable ? rep.max_violation : 0.0);
  w.key("worst").begin_object();
  w.key("s").value(rep.worst_s);
  w.key("t").value(rep.worst_t);
  w.key("b").value(rep.worst_b);
  w.end_object();
  w.key("checked_triples").value(rep.checked);
  w.key("tolerance").value(kBoundTol);
  w.end_object();
  return w.str();
}

std::string variation_report_to_json(const VariationReport& rep, const std::string& env_name) {
  JsonWriter w;
  w.begin_object();
  w.key("env").value(env_name);
  w.key("epsilon").value(rep.epsilon);
  w.key("witness").begin_object();
  w.key("s").value(rep.s);
  w.key("a").value(rep.a);
  w.key("t").value(rep.t);
  w.key("s_hi").value(rep.s_hi);
  w.key("s_lo").value(rep.s_lo);
  w.end_object();
  w.end_object();
  return w.str();
}

}  // namespace capsrl
