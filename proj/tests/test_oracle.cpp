#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "capsrl/cmdp.hpp"
#include "capsrl/oracle.hpp"

using namespace capsrl;

namespace {

int start_state(const Cmdp& m) {
  for (int s = 0; s < m.n_states; ++s) {
    if (m.mu0[static_cast<std::size_t>(s)] > 0.0) return s;
  }
  return -1;
}

// Reference backward induction written from the recurrences directly, kept
// separate from the library implementation so the two can cross-check.
struct RefTables {
  std::vector<std::vector<double>> vc, vr;
  std::vector<std::vector<std::vector<double>>> qc, qr;
};

RefTables ref_solve(const Cmdp& m) {
  const int T = m.horizon;
  RefTables out;
  out.vc.assign(T + 1, std::vector<double>(m.n_states, 0.0));
  out.vr = out.vc;
  out.qc.assign(T + 1, std::vector<std::vector<double>>(
                           m.n_states, std::vector<double>(m.n_actions, 0.0)));
  out.qr = out.qc;
  for (int s = 0; s < m.n_states; ++s) {
    out.vc[T][s] = m.cost[s];
    out.vr[T][s] = 0.0;
    for (int a = 0; a < m.n_actions; ++a) {
      out.qc[T][s][a] = m.cost[s];
      out.qr[T][s][a] = 0.0;
    }
  }
  for (int t = T - 1; t >= 0; --t) {
    for (int s = 0; s < m.n_states; ++s) {
      for (int a = 0; a < m.n_actions; ++a) {
        double qc = m.cost[s];
        double qr = m.reward[s][a];
        for (int sn = 0; sn < m.n_states; ++sn) {
          qc += m.transition[s][a][sn] * out.vc[t + 1][sn];
          qr += m.transition[s][a][sn] * out.vr[t + 1][sn];
        }
        out.qc[t][s][a] = qc;
        out.qr[t][s][a] = qr;
      }
      out.vc[t][s] = *std::min_element(out.qc[t][s].begin(), out.qc[t][s].end());
      out.vr[t][s] = *std::max_element(out.qr[t][s].begin(), out.qr[t][s].end());
    }
  }
  return out;
}

// Two-step deterministic line s0 -> s1 -> s2 with costs 2, 3, 1.
Cmdp make_line() {
  Cmdp m;
  m.n_states = 3;
  m.n_actions = 1;
  m.horizon = 2;
  m.c_max = 3;
  m.transition = {{{0.0, 1.0, 0.0}}, {{0.0, 0.0, 1.0}}, {{0.0, 0.0, 1.0}}};
  m.reward = {{1.0}, {1.0}, {1.0}};
  m.cost = {2, 3, 1};
  m.mu0 = {1.0, 0.0, 0.0};
  m.name = "line";
  return m;
}

// One action from s0 splits 50/50 between a free state and a cost-3 state.
Cmdp make_split() {
  Cmdp m;
  m.n_states = 3;
  m.n_actions = 1;
  m.horizon = 1;
  m.c_max = 3;
  m.transition = {{{0.0, 0.5, 0.5}}, {{0.0, 1.0, 0.0}}, {{0.0, 0.0, 1.0}}};
  m.reward = {{0.0}, {0.0}, {0.0}};
  m.cost = {0, 0, 3};
  m.mu0 = {1.0, 0.0, 0.0};
  m.name = "split";
  return m;
}

}  // namespace

TEST_CASE("chain3 DP values by hand") {
  const Cmdp m = make_chain3();
  const ValueTables vt = solve_all(m);
  REQUIRE(vt.cost_solved);
  REQUIRE(vt.reward_solved);
  REQUIRE(static_cast<int>(vt.qc.size()) == m.horizon + 1);
  const int s0 = start_state(m);
  CHECK(vt.qc[0][s0][kChain3Safe] == 0.0);
  CHECK(vt.qc[0][s0][kChain3Risky] == doctest::Approx(1.0));
  CHECK(vt.qr[0][s0][kChain3Safe] == doctest::Approx(0.2));
  CHECK(vt.qr[0][s0][kChain3Risky] == doctest::Approx(1.0));
  CHECK(vt.vc[0][s0] == 0.0);
  CHECK(vt.vr[0][s0] == doctest::Approx(1.0));
  // Terminal slice is the definitional fill.
  for (int s = 0; s < m.n_states; ++s) {
    CHECK(vt.vc[1][s] == doctest::Approx(m.cost[s]));
    CHECK(vt.vr[1][s] == 0.0);
    for (int a = 0; a < m.n_actions; ++a) {
      CHECK(vt.qc[1][s][a] == doctest::Approx(m.cost[s]));
      CHECK(vt.qr[1][s][a] == 0.0);
    }
  }
}

TEST_CASE("solver agrees with an independently written DP on random instances") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Cmdp m = make_random_cmdp(2 + static_cast<int>(seed % 6), 2 + static_cast<int>(seed % 3),
                                    1 + static_cast<int>(seed % 5), 2, 3, RngSeed{seed, 2});
    const ValueTables vt = solve_all(m);
    const RefTables ref = ref_solve(m);
    for (int t = 0; t <= m.horizon; ++t) {
      for (int s = 0; s < m.n_states; ++s) {
        REQUIRE(std::abs(vt.vc[t][s] - ref.vc[t][s]) < 1e-12);
        REQUIRE(std::abs(vt.vr[t][s] - ref.vr[t][s]) < 1e-12);
        for (int a = 0; a < m.n_actions; ++a) {
          REQUIRE(std::abs(vt.qc[t][s][a] - ref.qc[t][s][a]) < 1e-12);
          REQUIRE(std::abs(vt.qr[t][s][a] - ref.qr[t][s][a]) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("solve_reward_minimal is the min-return induction") {
  const Cmdp m = make_chain3();
  const auto vmin = solve_reward_minimal(m);
  CHECK(vmin[0][start_state(m)] == doctest::Approx(0.2));
  // And another by hand on the line env: only one action, so min == max.
  const Cmdp line = make_line();
  CHECK(solve_reward_minimal(line)[0][0] == doctest::Approx(2.0));
}

TEST_CASE("optimal cost variation: zero for deterministic, spread otherwise") {
  const Cmdp det = make_hazard_gridworld(3, 3, {1}, 2, 0.0, 4);
  const ValueTables vt_det = solve_cost_optimal(det);
  CHECK(optimal_cost_variation(det, vt_det).epsilon == 0.0);

  const Cmdp split = make_split();
  const ValueTables vt = solve_cost_optimal(split);
  const VariationReport rep = optimal_cost_variation(split, vt);
  CHECK(rep.epsilon == doctest::Approx(3.0));
  CHECK(rep.s == 0);
  CHECK(rep.a == 0);
  CHECK(rep.t == 0);
  CHECK(rep.s_hi == 2);
  CHECK(rep.s_lo == 1);
}

TEST_CASE("policy evaluation on the augmented chain") {
  const Cmdp m = make_line();
  const CostAwarePolicy pi = [](int, int, long long) { return 0; };
  const AugmentedValue cost = evaluate_policy_cost(m, pi);
  REQUIRE(cost.horizon == 2);
  CHECK(cost.b_max == 2 * 3);
  // Full episode cost from the start: c(s0)+c(s1)+c(s2) = 6.
  CHECK(cost.v[0][0][0] == doctest::Approx(6.0));
  CHECK(cost.v[1][1][2] == doctest::Approx(4.0));
  CHECK(cost.v[2][2][5] == doctest::Approx(1.0));
  const AugmentedValue rew = evaluate_policy_reward(m, pi);
  CHECK(rew.v[0][0][0] == doctest::Approx(2.0));
  CHECK(rew.v[2][2][5] == 0.0);
}

TEST_CASE("reachable triples follow the budget recursion") {
  const Cmdp m = make_line();
  const CostAwarePolicy pi = [](int, int, long long) { return 0; };
  const auto triples = reachable_triples(m, pi);
  REQUIRE(triples.size() == 3);
  auto has = [&](int s, int t, long long b) {
    for (const auto& x : triples) {
      if (x.s == s && x.t == t && x.b == b) return true;
    }
    return false;
  };
  CHECK(has(0, 0, 0));
  CHECK(has(1, 1, 2));
  CHECK(has(2, 2, 5));
}

TEST_CASE("admissibility on chain3 by hand") {
  const Cmdp m = make_chain3();
  const ValueTables vt = solve_all(m);
  const CostAwarePolicy safe = [](int, int, long long) { return kChain3Safe; };
  const CostAwarePolicy risky = [](int, int, long long) { return kChain3Risky; };

  CHECK(check_admissible(m, safe, 0.0, vt).pass);
  const AdmissibilityReport bad = check_admissible(m, risky, 0.0, vt);
  CHECK(!bad.pass);
  CHECK(bad.s == start_state(m));
  CHECK(bad.t == 0);
  CHECK(bad.b == 0);
  CHECK(bad.q_value == doctest::Approx(1.0));
  CHECK(bad.bound == 0.0);
  const AdmissibilityReport ok = check_admissible(m, risky, 1.0, vt);
  CHECK(ok.pass);
  CHECK(ok.checked == 1);
}

TEST_CASE("theorem bound on deterministic instances has zero slack terms") {
  const Cmdp m = make_chain3();
  const CostAwarePolicy risky = [](int, int, long long) { return kChain3Risky; };
  const BoundReport good = verify_theorem_bound(m, risky, 1.0);
  CHECK(good.applicable);
  CHECK(good.epsilon == 0.0);
  CHECK(good.max_violation <= kBoundTol);
  CHECK(good.checked >= 1);

  const BoundReport inapplicable = verify_theorem_bound(m, risky, 0.0);
  CHECK(!inapplicable.applicable);
  CHECK(!inapplicable.admissibility.pass);
}

TEST_CASE("bound report serializes to json with the env name") {
  const Cmdp m = make_chain3();
  const CostAwarePolicy safe = [](int, int, long long) { return kChain3Safe; };
  const BoundReport rep = verify_theorem_bound(m, safe, 0.0);
  const std::string text = bound_report_to_json(rep, m.name);
  CHECK(text.find("\"env\"") != std::string::npos);
  CHECK(text.find(m.name) != std::string::npos);
  CHECK(text.find("\"max_violation\"") != std::string::npos);
}
