#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "capsrl/caps.hpp"
#include "capsrl/cmdp.hpp"
#include "capsrl/dataset.hpp"
#include "capsrl/errors.hpp"
#include "capsrl/eval.hpp"
#include "capsrl/oracle.hpp"
#include "capsrl/trainers.hpp"

using namespace capsrl;

namespace {

EvalConfig exact_cfg(std::vector<double> thresholds) {
  EvalConfig cfg;
  cfg.mode = EvalConfig::Mode::exact;
  cfg.thresholds = std::move(thresholds);
  return cfg;
}

const ThresholdRow& row_at(const EvalReport& rep, double threshold) {
  for (const auto& row : rep.rows) {
    if (row.threshold == threshold) return row;
  }
  throw std::runtime_error("row not found");
}

}  // namespace

TEST_CASE("normalization formulas and guards") {
  const auto [nr, nc] = normalize(0.6, 2.0, 4.0, 0.2, 1.0);
  CHECK(nr == doctest::Approx(0.5));
  CHECK(nc == doctest::Approx(0.5));
  CHECK_THROWS_AS(normalize(0.5, 1.0, 2.0, 1.0, 1.0), SchemaError);
  CHECK_THROWS_AS(normalize(0.5, 1.0, 0.0, 0.0, 1.0), SchemaError);
}

TEST_CASE("eval config validation") {
  EvalConfig cfg;
  CHECK(validate_eval_config(cfg).empty());
  // Defaults are the published protocol.
  CHECK(cfg.thresholds == std::vector<double>{10.0, 20.0, 40.0});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 10, 20});
  CHECK(cfg.episodes_per_seed == 20);
  cfg.thresholds = {};
  CHECK(!validate_eval_config(cfg).empty());
  cfg = EvalConfig{};
  cfg.thresholds = {0.0};
  CHECK(!validate_eval_config(cfg).empty());
  cfg = EvalConfig{};
  cfg.seeds = {};
  CHECK(!validate_eval_config(cfg).empty());
  cfg.mode = EvalConfig::Mode::exact;
  CHECK(validate_eval_config(cfg).empty());  // exact mode ignores seeds
}

TEST_CASE("exact evaluation of chain3 reproduces hand values") {
  const Cmdp m = make_chain3();
  const ValueTables vt = solve_all(m);
  const ExactArtifacts art = make_exact_artifacts(vt, 2);
  const EvalReport rep = evaluate(art, m, exact_cfg({0.5, 1.0}));
  CHECK(rep.env_name == m.name);
  CHECK(rep.mode == "exact");
  CHECK(rep.r_min == doctest::Approx(0.2));
  CHECK(rep.r_max == doctest::Approx(1.0));
  REQUIRE(rep.rows.size() == 2);

  // kappa 0.5: switch plays safe; reward 0.2 -> norm 0, cost 0 -> norm 0.
  const ThresholdRow& tight = row_at(rep, 0.5);
  CHECK(tight.raw_reward == doctest::Approx(0.2));
  CHECK(tight.raw_cost == doctest::Approx(0.0));
  CHECK(tight.norm_reward == doctest::Approx(0.0));
  CHECK(tight.norm_cost == doctest::Approx(0.0));
  CHECK(tight.safe);
  CHECK(tight.fallback_rate == doctest::Approx(0.0));

  // kappa 1: switch plays risky; exactly on budget -> safe at the boundary.
  const ThresholdRow& loose = row_at(rep, 1.0);
  CHECK(loose.raw_reward == doctest::Approx(1.0));
  CHECK(loose.raw_cost == doctest::Approx(1.0));
  CHECK(loose.norm_reward == doctest::Approx(1.0));
  CHECK(loose.norm_cost == doctest::Approx(1.0));
  CHECK(loose.safe);

  // Aggregates average the per-threshold rows.
  CHECK(rep.avg_norm_reward == doctest::Approx(0.5));
  CHECK(rep.avg_norm_cost == doctest::Approx(0.5));
  CHECK(rep.n_safe == 2);
  CHECK(rep.n_thresholds == 2);
}

TEST_CASE("exact head frequencies and fallback rate sum to one") {
  const Cmdp m = make_hazard_gridworld(3, 3, {1}, 2, 0.2, 4);
  const ExactArtifacts art = make_exact_artifacts(solve_all(m), 3);
  const EvalReport rep = evaluate(art, m, exact_cfg({1.0}));
  const ThresholdRow& row = rep.rows.front();
  double total = row.fallback_rate;
  for (const double f : row.head_freq) total += f;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("monte carlo agrees with exact evaluation on a deterministic env") {
  const Cmdp m = make_chain3();
  const ExactArtifacts art = make_exact_artifacts(solve_all(m), 2);
  EvalConfig mc;
  mc.thresholds = {0.5, 1.0};
  mc.seeds = {0, 1};
  mc.episodes_per_seed = 5;
  const EvalReport rep = evaluate(art, m, mc);
  CHECK(rep.mode == "monte_carlo");
  // Deterministic env: zero variance, exact means, zero standard error.
  const ThresholdRow& tight = row_at(rep, 0.5);
  CHECK(tight.raw_reward == doctest::Approx(0.2));
  CHECK(tight.raw_cost == doctest::Approx(0.0));
  CHECK(tight.se_reward == doctest::Approx(0.0));
  CHECK(tight.episodes == 10);
  const ThresholdRow& loose = row_at(rep, 1.0);
  CHECK(loose.raw_reward == doctest::Approx(1.0));
  CHECK(loose.raw_cost == doctest::Approx(1.0));
}

TEST_CASE("monte carlo is deterministic given the config and worker-count independent") {
  const Cmdp m = make_hazard_gridworld(3, 3, {1, 5}, 8, 0.15, 5);
  const ExactArtifacts art = make_exact_artifacts(solve_all(m), 2);
  EvalConfig mc;
  mc.thresholds = {1.0, 2.0};
  mc.seeds = {3, 4};
  mc.episodes_per_seed = 8;
  const EvalReport a = evaluate(art, m, mc, 1);
  const EvalReport b = evaluate(art, m, mc, 4);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].raw_reward == b.rows[i].raw_reward);
    CHECK(a.rows[i].raw_cost == b.rows[i].raw_cost);
    CHECK(a.rows[i].se_reward == b.rows[i].se_reward);
    CHECK(a.rows[i].fallback_rate == b.rows[i].fallback_rate);
  }
  CHECK(eval_report_to_csv({a}) == eval_report_to_csv({b}));
  CHECK(eval_report_to_json({a}) == eval_report_to_json({b}));
}

TEST_CASE("csv shape: one row per threshold plus the averaged row") {
  const Cmdp m = make_chain3();
  const ExactArtifacts art = make_exact_artifacts(solve_all(m), 2);
  const EvalReport rep = evaluate(art, m, exact_cfg({0.5, 1.0}));
  const std::string csv = eval_report_to_csv({rep});
  CHECK(csv.rfind("env,algo,K,shared,threshold,seed_count,norm_reward,norm_cost,safe,"
                  "fallback_rate",
                  0) == 0);
  int lines = 0;
  for (const char c : csv) lines += c == '\n';
  CHECK(lines == 1 + 2 + 1);  // header + two thresholds + avg
  CHECK(csv.find(",avg,") != std::string::npos);
}

TEST_CASE("trained artifacts evaluate end to end") {
  const Cmdp m = make_chain3();
  BehaviorSpec spec;
  spec.weight_uniform = 1.0;
  const OfflineDataset ds = generate_dataset(m, spec, 300, RngSeed{7, 0}, solve_all(m));
  TrainConfig cfg;
  cfg.algo = Algo::tabular;
  cfg.K = 2;
  cfg.gamma = 1.0;
  const TrainedArtifacts art = train_caps(ds, EnvDims{m.n_states, m.n_actions, m.horizon}, cfg);
  const EvalReport rep = evaluate(art, m, exact_cfg({0.5, 1.0}));
  CHECK(rep.algo == "tabular");
  CHECK(rep.dataset_hash == art.dataset_hash);
  CHECK(row_at(rep, 0.5).raw_cost == doctest::Approx(0.0));
  CHECK(row_at(rep, 1.0).raw_reward == doctest::Approx(1.0));
}

TEST_CASE("sweep counts safe cells and flags infeasible thresholds") {
  const Cmdp a = make_chain3();
  Cmdp b = make_chain3();
  b.name = "chain3-shifted";
  for (auto& c : b.cost) c = std::min(c + 1, 2);  // min expected cost now 1
  b.c_max = 2;
  require_valid(b);

  const ExactArtifacts art_a = make_exact_artifacts(solve_all(a), 2);
  const ExactArtifacts art_b = make_exact_artifacts(solve_all(b), 2);
  SweepArm arm;
  arm.method = "exact";
  arm.subjects = {subject_from(art_a), subject_from(art_b)};

  EvalConfig base = exact_cfg({1.0});
  const SweepTable table =
      sweep_thresholds({arm}, {a, b}, {{0.5}, {1.0, 2.0}}, base, 1);
  REQUIRE(table.cells.size() == 2);
  // Set {0.5}: chain3 is safe (plays safe head, cost 0 <= 0.5); the shifted
  // env cannot get below cost 1, so 0.5 is infeasible and unsafe.
  CHECK(table.cells[0].set_label == "0.5");
  CHECK(table.cells[0].n_safe == 1);
  CHECK(table.cells[0].n_total == 2);
  bool saw_infeasible = false;
  for (const auto& cell : table.cells[0].detail) {
    if (cell.env == "chain3-shifted") {
      CHECK(cell.infeasible);
      CHECK(!cell.safe);
      saw_infeasible = true;
    }
  }
  CHECK(saw_infeasible);
  // Set {1.0, 2.0}: the shifted env's cheapest episode costs 2 (start state 1
  // plus landing state 1), so kappa 1 stays unsafe; the other three pairs hold.
  CHECK(table.cells[1].n_safe == 3);
  CHECK(table.cells[1].n_total == 4);

  const std::string csv = sweep_to_csv(table);
  CHECK(csv.rfind("threshold_set,method,n_safe,n_total", 0) == 0);
  CHECK(csv.find("1|2,exact,3,4") != std::string::npos);
  CHECK(sweep_to_json(table).find("\"infeasible\"") != std::string::npos);
}

TEST_CASE("ablation kinds parse and the heads protocol emits labeled arms") {
  CHECK(ablation_kind_name(AblationKind::heads) == "heads");
  CHECK(ablation_kind_from_name("fqe") == AblationKind::fqe);
  CHECK_THROWS_AS(ablation_kind_from_name("nope"), SchemaError);

  AblationSuite suite;
  suite.envs = {make_chain3()};
  suite.behavior.weight_uniform = 1.0;
  suite.dataset_episodes = 200;
  suite.train.algo = Algo::tabular;
  suite.train.gamma = 1.0;
  suite.eval = exact_cfg({0.5, 1.0});

  const AblationReport rep = run_ablation(AblationKind::heads, suite, 1);
  REQUIRE(rep.arms.size() == 3);
  CHECK(rep.arms[0].label == "k2");
  CHECK(rep.arms[1].label == "k4");
  CHECK(rep.arms[2].label == "k8");
  for (const auto& arm : rep.arms) {
    REQUIRE(arm.reports.size() == 1);
    // On chain3 every K behaves identically: heads collapse to safe/risky.
    CHECK(arm.reports[0].avg_norm_reward == doctest::Approx(0.5));
  }
  for (const auto& obs : rep.observations) {
    CHECK((obs.rfind("pass:", 0) == 0 || obs.rfind("observe:", 0) == 0));
  }

  const std::string csv = ablation_to_csv(rep);
  CHECK(csv.rfind("env,metric,k2,k4,k8", 0) == 0);
  CHECK(csv.find("norm_reward") != std::string::npos);
  CHECK(csv.find("fallback_rate") != std::string::npos);
  const std::string json = ablation_to_json(rep);
  CHECK(json.find("\"kind\"") != std::string::npos);
  CHECK(json.find("\"observations\"") != std::string::npos);
}

TEST_CASE("fqe ablation swaps estimators per arm") {
  AblationSuite suite;
  suite.envs = {make_chain3()};
  suite.behavior.weight_uniform = 1.0;
  suite.dataset_episodes = 250;
  suite.train.algo = Algo::tabular;
  suite.train.gamma = 1.0;
  suite.eval = exact_cfg({0.5, 1.0});
  const AblationReport rep = run_ablation(AblationKind::fqe, suite, 1);
  REQUIRE(rep.arms.size() == 3);
  CHECK(rep.arms[0].label == "original");
  CHECK(rep.arms[1].label == "reward_fqe");
  CHECK(rep.arms[2].label == "reward_cost_fqe");
  // chain3's FQE is exact, so all three arms coincide.
  for (const auto& arm : rep.arms) {
    CHECK(arm.reports[0].avg_norm_cost == doctest::Approx(0.5));
  }
}

TEST_CASE("threshold ablation reuses the sweep table") {
  AblationSuite suite;
  suite.envs = {make_chain3()};
  suite.behavior.weight_uniform = 1.0;
  suite.dataset_episodes = 150;
  suite.train.algo = Algo::tabular;
  suite.train.gamma = 1.0;
  suite.eval = exact_cfg({1.0});
  suite.threshold_sets = {{0.5}, {1.0}};
  const AblationReport rep = run_ablation(AblationKind::thresholds, suite, 1);
  REQUIRE(rep.sweep.has_value());
  CHECK(rep.sweep->cells.size() == 2);
  const std::string csv = ablation_to_csv(rep);
  CHECK(csv.rfind("threshold_set,method,n_safe,n_total", 0) == 0);
}

TEST_CASE("invalid eval configs are rejected at the door") {
  const Cmdp m = make_chain3();
  const ExactArtifacts art = make_exact_artifacts(solve_all(m), 2);
  EvalConfig bad;
  bad.thresholds = {};
  CHECK_THROWS_AS(evaluate(art, m, bad), SchemaError);
}
