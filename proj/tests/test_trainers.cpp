#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "capsrl/cmdp.hpp"
#include "capsrl/dataset.hpp"
#include "capsrl/errors.hpp"
#include "capsrl/oracle.hpp"
#include "capsrl/trainers.hpp"

using namespace capsrl;

namespace {

OfflineDataset uniform_data(const Cmdp& m, long long episodes, std::uint64_t seed) {
  BehaviorSpec spec;
  spec.weight_uniform = 1.0;
  const ValueTables vt = solve_all(m);
  return generate_dataset(m, spec, episodes, RngSeed{seed, 0}, vt);
}

EnvDims dims_of(const Cmdp& m) { return EnvDims{m.n_states, m.n_actions, m.horizon}; }

int start_state(const Cmdp& m) {
  for (int s = 0; s < m.n_states; ++s) {
    if (m.mu0[static_cast<std::size_t>(s)] > 0.0) return s;
  }
  return -1;
}

TrainConfig tabular_cfg(int K) {
  TrainConfig cfg;
  cfg.algo = Algo::tabular;
  cfg.K = K;
  cfg.gamma = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("lambda schedule hits the published grid exactly") {
  CHECK(lambda_schedule(2).empty());
  const auto k4 = lambda_schedule(4);
  REQUIRE(k4.size() == 2);
  CHECK(k4[0] == 1.0 / 1.5);
  CHECK(k4[1] == 2.0 / 1.5);
  const auto k8 = lambda_schedule(8);
  REQUIRE(k8.size() == 6);
  for (int k = 1; k <= 6; ++k) {
    CHECK(k8[static_cast<std::size_t>(k - 1)] == k / 3.5);
  }
}

TEST_CASE("config validation rejects out-of-range settings") {
  TrainConfig cfg;
  CHECK(validate_train_config(cfg).empty());
  cfg.K = 1;
  CHECK(!validate_train_config(cfg).empty());
  cfg = TrainConfig{};
  cfg.expectile_tau = 1.0;
  CHECK(!validate_train_config(cfg).empty());
  cfg = TrainConfig{};
  cfg.gamma = 0.0;
  CHECK(!validate_train_config(cfg).empty());
  cfg = TrainConfig{};
  cfg.gamma = 1.0;
  CHECK(validate_train_config(cfg).empty());
  cfg = TrainConfig{};
  cfg.hidden = {};
  CHECK(!validate_train_config(cfg).empty());
  cfg = TrainConfig{};
  cfg.algo = Algo::bc;
  cfg.K = 1;  // BC is exempt from the K >= 2 rule
  CHECK(validate_train_config(cfg).empty());
}

TEST_CASE("tabular trainer reproduces the oracle on fully covered chain3") {
  const Cmdp m = make_chain3();
  const OfflineDataset ds = uniform_data(m, 400, 1);
  const TrainedArtifacts art = train_tabular_caps(ds, dims_of(m), tabular_cfg(2));
  const ValueTables vt = solve_all(m);
  const int s0 = start_state(m);
  for (int a = 0; a < m.n_actions; ++a) {
    CHECK(std::abs(art.q_reward_at(s0, a, 0) - vt.qr[0][s0][a]) < 1e-12);
    CHECK(std::abs(art.q_cost_at(s0, a, 0) - vt.qc[0][s0][a]) < 1e-12);
  }
  // Head 0 chases reward (risky), head K-1 avoids cost (safe).
  CHECK(art.head_action(0, s0, 0) == kChain3Risky);
  CHECK(art.head_action(1, s0, 0) == kChain3Safe);
  CHECK(art.has_critics());
}

TEST_CASE("tabular trainer matches the oracle on a deterministic gridworld") {
  const Cmdp m = make_hazard_gridworld(3, 3, {1}, 2, 0.0, 4);
  const OfflineDataset ds = uniform_data(m, 3000, 2);
  const TrainedArtifacts art = train_tabular_caps(ds, dims_of(m), tabular_cfg(2));
  const ValueTables vt = solve_all(m);
  // Compare on covered (s,a,t) cells only; uncovered cells hold fallbacks.
  std::vector<std::vector<std::vector<bool>>> seen(
      m.horizon, std::vector<std::vector<bool>>(m.n_states, std::vector<bool>(m.n_actions)));
  for (const auto& x : ds.transitions) seen[x.t][x.s][x.a] = true;
  long long covered = 0;
  for (int t = 0; t < m.horizon; ++t) {
    for (int s = 0; s < m.n_states; ++s) {
      for (int a = 0; a < m.n_actions; ++a) {
        if (!seen[t][s][a]) continue;
        ++covered;
        REQUIRE_MESSAGE(std::abs(art.q_reward_at(s, a, t) - vt.qr[t][s][a]) < 1e-12,
                        "qr mismatch at s=" << s << " a=" << a << " t=" << t);
        REQUIRE_MESSAGE(std::abs(art.q_cost_at(s, a, t) - vt.qc[t][s][a]) < 1e-12,
                        "qc mismatch at s=" << s << " a=" << a << " t=" << t);
      }
    }
  }
  CHECK(covered > 50);  // the uniform behavior really does explore
}

TEST_CASE("counter invariants: two critic passes, K extractions") {
  const Cmdp m = make_chain3();
  const OfflineDataset ds = uniform_data(m, 60, 3);
  TrainConfig cfg = tabular_cfg(4);
  const TrainedArtifacts tab = train_caps(ds, dims_of(m), cfg);
  CHECK(tab.critic_passes == 2);
  CHECK(tab.extractions == 4);
  REQUIRE(tab.lambda_values.size() == 2);
  CHECK(tab.lambda_values[0] == 1.0 / 1.5);

  cfg = TrainConfig{};
  cfg.algo = Algo::iql;
  cfg.K = 3;
  cfg.steps = 40;
  cfg.batch_size = 16;
  cfg.hidden = {8};
  const TrainedArtifacts iql = train_caps(ds, dims_of(m), cfg);
  CHECK(iql.critic_passes == 2);
  CHECK(iql.extractions == 3);

  cfg.algo = Algo::sacbc;
  const TrainedArtifacts sac = train_caps(ds, dims_of(m), cfg);
  CHECK(sac.critic_passes == 2);
  CHECK(sac.extractions == 3);

  cfg.algo = Algo::bc;
  cfg.K = 1;
  const TrainedArtifacts bc = train_caps(ds, dims_of(m), cfg);
  CHECK(bc.critic_passes == 0);
  CHECK(bc.extractions == 1);
  CHECK(!bc.has_critics());
  CHECK_THROWS_AS(bc.q_reward_at(0, 0, 0), MissingInputError);
}

TEST_CASE("net trainers emit sane heads and are seed-deterministic") {
  const Cmdp m = make_chain3();
  const OfflineDataset ds = uniform_data(m, 120, 4);
  for (const Algo algo : {Algo::iql, Algo::sacbc}) {
    TrainConfig cfg;
    cfg.algo = algo;
    cfg.K = 2;
    cfg.steps = 60;
    cfg.batch_size = 32;
    cfg.hidden = {8};
    cfg.seed = 9;
    const TrainedArtifacts a = train_caps(ds, dims_of(m), cfg);
    const TrainedArtifacts b = train_caps(ds, dims_of(m), cfg);
    const int s0 = start_state(m);
    for (int k = 0; k < 2; ++k) {
      const int act = a.head_action(k, s0, 0);
      CHECK(act >= 0);
      CHECK(act < m.n_actions);
      CHECK(a.head_action(k, s0, 0) == b.head_action(k, s0, 0));
      const auto pa = a.head_probs(k, s0, 0);
      REQUIRE(pa.size() == 2);
      CHECK(pa == b.head_probs(k, s0, 0));
      double total = 0.0;
      for (const double p : pa) total += p;
      CHECK(total == doctest::Approx(1.0));
    }
    CHECK(a.q_reward_at(s0, 0, 0) == b.q_reward_at(s0, 0, 0));
    cfg.seed = 10;
    const TrainedArtifacts c = train_caps(ds, dims_of(m), cfg);
    CHECK(a.q_reward_at(s0, 0, 0) != c.q_reward_at(s0, 0, 0));
  }
}

TEST_CASE("separate-actor variant trains one net per head") {
  const Cmdp m = make_chain3();
  const OfflineDataset ds = uniform_data(m, 80, 5);
  TrainConfig cfg;
  cfg.algo = Algo::iql;
  cfg.K = 3;
  cfg.shared_backbone = false;
  cfg.steps = 30;
  cfg.batch_size = 16;
  cfg.hidden = {8};
  const TrainedArtifacts art = train_caps(ds, dims_of(m), cfg);
  REQUIRE(art.net.has_value());
  CHECK(!art.net->shared_net.has_value());
  CHECK(art.net->separate_actors.size() == 3);
}

TEST_CASE("artifact round trip through disk is exact for every algo") {
  const Cmdp m = make_hazard_gridworld(3, 3, {1}, 2, 0.1, 3);
  const OfflineDataset ds = uniform_data(m, 150, 6);
  const std::filesystem::path root =
      std::filesystem::temp_directory_path() / "capsrl_test_artifacts";
  for (const Algo algo : {Algo::tabular, Algo::iql, Algo::sacbc, Algo::bc}) {
    TrainConfig cfg;
    cfg.algo = algo;
    cfg.K = algo == Algo::bc ? 1 : 3;
    cfg.steps = 25;
    cfg.batch_size = 16;
    cfg.hidden = {6};
    cfg.gamma = 1.0;
    const TrainedArtifacts art = train_caps(ds, dims_of(m), cfg);
    const std::filesystem::path dir = root / algo_name(algo);
    save_artifacts(art, dir);
    const TrainedArtifacts back = load_artifacts(dir);
    CHECK(back.algo == art.algo);
    CHECK(back.K == art.K);
    CHECK(back.shared_backbone == art.shared_backbone);
    CHECK(back.env_name == art.env_name);
    CHECK(back.dataset_hash == art.dataset_hash);
    CHECK(back.critic_passes == art.critic_passes);
    CHECK(back.extractions == art.extractions);
    CHECK(back.lambda_values == art.lambda_values);
    CHECK(back.config.gamma == art.config.gamma);
    CHECK(back.config.steps == art.config.steps);
    for (int t = 0; t < m.horizon; ++t) {
      for (int s = 0; s < m.n_states; ++s) {
        for (int k = 0; k < art.K; ++k) {
          REQUIRE(back.head_action(k, s, t) == art.head_action(k, s, t));
          REQUIRE(back.head_probs(k, s, t) == art.head_probs(k, s, t));
        }
        if (art.has_critics()) {
          for (int a = 0; a < m.n_actions; ++a) {
            REQUIRE(back.q_reward_at(s, a, t) == art.q_reward_at(s, a, t));
            REQUIRE(back.q_cost_at(s, a, t) == art.q_cost_at(s, a, t));
          }
        }
      }
    }
  }
  std::filesystem::remove_all(root);
}

TEST_CASE("loading a truncated artifact directory reports missing input") {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "capsrl_missing_artifact";
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_artifacts(dir), MissingInputError);
}

TEST_CASE("fqe reproduces chain3 oracle values and is deterministic") {
  const Cmdp m = make_chain3();
  const OfflineDataset ds = uniform_data(m, 400, 7);
  const ValueTables vt = solve_all(m);
  const int s0 = start_state(m);
  TrainConfig cfg = tabular_cfg(2);
  const HeadPolicyFn safe = [](int, int) { return kChain3Safe; };
  const FqeTable cost = fqe(ds, dims_of(m), safe, FqeObjective::cost, cfg);
  const FqeTable reward = fqe(ds, dims_of(m), safe, FqeObjective::reward, cfg);
  for (int a = 0; a < m.n_actions; ++a) {
    CHECK(std::abs(cost.q_at(s0, a, 0) - vt.qc[0][s0][a]) < 1e-9);
    CHECK(std::abs(reward.q_at(s0, a, 0) - vt.qr[0][s0][a]) < 1e-9);
  }
  const FqeTable again = fqe(ds, dims_of(m), safe, FqeObjective::cost, cfg);
  CHECK(again.q == cost.q);
}

TEST_CASE("training on an empty or mismatched dataset fails loudly") {
  const Cmdp m = make_chain3();
  OfflineDataset empty;
  empty.env_name = m.name;
  empty.horizon = m.horizon;
  CHECK_THROWS_AS(train_caps(empty, dims_of(m), tabular_cfg(2)), SchemaError);

  OfflineDataset bad = uniform_data(m, 10, 8);
  bad.transitions[0].s_next = 99;
  CHECK_THROWS_AS(train_caps(bad, dims_of(m), tabular_cfg(2)), SchemaError);

  TrainConfig nonsense = tabular_cfg(2);
  nonsense.K = 0;
  CHECK_THROWS_AS(train_caps(uniform_data(m, 10, 9), dims_of(m), nonsense), SchemaError);
}
