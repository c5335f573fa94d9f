#pragma once

// Evaluation harness: Monte Carlo and exact evaluation of switching policies
// across cost-threshold grids, normalized metrics, safety counting, threshold
// sweeps, and the ablation protocols (head count, shared-vs-separate actors,
// FQE estimator substitution).

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capsrl/caps.hpp"
#include "capsrl/cmdp.hpp"
#include "capsrl/dataset.hpp"
#include "capsrl/oracle.hpp"
#include "capsrl/trainers.hpp"

namespace capsrl {

struct EvalConfig {
  enum class Mode { monte_carlo, exact };
  std::vector<double> thresholds = {10.0, 20.0, 40.0};
  std::vector<std::uint64_t> seeds = {0, 10, 20};
  int episodes_per_seed = 20;
  Mode mode = Mode::monte_carlo;
};

// Empty iff the config is usable: thresholds nonempty and strictly positive;
// in monte_carlo mode at least one seed and episodes_per_seed >= 1.
std::vector<std::string> validate_eval_config(const EvalConfig& cfg);

// normalized_cost = raw_cost / kappa; normalized_reward is min-max scaled by
// the oracle's worst and best achievable expected returns at mu0. Throws
// SchemaError when r_max <= r_min (no reward range to normalize against).
std::pair<double, double> normalize(double raw_reward, double raw_cost, double kappa,
                                    double r_min, double r_max);

// Anything evaluable: a label plus a factory for budget-threshold policies.
// Factories capture their artifact by reference; the artifact must outlive
// the subject.
struct EvalSubject {
  std::string algo;
  int K = 2;
  bool shared_backbone = false;
  std::uint64_t artifact_id = 0;
  std::uint64_t dataset_hash = 0;
  std::function<CostAwarePolicy(double kappa, DecisionSink sink)> make_policy;
};

EvalSubject subject_from(const TrainedArtifacts& artifacts);
EvalSubject subject_from(const ExactArtifacts& artifacts);
// FQE switching variants; fqe_cost == nullptr selects the reward-FQE variant
// (artifact cost critic kept). Table ownership is shared with the subject.
EvalSubject subject_from_fqe_variant(const TrainedArtifacts& artifacts,
                                     std::shared_ptr<std::vector<FqeTable>> fqe_reward,
                                     std::shared_ptr<std::vector<FqeTable>> fqe_cost);

struct ThresholdRow {
  double threshold = 0.0;
  double raw_reward = 0.0;
  double raw_cost = 0.0;
  double norm_reward = 0.0;
  double norm_cost = 0.0;
  bool safe = false;  // norm_cost <= 1 + 1e-9
  double fallback_rate = 0.0;
  std::vector<double> head_freq;  // chosen-head frequencies, sum to 1
  double se_reward = 0.0;         // standard errors over episodes (MC mode)
  double se_cost = 0.0;
  long long episodes = 0;  // 0 in exact mode
};

struct EvalReport {
  std::string env_name;
  std::string algo;
  int K = 2;
  bool shared_backbone = false;
  std::string mode;
  int seed_count = 0;
  int episodes_per_seed = 0;
  std::uint64_t artifact_id = 0;
  std::uint64_t dataset_hash = 0;
  double r_min = 0.0;
  double r_max = 0.0;
  std::vector<ThresholdRow> rows;  // one per threshold, config order
  // Averaged-over-thresholds aggregate (the paper folds threshold triples
  // into single table cells, so both per-threshold and averaged rows are
  // emitted).
  double avg_norm_reward = 0.0;
  double avg_norm_cost = 0.0;
  double avg_fallback_rate = 0.0;
  int n_safe = 0;
  int n_thresholds = 0;
};

// Monte Carlo mode rolls episodes_per_seed episodes per (threshold, seed)
// cell, cells run on up to `workers` threads with per-cell RNG streams.
// Exact mode queries the augmented DP at (t=0, b=0) weighted by mu0, plus a
// forward occupancy pass for decision statistics; no randomness involved.
EvalReport evaluate(const EvalSubject& subject, const Cmdp& env, const EvalConfig& cfg,
                    int workers = 1);
EvalReport evaluate(const TrainedArtifacts& artifacts, const Cmdp& env, const EvalConfig& cfg,
                    int workers = 1);
EvalReport evaluate(const ExactArtifacts& artifacts, const Cmdp& env, const EvalConfig& cfg,
                    int workers = 1);

// CSV: env,algo,K,shared,threshold,seed_count,norm_reward,norm_cost,safe,
// fallback_rate — one row per threshold plus one averaged row (threshold
// column "avg"). JSON carries the full reports.
std::string eval_report_to_csv(const std::vector<EvalReport>& reports);
std::string eval_report_to_json(const std::vector<EvalReport>& reports);

// ---------------------------------------------------------------------------
// Threshold sweeps (Table-2 shape: #safe per method per threshold set)
// ---------------------------------------------------------------------------

// One method arm: subjects[i] is the arm's artifact for cmdps[i].
struct SweepArm {
  std::string method;
  std::vector<EvalSubject> subjects;
};

struct SweepEnvCell {
  std::string env;
  double threshold = 0.0;
  double norm_cost = 0.0;
  bool safe = false;
  bool infeasible = false;  // min achievable expected cost already exceeds kappa
};

struct SweepCell {
  std::string set_label;
  std::string method;
  int n_safe = 0;
  int n_total = 0;  // (env, threshold) pairs in the cell
  std::vector<SweepEnvCell> detail;
};

struct SweepTable {
  std::vector<SweepCell> cells;
};

std::string threshold_set_label(const std::vector<double>& set);  // "10|20|40"

SweepTable sweep_thresholds(const std::vector<SweepArm>& arms, const std::vector<Cmdp>& cmdps,
                            const std::vector<std::vector<double>>& threshold_sets,
                            const EvalConfig& base, int workers = 1);

// CSV: threshold_set,method,n_safe,n_total. JSON adds per-env detail.
std::string sweep_to_csv(const SweepTable& table);
std::string sweep_to_json(const SweepTable& table);

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

enum class AblationKind { heads, sharing, fqe, thresholds };

std::string ablation_kind_name(AblationKind kind);
AblationKind ablation_kind_from_name(const std::string& name);

struct AblationSuite {
  std::vector<Cmdp> envs;
  BehaviorSpec behavior;
  long long dataset_episodes = 300;
  std::uint64_t dataset_seed = 0;
  TrainConfig train;  // base config; arms override K / sharing / estimators
  EvalConfig eval;
  std::vector<std::vector<double>> threshold_sets;  // thresholds kind only
};

struct AblationArm {
  std::string label;
  std::vector<EvalReport> reports;  // one per env
};

struct AblationReport {
  AblationKind kind = AblationKind::heads;
  std::vector<AblationArm> arms;
  // Directional findings; prefixed "pass:" when the ordering matches the
  // expected direction, "observe:" otherwise. Never gating.
  std::vector<std::string> observations;
  std::optional<SweepTable> sweep;  // thresholds kind only
};

// heads: K in {2,4,8}; sharing: {shared, separate}; fqe: {original,
// reward_fqe, reward_cost_fqe}; thresholds: delegates to sweep_thresholds.
AblationReport run_ablation(AblationKind kind, const AblationSuite& suite, int workers = 1);

// CSV: env,metric with one column per arm (thresholds kind: the sweep CSV).
std::string ablation_to_csv(const AblationReport& report);
std::string ablation_to_json(const AblationReport& report);

}  // namespace capsrl
