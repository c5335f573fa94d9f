#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "capsrl/approximator.hpp"
#include "capsrl/dataset.hpp"

namespace capsrl {

enum class Algo { iql, sacbc, tabular, bc };

std::string algo_name(Algo algo);
Algo algo_from_name(const std::string& name);

// Environment shape the trainers are allowed to know. Deliberately excludes
// transition/reward/cost tables: training is strictly offline and sees only
// the dataset plus these dimensions.
struct EnvDims {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;
};

// Hyperparameters. Defaults follow the published table: gamma 0.99, batch
// 512, expectile tau 0.7, beta 3, lr 3e-4 (SAC+BC variant: actor 1e-4,
// critic 1e-3 — applied by the CLI, not baked in here). The oracle DP is
// undiscounted, so oracle-comparable learning runs pass gamma = 1.0.
struct TrainConfig {
  Algo algo = Algo::iql;
  int K = 2;
  bool shared_backbone = true;
  int steps = 2000;      // gradient steps; the extraction phase uses the same count
  int batch_size = 512;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double gamma = 0.99;
  double beta = 3.0;          // inverse temperature for exp-advantage weights
  double expectile_tau = 0.7; // reward V expectile; the cost V mirrors it (1 - tau)
  double alpha = 0.05;        // SAC+BC entropy weight
  double bc_weight = 1.0;     // SAC+BC behavior-cloning weight
  double weight_clip = 100.0; // cap on exp(beta * advantage)
  double polyak = 0.01;       // target-network tracking rate
  int fqe_sweeps = 50;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;
};

std::vector<std::string> validate_train_config(const TrainConfig& cfg);

// lambda_k = k / ((K - 1) / 2) for k = 1..K-2; [] for K = 2.
std::vector<double> lambda_schedule(int K);

// Certainty-equivalent payload: dense [t][s][a] Q tables for t = 0..horizon
// (terminal slice is the definitional fill) and per-head deterministic
// policies [k][t][s] for t < horizon. Cells never observed in the dataset
// hold the state value at (s,t) so lookups stay total.
struct TabularPayload {
  std::vector<std::vector<std::vector<double>>> q_reward, q_cost;
  std::vector<std::vector<double>> v_reward, v_cost;
  std::vector<std::vector<std::vector<int>>> policy;  // [k][t][s]
};

// Learned payload. The cost critic is trained on the dataset's per-step cost
// fields, which record the cost of the state being entered; its raw output
// therefore estimates the cost-to-go EXCLUDING the current state's cost.
// q_cost_at adds back chat[s], the per-state cost estimated from transitions
// entering s, so the exposed values match the oracle's Q convention.
struct NetPayload {
  std::optional<MultiHeadPolicyNet> shared_net;  // when shared_backbone
  std::vector<Mlp> separate_actors;              // one single-head net per head otherwise
  Mlp q_reward, q_cost;
  std::optional<Mlp> v_reward, v_cost;  // IQL only
  std::vector<double> chat;             // per-state landed-cost estimate
};

struct TrainedArtifacts {
  Algo algo = Algo::tabular;
  int K = 2;
  bool shared_backbone = true;
  EnvDims dims;
  std::vector<double> lambda_values;
  TrainConfig config;
  std::string env_name;
  std::uint64_t dataset_hash = 0;
  // Reduction-structure instrumentation: CAPS costs two critic trainings
  // (reward, cost) regardless of K, plus K policy extractions.
  int critic_passes = 0;
  int extractions = 0;
  std::optional<TabularPayload> tabular;
  std::optional<NetPayload> net;

  bool has_critics() const;
  // Deterministic candidate of head k at (s,t): argmax of the head's policy,
  // lowest action index on ties. Head order is [pi_r, mids..., pi_c].
  int head_action(int k, int s, int t) const;
  std::vector<double> head_probs(int k, int s, int t) const;
  // Q estimates in the oracle convention (cost includes the current state's
  // cost). Throws MissingInputError when the artifact has no critics (BC).
  double q_reward_at(int s, int a, int t) const;
  double q_cost_at(int s, int a, int t) const;
};

TrainedArtifacts train_iql_caps(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg);
TrainedArtifacts train_sacbc_caps(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg);
TrainedArtifacts train_tabular_caps(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg);
// Dispatch on cfg.algo (including the single-policy BC baseline).
TrainedArtifacts train_caps(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg);
// Behavior-cloning baseline: one head, no critics.
TrainedArtifacts train_bc(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg);

// Fitted Q-evaluation of a fixed deterministic policy on the dataset:
// tabular cell-mean regression over (t,s,a) cells for a fixed sweep budget.
// For the cost objective the fit is over the dataset's landed-cost fields;
// q_at restores the oracle convention by adding chat[s].
enum class FqeObjective { reward, cost };
using HeadPolicyFn = std::function<int(int s, int t)>;

struct FqeTable {
  int horizon = 0, n_states = 0, n_actions = 0;
  bool cost_objective = false;
  std::vector<std::vector<std::vector<double>>> q;     // [t][s][a], t < horizon
  std::vector<std::vector<std::vector<char>>> observed;
  std::vector<double> chat;
  double max_residual = 0.0;  // last sweep's max Bellman residual over observed cells

  double q_at(int s, int a, int t) const;
};

FqeTable fqe(const OfflineDataset& ds, EnvDims dims, const HeadPolicyFn& policy, FqeObjective obj,
             const TrainConfig& cfg);

// Checkpoint directory: manifest.json plus per-component files, all decimal
// text so round trips are byte-exact.
void save_artifacts(const TrainedArtifacts& artifacts, const std::filesystem::path& dir);
TrainedArtifacts load_artifacts(const std::filesystem::path& dir);

}  // namespace capsrl
