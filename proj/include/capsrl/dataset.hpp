#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "capsrl/cmdp.hpp"
#include "capsrl/oracle.hpp"
#include "capsrl/rng.hpp"

namespace capsrl {

// Mixture of behavior policies used to generate offline data: per episode one
// component is drawn by weight, then actions are greedy for that component's
// oracle table with epsilon-uniform exploration. Spans the reward-cost
// trade-off so both extreme policies are learnable from a single dataset.
struct BehaviorSpec {
  double weight_reward_greedy = 0.0;
  double weight_cost_greedy = 0.0;
  double weight_uniform = 1.0;
  double epsilon_explore = 0.0;
};

std::vector<std::string> validate_behavior(const BehaviorSpec& spec);

struct Transition {
  int t = 0;
  int s = 0;
  int a = 0;
  double r = 0.0;
  int c = 0;  // cost of the state entered, c(s_{t+1})
  int s_next = 0;
  bool done = false;  // true iff t == horizon - 1
};

struct DatasetStats {
  double return_min = 0.0;
  double return_max = 0.0;
  double return_mean = 0.0;
  std::map<long long, long long> cost_histogram;  // episode total cost -> count
  double coverage = 0.0;  // |distinct (s,a,t)| / (n_states * n_actions * horizon)
};

struct OfflineDataset {
  std::vector<Transition> transitions;  // n_episodes contiguous episodes
  std::string env_name;
  BehaviorSpec behavior;
  long long n_episodes = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  DatasetStats stats;  // recomputable from transitions
};

// vt must have both objectives solved (supplies the greedy components).
OfflineDataset generate_dataset(const Cmdp& cmdp, const BehaviorSpec& spec, long long n_episodes,
                                RngSeed seed, const ValueTables& vt);

// File format: line 1 is a JSON header {behavior, env_name, horizon,
// n_episodes, seed}; every following line is CSV `t,s,a,r,c,s_next,done` with
// r in 17-significant-digit decimal and done in {0,1}. Bit-exact round trip.
void save_dataset(const OfflineDataset& ds, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_text(const OfflineDataset& ds);
OfflineDataset dataset_from_text(const std::string& text);

DatasetStats dataset_stats(const OfflineDataset& ds, int n_states, int n_actions);

// Provenance hash of the serialized dataset bytes.
std::uint64_t dataset_hash(const OfflineDataset& ds);

}  // namespace capsrl
