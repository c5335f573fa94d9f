// Command-line front end: reproducible, config-file-driven runs of the full
// pipeline (env-gen -> dataset-gen -> train -> eval / sweep / ablate) plus
// exact verification of the safety bound (verify).
//
// Exit codes: 0 success; 1 usage error or a verification violation; 2 config
// schema violation; 3 missing input file; 4 internal invariant breach.
// CAPS_LOG=off|error|warn|info|debug controls stderr logging.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "capsrl/caps.hpp"
#include "capsrl/cmdp.hpp"
#include "capsrl/dataset.hpp"
#include "capsrl/errors.hpp"
#include "capsrl/eval.hpp"
#include "capsrl/io.hpp"
#include "capsrl/log.hpp"
#include "capsrl/oracle.hpp"
#include "capsrl/rng.hpp"
#include "capsrl/trainers.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 1;
};

json load_config(const std::string& path) {
  const std::string text = capsrl::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw capsrl::SchemaError("config " + path + ": not valid JSON: " + std::string(e.what()));
  }
}

void reject_unknown(const json& j, const std::string& path,
                    const std::vector<std::string>& allowed) {
  if (!j.is_object()) {
    throw capsrl::SchemaError(path + ": expected an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw capsrl::SchemaError(path + "." + it.key() + ": unknown key");
    }
  }
}

template <typename T>
T get_field(const json& j, const std::string& path, const char* key,
            std::optional<T> fallback = std::nullopt) {
  const auto it = j.find(key);
  if (it == j.end()) {
    if (fallback.has_value()) {
      return *fallback;
    }
    throw capsrl::SchemaError(path + "." + key + ": required key missing");
  }
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw capsrl::SchemaError(path + "." + key + ": wrong type");
  }
}

const json& get_section(const json& j, const std::string& path, const char* key,
                        const json& fallback) {
  const auto it = j.find(key);
  if (it == j.end()) {
    return fallback;
  }
  if (!it->is_object()) {
    throw capsrl::SchemaError(path + "." + key + ": expected an object");
  }
  return *it;
}

capsrl::BehaviorSpec parse_behavior(const json& j, const std::string& path) {
  reject_unknown(j, path,
                 {"weight_reward_greedy", "weight_cost_greedy", "weight_uniform",
                  "epsilon_explore"});
  capsrl::BehaviorSpec spec;
  spec.weight_reward_greedy =
      get_field<double>(j, path, "weight_reward_greedy", spec.weight_reward_greedy);
  spec.weight_cost_greedy =
      get_field<double>(j, path, "weight_cost_greedy", spec.weight_cost_greedy);
  spec.weight_uniform = get_field<double>(j, path, "weight_uniform", spec.weight_uniform);
  spec.epsilon_explore = get_field<double>(j, path, "epsilon_explore", spec.epsilon_explore);
  const auto problems = capsrl::validate_behavior(spec);
  if (!problems.empty()) {
    std::string msg = path + ": invalid behavior spec:";
    for (const auto& p : problems) {
      msg += " " + p + ";";
    }
    throw capsrl::SchemaError(msg);
  }
  return spec;
}

capsrl::TrainConfig parse_train(const json& j, const std::string& path, const CliArgs& args) {
  reject_unknown(j, path, {"algo", "K", "shared_backbone", "steps", "batch_size", "lr_actor",
                           "lr_critic", "gamma", "beta", "expectile_tau", "alpha", "bc_weight",
                           "weight_clip", "polyak", "fqe_sweeps", "hidden", "seed"});
  capsrl::TrainConfig cfg;
  cfg.algo = capsrl::algo_from_name(get_field<std::string>(j, path, "algo", std::string("iql")));
  cfg.K = get_field<int>(j, path, "K", cfg.K);
  cfg.shared_backbone = get_field<bool>(j, path, "shared_backbone", cfg.shared_backbone);
  cfg.steps = get_field<int>(j, path, "steps", cfg.steps);
  cfg.batch_size = get_field<int>(j, path, "batch_size", cfg.batch_size);
  // Per-algo learning-rate defaults apply only when the keys are absent
  // (SAC+BC uses a slower actor and faster critic).
  const double default_lr_actor = cfg.algo == capsrl::Algo::sacbc ? 1e-4 : 3e-4;
  const double default_lr_critic = cfg.algo == capsrl::Algo::sacbc ? 1e-3 : 3e-4;
  cfg.lr_actor = get_field<double>(j, path, "lr_actor", default_lr_actor);
  cfg.lr_critic = get_field<double>(j, path, "lr_critic", default_lr_critic);
  cfg.gamma = get_field<double>(j, path, "gamma", cfg.gamma);
  cfg.beta = get_field<double>(j, path, "beta", cfg.beta);
  cfg.expectile_tau = get_field<double>(j, path, "expectile_tau", cfg.expectile_tau);
  cfg.alpha = get_field<double>(j, path, "alpha", cfg.alpha);
  cfg.bc_weight = get_field<double>(j, path, "bc_weight", cfg.bc_weight);
  cfg.weight_clip = get_field<double>(j, path, "weight_clip", cfg.weight_clip);
  cfg.polyak = get_field<double>(j, path, "polyak", cfg.polyak);
  cfg.fqe_sweeps = get_field<int>(j, path, "fqe_sweeps", cfg.fqe_sweeps);
  cfg.hidden = get_field<std::vector<int>>(j, path, "hidden", cfg.hidden);
  cfg.seed = get_field<std::uint64_t>(j, path, "seed", cfg.seed);
  if (args.seed_set) {
    cfg.seed = args.seed;
  }
  const auto problems = capsrl::validate_train_config(cfg);
  if (!problems.empty()) {
    std::string msg = path + ": invalid train config:";
    for (const auto& p : problems) {
      msg += " " + p + ";";
    }
    throw capsrl::SchemaError(msg);
  }
  return cfg;
}

capsrl::EvalConfig parse_eval(const json& j, const std::string& path) {
  reject_unknown(j, path, {"thresholds", "seeds", "episodes_per_seed", "mode"});
  capsrl::EvalConfig cfg;
  cfg.thresholds = get_field<std::vector<double>>(j, path, "thresholds", cfg.thresholds);
  cfg.seeds = get_field<std::vector<std::uint64_t>>(j, path, "seeds", cfg.seeds);
  cfg.episodes_per_seed = get_field<int>(j, path, "episodes_per_seed", cfg.episodes_per_seed);
  const std::string mode =
      get_field<std::string>(j, path, "mode", std::string("monte_carlo"));
  if (mode == "monte_carlo") {
    cfg.mode = capsrl::EvalConfig::Mode::monte_carlo;
  } else if (mode == "exact") {
    cfg.mode = capsrl::EvalConfig::Mode::exact;
  } else {
    throw capsrl::SchemaError(path + ".mode: expected monte_carlo|exact");
  }
  const auto problems = capsrl::validate_eval_config(cfg);
  if (!problems.empty()) {
    std::string msg = path + ": invalid eval config:";
    for (const auto& p : problems) {
      msg += " " + p + ";";
    }
    throw capsrl::SchemaError(msg);
  }
  return cfg;
}

std::vector<capsrl::Cmdp> load_envs(const json& j, const std::string& path) {
  const auto paths = get_field<std::vector<std::string>>(j, path, "envs");
  if (paths.empty()) {
    throw capsrl::SchemaError(path + ".envs: must list at least one env file");
  }
  std::vector<capsrl::Cmdp> envs;
  envs.reserve(paths.size());
  for (const auto& p : paths) {
    envs.push_back(capsrl::load_cmdp(p));
  }
  return envs;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_env_gen(const json& cfg, const fs::path& out, const CliArgs& args) {
  reject_unknown(cfg, "config",
                 {"kind", "name", "width", "height", "hazards", "goal", "slip_prob", "horizon",
                  "n_states", "n_actions", "branching", "cost_max", "seed"});
  const std::string kind = get_field<std::string>(cfg, "config", "kind");
  capsrl::Cmdp env;
  if (kind == "chain3") {
    env = capsrl::make_chain3();
  } else if (kind == "gridworld") {
    env = capsrl::make_hazard_gridworld(
        get_field<int>(cfg, "config", "width", 3), get_field<int>(cfg, "config", "height", 3),
        get_field<std::vector<int>>(cfg, "config", "hazards"),
        get_field<int>(cfg, "config", "goal"), get_field<double>(cfg, "config", "slip_prob", 0.0),
        get_field<int>(cfg, "config", "horizon"));
  } else if (kind == "random") {
    std::uint64_t seed = get_field<std::uint64_t>(cfg, "config", "seed", std::uint64_t{0});
    if (args.seed_set) {
      seed = args.seed;
    }
    env = capsrl::make_random_cmdp(
        get_field<int>(cfg, "config", "n_states"), get_field<int>(cfg, "config", "n_actions"),
        get_field<int>(cfg, "config", "horizon"), get_field<int>(cfg, "config", "branching", 2),
        get_field<int>(cfg, "config", "cost_max", 1), capsrl::RngSeed{seed, 0});
  } else {
    throw capsrl::SchemaError("config.kind: expected chain3|gridworld|random");
  }
  if (cfg.contains("name")) {
    env.name = get_field<std::string>(cfg, "config", "name");
  }
  capsrl::require_valid(env);
  const fs::path path = out / "env.json";
  capsrl::save_cmdp(env, path);
  std::cout << "env-gen: wrote " << path.string() << " (name=" << env.name
            << " states=" << env.n_states << " actions=" << env.n_actions
            << " horizon=" << env.horizon << ")\n";
  return 0;
}

int cmd_dataset_gen(const json& cfg, const fs::path& out, const CliArgs& args) {
  reject_unknown(cfg, "config", {"env", "behavior", "episodes", "seed"});
  const capsrl::Cmdp env = capsrl::load_cmdp(get_field<std::string>(cfg, "config", "env"));
  const json empty = json::object();
  const capsrl::BehaviorSpec behavior =
      parse_behavior(get_section(cfg, "config", "behavior", empty), "config.behavior");
  const long long episodes = get_field<long long>(cfg, "config", "episodes");
  if (episodes < 1) {
    throw capsrl::SchemaError("config.episodes: must be >= 1");
  }
  std::uint64_t seed = get_field<std::uint64_t>(cfg, "config", "seed", std::uint64_t{0});
  if (args.seed_set) {
    seed = args.seed;
  }
  const capsrl::ValueTables vt = capsrl::solve_all(env);
  const capsrl::OfflineDataset ds =
      capsrl::generate_dataset(env, behavior, episodes, capsrl::RngSeed{seed, 0}, vt);
  const fs::path path = out / "dataset.txt";
  capsrl::save_dataset(ds, path);
  std::cout << "dataset-gen: wrote " << path.string() << " (episodes=" << ds.n_episodes
            << " transitions=" << ds.transitions.size()
            << " coverage=" << capsrl::format_real(ds.stats.coverage)
            << " hash=" << capsrl::hex64(capsrl::dataset_hash(ds)) << ")\n";
  return 0;
}

int cmd_train(const json& cfg, const fs::path& out, const CliArgs& args) {
  reject_unknown(cfg, "config", {"env", "dataset", "train"});
  const capsrl::Cmdp env = capsrl::load_cmdp(get_field<std::string>(cfg, "config", "env"));
  const capsrl::OfflineDataset ds =
      capsrl::load_dataset(get_field<std::string>(cfg, "config", "dataset"));
  if (ds.env_name != env.name) {
    throw capsrl::SchemaError("config.dataset: dataset was generated on env '" + ds.env_name +
                              "' but config.env names '" + env.name + "'");
  }
  const json empty = json::object();
  const capsrl::TrainConfig tcfg =
      parse_train(get_section(cfg, "config", "train", empty), "config.train", args);
  const capsrl::EnvDims dims{env.n_states, env.n_actions, env.horizon};
  const capsrl::TrainedArtifacts art = capsrl::train_caps(ds, dims, tcfg);
  const fs::path dir = out / "artifact";
  capsrl::save_artifacts(art, dir);
  std::cout << "train: wrote " << dir.string() << " (algo=" << capsrl::algo_name(art.algo)
            << " K=" << art.K << " shared=" << (art.shared_backbone ? 1 : 0)
            << " steps=" << tcfg.steps << " critic_passes=" << art.critic_passes
            << " extractions=" << art.extractions << ")\n";
  return 0;
}

int cmd_eval(const json& cfg, const fs::path& out, const CliArgs& args) {
  reject_unknown(cfg, "config", {"env", "artifact", "eval", "variant", "dataset", "K"});
  const capsrl::Cmdp env = capsrl::load_cmdp(get_field<std::string>(cfg, "config", "env"));
  const std::string artifact_ref = get_field<std::string>(cfg, "config", "artifact");
  const std::string variant =
      get_field<std::string>(cfg, "config", "variant", std::string("original"));
  if (variant != "original" && variant != "reward_fqe" && variant != "reward_cost_fqe") {
    throw capsrl::SchemaError("config.variant: expected original|reward_fqe|reward_cost_fqe");
  }
  const json empty = json::object();
  const capsrl::EvalConfig ecfg =
      parse_eval(get_section(cfg, "config", "eval", empty), "config.eval");

  std::optional<capsrl::TrainedArtifacts> trained;
  std::optional<capsrl::ExactArtifacts> exact;
  capsrl::EvalSubject subject;
  if (artifact_ref == "exact") {
    if (variant != "original") {
      throw capsrl::SchemaError("config.variant: FQE variants need a trained artifact");
    }
    const int K = get_field<int>(cfg, "config", "K", 2);
    exact = capsrl::make_exact_artifacts(capsrl::solve_all(env), K);
    subject = capsrl::subject_from(*exact);
  } else {
    trained = capsrl::load_artifacts(artifact_ref);
    if (trained->env_name != env.name) {
      throw capsrl::SchemaError("config.artifact: artifact was trained on env '" +
                                trained->env_name + "' but config.env names '" + env.name + "'");
    }
    if (variant == "original") {
      subject = capsrl::subject_from(*trained);
    } else {
      if (!cfg.contains("dataset")) {
        throw capsrl::SchemaError("config.dataset: required for FQE variants");
      }
      const capsrl::OfflineDataset ds =
          capsrl::load_dataset(get_field<std::string>(cfg, "config", "dataset"));
      const capsrl::EnvDims dims{env.n_states, env.n_actions, env.horizon};
      auto fqe_r = std::make_shared<std::vector<capsrl::FqeTable>>();
      auto fqe_c = std::make_shared<std::vector<capsrl::FqeTable>>();
      const capsrl::TrainedArtifacts& art = *trained;
      for (int k = 0; k < art.K; ++k) {
        const capsrl::HeadPolicyFn head = [&art, k](int s, int t) {
          return art.head_action(k, s, t);
        };
        fqe_r->push_back(
            capsrl::fqe(ds, dims, head, capsrl::FqeObjective::reward, art.config));
        if (variant == "reward_cost_fqe") {
          fqe_c->push_back(
              capsrl::fqe(ds, dims, head, capsrl::FqeObjective::cost, art.config));
        }
      }
      subject = capsrl::subject_from_fqe_variant(
          art, fqe_r, variant == "reward_cost_fqe" ? fqe_c : nullptr);
    }
  }

  const capsrl::EvalReport report = capsrl::evaluate(subject, env, ecfg, args.workers);
  const std::vector<capsrl::EvalReport> reports = {report};
  capsrl::write_file_atomic(out / "eval.csv", capsrl::eval_report_to_csv(reports));
  capsrl::write_file_atomic(out / "eval.json", capsrl::eval_report_to_json(reports) + "\n");
  std::cout << "eval: wrote " << (out / "eval.csv").string() << " (env=" << env.name
            << " algo=" << report.algo << " mode=" << report.mode << " safe=" << report.n_safe
            << "/" << report.n_thresholds << ")\n";
  return 0;
}

int cmd_sweep(const json& cfg, const fs::path& out, const CliArgs& args) {
  reject_unknown(cfg, "config", {"envs", "methods", "threshold_sets", "eval"});
  const std::vector<capsrl::Cmdp> envs = load_envs(cfg, "config");
  const auto sets =
      get_field<std::vector<std::vector<double>>>(cfg, "config", "threshold_sets");
  const json empty = json::object();
  const capsrl::EvalConfig base =
      parse_eval(get_section(cfg, "config", "eval", empty), "config.eval");

  const auto it = cfg.find("methods");
  if (it == cfg.end() || !it->is_array() || it->empty()) {
    throw capsrl::SchemaError("config.methods: must list at least one method");
  }
  std::deque<capsrl::ExactArtifacts> exact_store;
  std::deque<capsrl::TrainedArtifacts> trained_store;
  std::vector<capsrl::SweepArm> arms;
  for (std::size_t m = 0; m < it->size(); ++m) {
    const json& mj = (*it)[m];
    const std::string path = "config.methods[" + std::to_string(m) + "]";
    reject_unknown(mj, path, {"method", "K", "label", "artifacts"});
    const std::string method = get_field<std::string>(mj, path, "method");
    capsrl::SweepArm arm;
    if (method == "exact") {
      const int K = get_field<int>(mj, path, "K", 2);
      arm.method = get_field<std::string>(mj, path, "label", std::string("exact"));
      for (const capsrl::Cmdp& env : envs) {
        exact_store.push_back(capsrl::make_exact_artifacts(capsrl::solve_all(env), K));
        arm.subjects.push_back(capsrl::subject_from(exact_store.back()));
      }
    } else if (method == "artifacts") {
      const auto dirs = get_field<std::vector<std::string>>(mj, path, "artifacts");
      if (dirs.size() != envs.size()) {
        throw capsrl::SchemaError(path + ".artifacts: need one artifact dir per env");
      }
      for (std::size_t i = 0; i < dirs.size(); ++i) {
        trained_store.push_back(capsrl::load_artifacts(dirs[i]));
        if (trained_store.back().env_name != envs[i].name) {
          throw capsrl::SchemaError(path + ".artifacts[" + std::to_string(i) +
                                    "]: artifact env '" + trained_store.back().env_name +
                                    "' does not match '" + envs[i].name + "'");
        }
        arm.subjects.push_back(capsrl::subject_from(trained_store.back()));
      }
      arm.method = get_field<std::string>(
          mj, path, "label", capsrl::algo_name(trained_store.back().algo));
    } else {
      throw capsrl::SchemaError(path + ".method: expected exact|artifacts");
    }
    arms.push_back(std::move(arm));
  }

  const capsrl::SweepTable table =
      capsrl::sweep_thresholds(arms, envs, sets, base, args.workers);
  capsrl::write_file_atomic(out / "sweep.csv", capsrl::sweep_to_csv(table));
  capsrl::write_file_atomic(out / "sweep.json", capsrl::sweep_to_json(table) + "\n");
  std::cout << "sweep: wrote " << (out / "sweep.csv").string() << " (envs=" << envs.size()
            << " methods=" << arms.size() << " sets=" << sets.size() << ")\n";
  return 0;
}

int cmd_ablate(const json& cfg, const fs::path& out, const CliArgs& args) {
  reject_unknown(cfg, "config",
                 {"kind", "envs", "behavior", "dataset_episodes", "dataset_seed", "train",
                  "eval", "threshold_sets"});
  const capsrl::AblationKind kind =
      capsrl::ablation_kind_from_name(get_field<std::string>(cfg, "config", "kind"));
  capsrl::AblationSuite suite;
  suite.envs = load_envs(cfg, "config");
  const json empty = json::object();
  suite.behavior = parse_behavior(get_section(cfg, "config", "behavior", empty),
                                  "config.behavior");
  suite.dataset_episodes =
      get_field<long long>(cfg, "config", "dataset_episodes", suite.dataset_episodes);
  if (suite.dataset_episodes < 1) {
    throw capsrl::SchemaError("config.dataset_episodes: must be >= 1");
  }
  suite.dataset_seed =
      get_field<std::uint64_t>(cfg, "config", "dataset_seed", suite.dataset_seed);
  if (args.seed_set) {
    suite.dataset_seed = args.seed;
  }
  suite.train = parse_train(get_section(cfg, "config", "train", empty), "config.train", args);
  suite.eval = parse_eval(get_section(cfg, "config", "eval", empty), "config.eval");
  suite.threshold_sets = get_field<std::vector<std::vector<double>>>(
      cfg, "config", "threshold_sets", std::vector<std::vector<double>>{});

  const capsrl::AblationReport report = capsrl::run_ablation(kind, suite, args.workers);
  const std::string kind_name = capsrl::ablation_kind_name(kind);
  const fs::path csv_path = out / ("ablation_" + kind_name + ".csv");
  capsrl::write_file_atomic(csv_path, capsrl::ablation_to_csv(report));
  capsrl::write_file_atomic(out / ("ablation_" + kind_name + ".json"),
                            capsrl::ablation_to_json(report) + "\n");
  std::cout << "ablate: wrote " << csv_path.string() << " (kind=" << kind_name
            << " arms=" << report.arms.size() << " observations=" << report.observations.size()
            << ")\n";
  return 0;
}

int cmd_verify(const json& cfg, const fs::path& out, const CliArgs& args) {
  reject_unknown(cfg, "config", {"envs", "fuzz", "K", "kappa_grid"});
  const int K = get_field<int>(cfg, "config", "K", 2);
  if (K < 2) {
    throw capsrl::SchemaError("config.K: must be >= 2");
  }
  const bool has_envs = cfg.contains("envs");
  const bool has_fuzz = cfg.contains("fuzz");
  if (has_envs == has_fuzz) {
    throw capsrl::SchemaError("config: provide exactly one of envs or fuzz");
  }

  std::vector<capsrl::Cmdp> envs;
  if (has_envs) {
    envs = load_envs(cfg, "config");
  } else {
    const json& fj = cfg.at("fuzz");
    reject_unknown(fj, "config.fuzz",
                   {"count", "max_states", "max_actions", "max_horizon", "max_cost",
                    "max_branching", "seed"});
    const int count = get_field<int>(fj, "config.fuzz", "count", 200);
    const int max_states = get_field<int>(fj, "config.fuzz", "max_states", 8);
    const int max_actions = get_field<int>(fj, "config.fuzz", "max_actions", 4);
    const int max_horizon = get_field<int>(fj, "config.fuzz", "max_horizon", 6);
    const int max_cost = get_field<int>(fj, "config.fuzz", "max_cost", 3);
    const int max_branching = get_field<int>(fj, "config.fuzz", "max_branching", 3);
    std::uint64_t seed = get_field<std::uint64_t>(fj, "config.fuzz", "seed", std::uint64_t{0});
    if (args.seed_set) {
      seed = args.seed;
    }
    if (count < 1 || max_states < 2 || max_actions < 2 || max_horizon < 1 || max_cost < 0 ||
        max_branching < 1) {
      throw capsrl::SchemaError(
          "config.fuzz: need count >= 1, max_states/max_actions >= 2, max_horizon >= 1, "
          "max_cost >= 0, max_branching >= 1");
    }
    const capsrl::RngSeed base{seed, 0};
    envs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      capsrl::Rng pick(base, "verify.fuzz", static_cast<std::uint64_t>(i));
      const int S = 2 + static_cast<int>(pick.next_below(
                            static_cast<std::uint64_t>(max_states - 1)));
      const int A = 2 + static_cast<int>(pick.next_below(
                            static_cast<std::uint64_t>(max_actions - 1)));
      const int T =
          1 + static_cast<int>(pick.next_below(static_cast<std::uint64_t>(max_horizon)));
      const int B = 1 + static_cast<int>(pick.next_below(
                            static_cast<std::uint64_t>(std::min(max_branching, S))));
      const int C =
          static_cast<int>(pick.next_below(static_cast<std::uint64_t>(max_cost + 1)));
      envs.push_back(capsrl::make_random_cmdp(
          S, A, T, B, C, capsrl::derive_stream(base, "verify.env", static_cast<std::uint64_t>(i))));
    }
  }

  std::vector<double> explicit_grid;
  bool full_grid = true;
  if (cfg.contains("kappa_grid")) {
    const json& gj = cfg.at("kappa_grid");
    if (gj.is_string()) {
      if (gj.get<std::string>() != "full") {
        throw capsrl::SchemaError("config.kappa_grid: expected \"full\" or an array of reals");
      }
    } else {
      explicit_grid = get_field<std::vector<double>>(cfg, "config", "kappa_grid");
      if (explicit_grid.empty()) {
        throw capsrl::SchemaError("config.kappa_grid: must be nonempty");
      }
      full_grid = false;
    }
  }

  struct EnvResult {
    bool admissible = true;
    double max_violation = -std::numeric_limits<double>::infinity();
    long long checks = 0;
    double worst_kappa = 0.0;
    capsrl::BoundReport worst;
  };
  std::vector<EnvResult> results(envs.size());
  capsrl::parallel_for(envs.size(), args.workers, [&](std::size_t i) {
    const capsrl::Cmdp& env = envs[i];
    const capsrl::ValueTables vt = capsrl::solve_all(env);
    const capsrl::ExactArtifacts exact = capsrl::make_exact_artifacts(vt, K);
    std::vector<double> grid = explicit_grid;
    if (full_grid) {
      grid.clear();
      const long long top = static_cast<long long>(env.horizon) * env.c_max;
      for (long long k = 0; k <= top; ++k) {
        grid.push_back(static_cast<double>(k));
      }
    }
    EnvResult& res = results[i];
    for (const double kappa : grid) {
      const capsrl::CostAwarePolicy policy = capsrl::caps_policy(exact, kappa);
      const capsrl::BoundReport bound = capsrl::verify_theorem_bound(env, policy, kappa);
      ++res.checks;
      if (!bound.applicable) {
        res.admissible = false;
      }
      if (bound.max_violation > res.max_violation) {
        res.max_violation = bound.max_violation;
        res.worst_kappa = kappa;
        res.worst = bound;
      }
    }
  });

  bool admissible_all = true;
  double max_violation = -std::numeric_limits<double>::infinity();
  long long checks = 0;
  std::size_t worst_env = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    admissible_all = admissible_all && results[i].admissible;
    checks += results[i].checks;
    if (results[i].max_violation > max_violation) {
      max_violation = results[i].max_violation;
      worst_env = i;
    }
  }
  const bool violated = !admissible_all || max_violation > capsrl::kBoundTol;

  capsrl::JsonWriter w;
  w.begin_object();
  w.key("admissible_all").value(admissible_all);
  w.key("checks").value(checks);
  w.key("envs").value(static_cast<long long>(envs.size()));
  w.key("K").value(K);
  w.key("kappa_grid");
  if (full_grid) {
    w.value("full");
  } else {
    w.real_array(explicit_grid);
  }
  w.key("max_violation").value(max_violation);
  w.key("tolerance").value(capsrl::kBoundTol);
  w.key("violated").value(violated);
  w.key("worst");
  w.begin_object();
  const EnvResult& worst = results[worst_env];
  w.key("b").value(worst.worst.worst_b);
  w.key("env").value(envs[worst_env].name);
  w.key("epsilon").value(worst.worst.epsilon);
  w.key("kappa").value(worst.worst_kappa);
  w.key("s").value(worst.worst.worst_s);
  w.key("t").value(worst.worst.worst_t);
  w.end_object();
  w.end_object();
  capsrl::write_file_atomic(out / "verify.json", w.str() + "\n");
  std::cout << "verify: envs=" << envs.size() << " checks=" << checks
            << " max_violation=" << capsrl::format_real(max_violation)
            << " admissible=" << (admissible_all ? "yes" : "no")
            << (violated ? " VIOLATED" : "") << "\n";
  return violated ? 1 : 0;
}

int dispatch(const std::string& command, const CliArgs& args) {
  const json cfg = load_config(args.config);
  const fs::path out(args.out);
  std::filesystem::create_directories(out);
  if (command == "env-gen") return cmd_env_gen(cfg, out, args);
  if (command == "dataset-gen") return cmd_dataset_gen(cfg, out, args);
  if (command == "train") return cmd_train(cfg, out, args);
  if (command == "eval") return cmd_eval(cfg, out, args);
  if (command == "sweep") return cmd_sweep(cfg, out, args);
  if (command == "ablate") return cmd_ablate(cfg, out, args);
  if (command == "verify") return cmd_verify(cfg, out, args);
  throw capsrl::InternalError("unknown command: " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constraint-adaptive policy switching for offline safe RL on finite CMDPs"};
  app.require_subcommand(1);
  CliArgs args;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"env-gen", "Generate a CMDP instance file"},
      {"dataset-gen", "Roll an offline dataset from a behavior mixture"},
      {"train", "Train switching artifacts from a dataset"},
      {"eval", "Evaluate an artifact across cost thresholds"},
      {"sweep", "Safety counts across threshold sets and methods"},
      {"ablate", "Head-count / sharing / FQE / threshold ablations"},
      {"verify", "Exact safety-bound verification over CMDPs"},
  };
  for (const auto& [name, desc] : commands) {
    CLI::App* sc = app.add_subcommand(name, desc);
    sc->add_option("--config", args.config, "JSON config file")->required();
    sc->add_option("--out", args.out, "Output directory")->required();
    sc->add_option("--seed", args.seed, "Override the config's seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
    sc->add_option("--workers", args.workers, "Worker threads (default 1)")
        ->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return dispatch(command, args);
  } catch (const capsrl::SchemaError& e) {
    std::cerr << "error (schema): " << e.what() << "\n";
    return 2;
  } catch (const capsrl::MissingInputError& e) {
    std::cerr << "error (missing input): " << e.what() << "\n";
    return 3;
  } catch (const capsrl::InternalError& e) {
    std::cerr << "error (internal): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
