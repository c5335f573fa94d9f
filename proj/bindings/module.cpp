// Python bindings for the constraint-adaptive policy switching core: build
// environments, solve exact value tables, train offline artifacts, select
// budget-aware actions, and run the evaluation/verification loops.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstdint>
#include <memory>
#include <string>

#include "capsrl/caps.hpp"
#include "capsrl/cmdp.hpp"
#include "capsrl/dataset.hpp"
#include "capsrl/eval.hpp"
#include "capsrl/oracle.hpp"
#include "capsrl/rng.hpp"
#include "capsrl/trainers.hpp"

namespace py = pybind11;
using namespace capsrl;

namespace {

// One-shot decision helper: runs the CAPS rule at a single augmented state and
// returns the full decision record. ArtifactsT is ExactArtifacts or
// TrainedArtifacts; the artifacts only need to outlive this call.
template <typename ArtifactsT>
Decision decide_once(const ArtifactsT& artifacts, double kappa, int s, int t,
                     long long c_before) {
  Decision out;
  const CostAwarePolicy pol = caps_policy(
      artifacts, kappa, [&out](int, int, long long, const Decision& d) { out = d; });
  (void)pol(s, t, c_before);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constraint-adaptive policy switching for finite-horizon CMDPs";

  // --- environments ---------------------------------------------------------
  py::class_<Cmdp>(m, "Cmdp")
      .def_readonly("n_states", &Cmdp::n_states)
      .def_readonly("n_actions", &Cmdp::n_actions)
      .def_readonly("horizon", &Cmdp::horizon)
      .def_readonly("c_max", &Cmdp::c_max)
      .def_readonly("reward", &Cmdp::reward)
      .def_readonly("cost", &Cmdp::cost)
      .def_readonly("mu0", &Cmdp::mu0)
      .def_readonly("name", &Cmdp::name)
      .def("to_json", &cmdp_to_json)
      .def("__repr__", [](const Cmdp& e) {
        return "<Cmdp '" + e.name + "' S=" + std::to_string(e.n_states) +
               " A=" + std::to_string(e.n_actions) + " T=" + std::to_string(e.horizon) + ">";
      });
  m.def("make_chain3", &make_chain3, "Two-action reference chain: safe vs risky step");
  m.def("make_hazard_gridworld", &make_hazard_gridworld, py::arg("width"), py::arg("height"),
        py::arg("hazards"), py::arg("goal"), py::arg("slip_prob"), py::arg("horizon"));
  m.def(
      "make_random_cmdp",
      [](int n_states, int n_actions, int horizon, int branching, int cost_max,
         std::uint64_t seed) {
        return make_random_cmdp(n_states, n_actions, horizon, branching, cost_max,
                                RngSeed{seed, 0});
      },
      py::arg("n_states"), py::arg("n_actions"), py::arg("horizon"), py::arg("branching") = 2,
      py::arg("cost_max") = 1, py::arg("seed") = 0);
  m.def("save_cmdp", &save_cmdp, py::arg("env"), py::arg("path"));
  m.def("load_cmdp", &load_cmdp, py::arg("path"));

  // --- exact solver and verification ---------------------------------------
  py::class_<ValueTables>(m, "ValueTables")
      .def_readonly("horizon", &ValueTables::horizon)
      .def_readonly("n_states", &ValueTables::n_states)
      .def_readonly("n_actions", &ValueTables::n_actions)
      .def_readonly("qc", &ValueTables::qc)
      .def_readonly("qr", &ValueTables::qr)
      .def_readonly("vc", &ValueTables::vc)
      .def_readonly("vr", &ValueTables::vr);
  m.def("solve_all", &solve_all, py::arg("env"),
        "Exact finite-horizon tables for both objectives");

  py::class_<AdmissibilityReport>(m, "AdmissibilityReport")
      .def_readonly("passed", &AdmissibilityReport::pass)
      .def_readonly("checked", &AdmissibilityReport::checked);
  py::class_<BoundReport>(m, "BoundReport")
      .def_readonly("applicable", &BoundReport::applicable)
      .def_readonly("admissibility", &BoundReport::admissibility)
      .def_readonly("kappa", &BoundReport::kappa)
      .def_readonly("epsilon", &BoundReport::epsilon)
      .def_readonly("max_violation", &BoundReport::max_violation)
      .def_readonly("checked", &BoundReport::checked)
      .def("to_json", &bound_report_to_json);
  m.def("check_admissible", &check_admissible, py::arg("env"), py::arg("policy"),
        py::arg("kappa"), py::arg("tables"),
        "policy is a callable (s, t, cost_so_far) -> action");
  m.def("verify_theorem_bound", &verify_theorem_bound, py::arg("env"), py::arg("policy"),
        py::arg("kappa"));

  // --- decision rule --------------------------------------------------------
  py::class_<Decision>(m, "Decision")
      .def_readonly("chosen_action", &Decision::chosen_action)
      .def_readonly("chosen_head", &Decision::chosen_head)
      .def_readonly("candidate_actions", &Decision::candidate_actions)
      .def_property_readonly("feasible_mask",
                             [](const Decision& d) {
                               std::vector<bool> mask(d.feasible_mask.size());
                               for (std::size_t i = 0; i < mask.size(); ++i) {
                                 mask[i] = d.feasible_mask[i] != 0;
                               }
                               return mask;
                             })
      .def_readonly("fallback_used", &Decision::fallback_used)
      .def_readonly("qc_estimates", &Decision::qc_estimates)
      .def_readonly("qr_estimates", &Decision::qr_estimates);
  py::class_<ExactArtifacts>(m, "ExactArtifacts")
      .def_readonly("K", &ExactArtifacts::K)
      .def_readonly("lambda_values", &ExactArtifacts::lambda_values)
      .def(
          "action",
          [](const ExactArtifacts& ex, double kappa, int s, int t, long long c_before) {
            return decide_once(ex, kappa, s, t, c_before).chosen_action;
          },
          py::arg("kappa"), py::arg("s"), py::arg("t"), py::arg("c_before"))
      .def("decide", &decide_once<ExactArtifacts>, py::arg("kappa"), py::arg("s"), py::arg("t"),
           py::arg("c_before"));
  m.def(
      "make_exact_artifacts",
      [](const ValueTables& vt, int K) { return make_exact_artifacts(vt, K); }, py::arg("tables"),
      py::arg("K") = 2);
  m.def("lambda_schedule", &lambda_schedule, py::arg("K"),
        "Trade-off weights for the K-2 intermediate heads");

  // --- offline datasets -----------------------------------------------------
  py::class_<BehaviorSpec>(m, "BehaviorSpec")
      .def(py::init<>())
      .def_readwrite("weight_reward_greedy", &BehaviorSpec::weight_reward_greedy)
      .def_readwrite("weight_cost_greedy", &BehaviorSpec::weight_cost_greedy)
      .def_readwrite("weight_uniform", &BehaviorSpec::weight_uniform)
      .def_readwrite("epsilon_explore", &BehaviorSpec::epsilon_explore);
  py::class_<Transition>(m, "Transition")
      .def_readonly("t", &Transition::t)
      .def_readonly("s", &Transition::s)
      .def_readonly("a", &Transition::a)
      .def_readonly("r", &Transition::r)
      .def_readonly("c", &Transition::c)
      .def_readonly("s_next", &Transition::s_next)
      .def_readonly("done", &Transition::done);
  py::class_<OfflineDataset>(m, "OfflineDataset")
      .def_readonly("transitions", &OfflineDataset::transitions)
      .def_readonly("env_name", &OfflineDataset::env_name)
      .def_readonly("n_episodes", &OfflineDataset::n_episodes)
      .def_readonly("horizon", &OfflineDataset::horizon)
      .def("__len__", [](const OfflineDataset& ds) { return ds.transitions.size(); });
  m.def(
      "generate_dataset",
      [](const Cmdp& env, const BehaviorSpec& spec, long long n_episodes, std::uint64_t seed,
         const ValueTables& vt) {
        return generate_dataset(env, spec, n_episodes, RngSeed{seed, 0}, vt);
      },
      py::arg("env"), py::arg("behavior"), py::arg("episodes"), py::arg("seed"),
      py::arg("tables"));
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def("dataset_hash", &dataset_hash, py::arg("dataset"));

  // --- training -------------------------------------------------------------
  py::enum_<Algo>(m, "Algo")
      .value("iql", Algo::iql)
      .value("sacbc", Algo::sacbc)
      .value("tabular", Algo::tabular)
      .value("bc", Algo::bc);
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("algo", &TrainConfig::algo)
      .def_readwrite("K", &TrainConfig::K)
      .def_readwrite("shared_backbone", &TrainConfig::shared_backbone)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("lr_actor", &TrainConfig::lr_actor)
      .def_readwrite("lr_critic", &TrainConfig::lr_critic)
      .def_readwrite("gamma", &TrainConfig::gamma)
      .def_readwrite("beta", &TrainConfig::beta)
      .def_readwrite("expectile_tau", &TrainConfig::expectile_tau)
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("bc_weight", &TrainConfig::bc_weight)
      .def_readwrite("weight_clip", &TrainConfig::weight_clip)
      .def_readwrite("polyak", &TrainConfig::polyak)
      .def_readwrite("fqe_sweeps", &TrainConfig::fqe_sweeps)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("seed", &TrainConfig::seed);
  py::class_<TrainedArtifacts>(m, "TrainedArtifacts")
      .def_readonly("algo", &TrainedArtifacts::algo)
      .def_readonly("K", &TrainedArtifacts::K)
      .def_readonly("shared_backbone", &TrainedArtifacts::shared_backbone)
      .def_readonly("lambda_values", &TrainedArtifacts::lambda_values)
      .def_readonly("env_name", &TrainedArtifacts::env_name)
      .def_readonly("dataset_hash", &TrainedArtifacts::dataset_hash)
      .def_readonly("critic_passes", &TrainedArtifacts::critic_passes)
      .def_readonly("extractions", &TrainedArtifacts::extractions)
      .def("has_critics", &TrainedArtifacts::has_critics)
      .def("head_action", &TrainedArtifacts::head_action, py::arg("k"), py::arg("s"),
           py::arg("t"))
      .def("head_probs", &TrainedArtifacts::head_probs, py::arg("k"), py::arg("s"), py::arg("t"))
      .def("q_reward_at", &TrainedArtifacts::q_reward_at, py::arg("s"), py::arg("a"),
           py::arg("t"))
      .def("q_cost_at", &TrainedArtifacts::q_cost_at, py::arg("s"), py::arg("a"), py::arg("t"))
      .def(
          "action",
          [](const TrainedArtifacts& art, double kappa, int s, int t, long long c_before) {
            return decide_once(art, kappa, s, t, c_before).chosen_action;
          },
          py::arg("kappa"), py::arg("s"), py::arg("t"), py::arg("c_before"))
      .def("decide", &decide_once<TrainedArtifacts>, py::arg("kappa"), py::arg("s"), py::arg("t"),
           py::arg("c_before"));
  m.def(
      "train",
      [](const OfflineDataset& ds, const Cmdp& env, const TrainConfig& cfg) {
        return train_caps(ds, EnvDims{env.n_states, env.n_actions, env.horizon}, cfg);
      },
      py::arg("dataset"), py::arg("env"), py::arg("config"),
      "Offline training dispatched on config.algo");
  m.def("save_artifacts", &save_artifacts, py::arg("artifacts"), py::arg("dir"));
  m.def("load_artifacts", &load_artifacts, py::arg("dir"));

  // --- evaluation -----------------------------------------------------------
  py::enum_<EvalConfig::Mode>(m, "EvalMode")
      .value("monte_carlo", EvalConfig::Mode::monte_carlo)
      .value("exact", EvalConfig::Mode::exact);
  py::class_<EvalConfig>(m, "EvalConfig")
      .def(py::init<>())
      .def_readwrite("thresholds", &EvalConfig::thresholds)
      .def_readwrite("seeds", &EvalConfig::seeds)
      .def_readwrite("episodes_per_seed", &EvalConfig::episodes_per_seed)
      .def_readwrite("mode", &EvalConfig::mode);
  py::class_<ThresholdRow>(m, "ThresholdRow")
      .def_readonly("threshold", &ThresholdRow::threshold)
      .def_readonly("raw_reward", &ThresholdRow::raw_reward)
      .def_readonly("raw_cost", &ThresholdRow::raw_cost)
      .def_readonly("norm_reward", &ThresholdRow::norm_reward)
      .def_readonly("norm_cost", &ThresholdRow::norm_cost)
      .def_readonly("safe", &ThresholdRow::safe)
      .def_readonly("fallback_rate", &ThresholdRow::fallback_rate)
      .def_readonly("se_reward", &ThresholdRow::se_reward)
      .def_readonly("se_cost", &ThresholdRow::se_cost)
      .def_readonly("episodes", &ThresholdRow::episodes);
  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("env_name", &EvalReport::env_name)
      .def_readonly("rows", &EvalReport::rows)
      .def_readonly("avg_norm_reward", &EvalReport::avg_norm_reward)
      .def_readonly("avg_norm_cost", &EvalReport::avg_norm_cost)
      .def_readonly("avg_fallback_rate", &EvalReport::avg_fallback_rate)
      .def_readonly("n_safe", &EvalReport::n_safe)
      .def_readonly("n_thresholds", &EvalReport::n_thresholds)
      .def("to_csv", [](const EvalReport& r) { return eval_report_to_csv({r}); })
      .def("to_json", [](const EvalReport& r) { return eval_report_to_json({r}); });
  m.def(
      "evaluate",
      [](const TrainedArtifacts& art, const Cmdp& env, const EvalConfig& cfg, int workers) {
        return evaluate(art, env, cfg, workers);
      },
      py::arg("artifacts"), py::arg("env"), py::arg("config") = EvalConfig{},
      py::arg("workers") = 1);
  m.def(
      "evaluate_exact_artifacts",
      [](const ExactArtifacts& ex, const Cmdp& env, const EvalConfig& cfg, int workers) {
        return evaluate(ex, env, cfg, workers);
      },
      py::arg("artifacts"), py::arg("env"), py::arg("config") = EvalConfig{},
      py::arg("workers") = 1);
}
