#include "capsrl/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "json.hpp"

#include "capsrl/errors.hpp"
#include "capsrl/io.hpp"
#include "capsrl/log.hpp"

namespace capsrl {

namespace {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

void require_trainable(const OfflineDataset& ds, const EnvDims& dims, const TrainConfig& cfg) {
  const auto problems = validate_train_config(cfg);
  if (!problems.empty()) {
    std::string msg = "train config invalid:";
    for (const auto& p : problems) {
      msg += " " + p + ";";
    }
    throw SchemaError(msg);
  }
  if (ds.transitions.empty()) {
    throw SchemaError("training requires a nonempty dataset");
  }
  if (dims.n_states < 1 || dims.n_actions < 1 || dims.horizon < 1) {
    throw SchemaError("train dims must all be >= 1");
  }
  for (std::size_t i = 0; i < ds.transitions.size(); ++i) {
    const Transition& tr = ds.transitions[i];
    if (tr.s < 0 || tr.s >= dims.n_states || tr.s_next < 0 || tr.s_next >= dims.n_states ||
        tr.a < 0 || tr.a >= dims.n_actions || tr.t < 0 || tr.t >= dims.horizon) {
      throw SchemaError("dataset transition " + std::to_string(i) +
                        " is out of range for the declared env dims");
    }
  }
}

// Per-state cost estimated from the data: the cost field of any transition
// entering s (they all agree when the data came from one env). States never
// entered get 0 — with point-mass starts the initial state often has no
// incoming transition, and 0 matches the test envs' zero-cost starts.
std::vector<double> chat_from_dataset(const OfflineDataset& ds, int n_states) {
  std::vector<double> chat(static_cast<std::size_t>(n_states), 0.0);
  std::vector<char> seen(static_cast<std::size_t>(n_states), 0);
  for (const Transition& tr : ds.transitions) {
    if (!seen[static_cast<std::size_t>(tr.s_next)]) {
      seen[static_cast<std::size_t>(tr.s_next)] = 1;
      chat[static_cast<std::size_t>(tr.s_next)] = static_cast<double>(tr.c);
    }
  }
  return chat;
}

int most_frequent_action(const OfflineDataset& ds, int n_actions) {
  std::vector<long long> count(static_cast<std::size_t>(n_actions), 0);
  for (const Transition& tr : ds.transitions) {
    ++count[static_cast<std::size_t>(tr.a)];
  }
  int best = 0;
  for (int a = 1; a < n_actions; ++a) {
    if (count[static_cast<std::size_t>(a)] > count[static_cast<std::size_t>(best)]) {
      best = a;
    }
  }
  return best;
}

struct EncodedData {
  std::vector<std::vector<double>> state;       // encoding of (s_i, t_i)
  std::vector<std::vector<double>> next_state;  // encoding of (s_next_i, t_i + 1)
};

EncodedData encode_dataset(const OfflineDataset& ds, const EnvDims& dims) {
  EncodedData enc;
  enc.state.reserve(ds.transitions.size());
  enc.next_state.reserve(ds.transitions.size());
  for (const Transition& tr : ds.transitions) {
    enc.state.push_back(encode_state(tr.s, tr.t, dims.n_states, dims.horizon));
    enc.next_state.push_back(encode_state(tr.s_next, tr.t + 1, dims.n_states, dims.horizon));
  }
  return enc;
}

std::vector<std::size_t> draw_batch(Rng& rng, std::size_t n, int batch_size) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch_size));
  for (auto& i : idx) {
    i = static_cast<std::size_t>(rng.next_below(n));
  }
  return idx;
}

void polyak_track(Mlp& target, const Mlp& online, double rate) {
  auto& tp = target.params();
  const auto& op = online.params();
  for (std::size_t i = 0; i < tp.size(); ++i) {
    tp[i] = (1.0 - rate) * tp[i] + rate * op[i];
  }
}

int argmax_lowest(const std::vector<double>& values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Per-head extraction advantage: head 0 chases reward, the last head flees
// cost, intermediate head k trades them off at lambda_values[k-1].
double head_advantage(int k, int K, const std::vector<double>& lambda, double adv_r,
                      double adv_c) {
  if (k == 0) {
    return adv_r;
  }
  if (k == K - 1) {
    return -adv_c;
  }
  return adv_r - lambda[static_cast<std::size_t>(k - 1)] * adv_c;
}

// ---------------------------------------------------------------------------
// IQL-style training
// ---------------------------------------------------------------------------

// One expectile-regression step of V toward target-Q values at dataset
// actions: u = Q(s,a) - V(s), loss |tau - 1(u<0)| u^2.
void iql_value_step(Mlp& v, AdamState& adam, std::vector<double>& grad, const Mlp& target_q,
                    const EncodedData& enc, const OfflineDataset& ds,
                    const std::vector<std::size_t>& batch, double tau) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const std::size_t i : batch) {
    const Transition& tr = ds.transitions[i];
    const double qval = target_q.forward(enc.state[i])[static_cast<std::size_t>(tr.a)];
    const Mlp::Cache cache = v.forward_cached(enc.state[i]);
    const double u = qval - cache.post.back()[0];
    const LossValue loss = expectile_loss(u, tau);
    // dL/dV = dL/du * du/dV = loss.dvalue * (-1)
    const std::vector<double> upstream = {-loss.dvalue * scale};
    v.backward(cache, upstream, grad);
  }
  adam.apply(v.params(), grad);
}

// One TD step of Q toward x + gamma * V(s') (x at terminal transitions).
void td_q_step(Mlp& q, AdamState& adam, std::vector<double>& grad,
               const std::vector<double>& targets, const EncodedData& enc,
               const OfflineDataset& ds, const std::vector<std::size_t>& batch, int n_actions) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> upstream(static_cast<std::size_t>(n_actions), 0.0);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t i = batch[b];
    const Transition& tr = ds.transitions[i];
    const Mlp::Cache cache = q.forward_cached(enc.state[i]);
    const double u = cache.post.back()[static_cast<std::size_t>(tr.a)] - targets[b];
    std::fill(upstream.begin(), upstream.end(), 0.0);
    upstream[static_cast<std::size_t>(tr.a)] = 2.0 * u * scale;
    q.backward(cache, upstream, grad);
  }
  adam.apply(q.params(), grad);
}

std::vector<double> td_targets(const Mlp& v, const EncodedData& enc, const OfflineDataset& ds,
                               const std::vector<std::size_t>& batch, double gamma,
                               bool cost_objective) {
  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Transition& tr = ds.transitions[batch[b]];
    const double x = cost_objective ? static_cast<double>(tr.c) : tr.r;
    y[b] = tr.done ? x : x + gamma * v.forward(enc.next_state[batch[b]])[0];
  }
  return y;
}

// Weighted log-likelihood extraction of K heads from frozen critics
// (advantage-weighted regression); weights precomputed per head x transition.
void extract_heads(NetPayload& payload, bool shared, int K, const EnvDims& dims,
                   const TrainConfig& cfg, const EncodedData& enc, const OfflineDataset& ds,
                   const std::vector<std::vector<double>>& weight, Rng& rng) {
  const int enc_dim = encoding_dim(dims.n_states);
  const std::size_t n = ds.transitions.size();
  if (shared) {
    MultiHeadPolicyNet actor(enc_dim, cfg.hidden, dims.n_actions, K, MlpSpec::Act::relu);
    actor.init(rng);
    AdamState adam_body;
    adam_body.init(actor.body().n_params(), cfg.lr_actor);
    std::vector<AdamState> adam_head(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      adam_head[static_cast<std::size_t>(k)].init(actor.head(k).n_params(), cfg.lr_actor);
    }
    std::vector<double> grad_body(actor.body().n_params());
    std::vector<std::vector<double>> grad_head(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      grad_head[static_cast<std::size_t>(k)].resize(actor.head(k).n_params());
    }
    for (int step = 0; step < cfg.steps; ++step) {
      const auto batch = draw_batch(rng, n, cfg.batch_size);
      std::fill(grad_body.begin(), grad_body.end(), 0.0);
      for (auto& g : grad_head) {
        std::fill(g.begin(), g.end(), 0.0);
      }
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (const std::size_t i : batch) {
        const auto cache = actor.forward_body(enc.state[i]);
        const int a = ds.transitions[i].a;
        for (int k = 0; k < K; ++k) {
          const std::vector<double> logits = actor.head_logits(k, cache);
          std::vector<double> g = log_prob_grad(logits, a);
          const double w = -weight[static_cast<std::size_t>(k)][i] * scale;
          for (double& x : g) {
            x *= w;
          }
          actor.backward_head(k, cache, g, grad_body, grad_head[static_cast<std::size_t>(k)]);
        }
      }
      adam_body.apply(actor.body().params(), grad_body);
      for (int k = 0; k < K; ++k) {
        adam_head[static_cast<std::size_t>(k)].apply(actor.head(k).params(),
                                                     grad_head[static_cast<std::size_t>(k)]);
      }
    }
    payload.shared_net = std::move(actor);
  } else {
    MlpSpec actor_spec;
    actor_spec.input_dim = enc_dim;
    actor_spec.hidden = cfg.hidden;
    actor_spec.output_dim = dims.n_actions;
    actor_spec.activation = MlpSpec::Act::relu;
    for (int k = 0; k < K; ++k) {
      Mlp actor(actor_spec);
      actor.init(rng);
      AdamState adam;
      adam.init(actor.n_params(), cfg.lr_actor);
      std::vector<double> grad(actor.n_params());
      for (int step = 0; step < cfg.steps; ++step) {
        const auto batch = draw_batch(rng, n, cfg.batch_size);
        std::fill(grad.begin(), grad.end(), 0.0);
        const double scale = 1.0 / static_cast<double>(batch.size());
        for (const std::size_t i : batch) {
          const Mlp::Cache cache = actor.forward_cached(enc.state[i]);
          std::vector<double> g = log_prob_grad(cache.post.back(), ds.transitions[i].a);
          const double w = -weight[static_cast<std::size_t>(k)][i] * scale;
          for (double& x : g) {
            x *= w;
          }
          actor.backward(cache, g, grad);
        }
        adam.apply(actor.params(), grad);
      }
      payload.separate_actors.push_back(std::move(actor));
    }
  }
}

// ---------------------------------------------------------------------------
// Artifact JSON helpers
// ---------------------------------------------------------------------------

void write_table3(JsonWriter& w, const std::vector<std::vector<std::vector<double>>>& t) {
  w.begin_array();
  for (const auto& plane : t) {
    w.begin_array();
    for (const auto& row : plane) {
      w.real_array(row);
    }
    w.end_array();
  }
  w.end_array();
}

void write_table2(JsonWriter& w, const std::vector<std::vector<double>>& t) {
  w.begin_array();
  for (const auto& row : t) {
    w.real_array(row);
  }
  w.end_array();
}

std::string train_config_to_json(const TrainConfig& cfg) {
  JsonWriter w;
  w.begin_object();
  w.key("algo").value(algo_name(cfg.algo));
  w.key("alpha").value(cfg.alpha);
  w.key("batch_size").value(cfg.batch_size);
  w.key("bc_weight").value(cfg.bc_weight);
  w.key("beta").value(cfg.beta);
  w.key("expectile_tau").value(cfg.expectile_tau);
  w.key("fqe_sweeps").value(cfg.fqe_sweeps);
  w.key("gamma").value(cfg.gamma);
  w.key("hidden").int_array(cfg.hidden);
  w.key("K").value(cfg.K);
  w.key("lr_actor").value(cfg.lr_actor);
  w.key("lr_critic").value(cfg.lr_critic);
  w.key("polyak").value(cfg.polyak);
  w.key("seed").value(cfg.seed);
  w.key("shared_backbone").value(cfg.shared_backbone);
  w.key("steps").value(cfg.steps);
  w.key("weight_clip").value(cfg.weight_clip);
  w.end_object();
  return w.str();
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.algo = algo_from_name(j.at("algo").get<std::string>());
  cfg.alpha = j.at("alpha").get<double>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.bc_weight = j.at("bc_weight").get<double>();
  cfg.beta = j.at("beta").get<double>();
  cfg.expectile_tau = j.at("expectile_tau").get<double>();
  cfg.fqe_sweeps = j.at("fqe_sweeps").get<int>();
  cfg.gamma = j.at("gamma").get<double>();
  cfg.hidden = j.at("hidden").get<std::vector<int>>();
  cfg.K = j.at("K").get<int>();
  cfg.lr_actor = j.at("lr_actor").get<double>();
  cfg.lr_critic = j.at("lr_critic").get<double>();
  cfg.polyak = j.at("polyak").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.shared_backbone = j.at("shared_backbone").get<bool>();
  cfg.steps = j.at("steps").get<int>();
  cfg.weight_clip = j.at("weight_clip").get<double>();
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::iql:
      return "iql";
    case Algo::sacbc:
      return "sacbc";
    case Algo::tabular:
      return "tabular";
    case Algo::bc:
      return "bc";
  }
  throw InternalError("algo_name: unknown algo");
}

Algo algo_from_name(const std::string& name) {
  if (name == "iql") return Algo::iql;
  if (name == "sacbc") return Algo::sacbc;
  if (name == "tabular") return Algo::tabular;
  if (name == "bc") return Algo::bc;
  throw SchemaError("unknown algo '" + name + "' (expected iql|sacbc|tabular|bc)");
}

std::vector<std::string> validate_train_config(const TrainConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.algo != Algo::bc && cfg.K < 2) {
    out.push_back("K must be >= 2");
  }
  if (!(cfg.expectile_tau > 0.0 && cfg.expectile_tau < 1.0)) {
    out.push_back("expectile_tau must lie in (0,1)");
  }
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) {
    out.push_back("gamma must lie in (0,1]");
  }
  if (!(cfg.beta > 0.0)) {
    out.push_back("beta must be > 0");
  }
  if (cfg.steps < 1) {
    out.push_back("steps must be >= 1");
  }
  if (cfg.batch_size < 1) {
    out.push_back("batch_size must be >= 1");
  }
  if (!(cfg.lr_actor > 0.0) || !(cfg.lr_critic > 0.0)) {
    out.push_back("learning rates must be > 0");
  }
  if (!(cfg.weight_clip > 0.0)) {
    out.push_back("weight_clip must be > 0");
  }
  if (!(cfg.polyak > 0.0 && cfg.polyak <= 1.0)) {
    out.push_back("polyak must lie in (0,1]");
  }
  if (cfg.fqe_sweeps < 1) {
    out.push_back("fqe_sweeps must be >= 1");
  }
  if (!(cfg.alpha >= 0.0)) {
    out.push_back("alpha must be >= 0");
  }
  if (!(cfg.bc_weight >= 0.0)) {
    out.push_back("bc_weight must be >= 0");
  }
  if (cfg.hidden.empty()) {
    out.push_back("hidden must list at least one layer width");
  }
  for (const int h : cfg.hidden) {
    if (h < 1) {
      out.push_back("hidden widths must be >= 1");
      break;
    }
  }
  return out;
}

std::vector<double> lambda_schedule(int K) {
  if (K < 2) {
    throw InternalError("lambda_schedule: K must be >= 2");
  }
  std::vector<double> out;
  const double denom = (static_cast<double>(K) - 1.0) / 2.0;
  for (int k = 1; k <= K - 2; ++k) {
    out.push_back(static_cast<double>(k) / denom);
  }
  return out;
}

bool TrainedArtifacts::has_critics() const {
  if (tabular.has_value()) {
    return true;
  }
  return net.has_value() && net->q_reward.n_params() > 0;
}

int TrainedArtifacts::head_action(int k, int s, int t) const {
  if (tabular.has_value()) {
    return tabular->policy[static_cast<std::size_t>(k)][static_cast<std::size_t>(t)]
                          [static_cast<std::size_t>(s)];
  }
  if (!net.has_value()) {
    throw InternalError("head_action: artifact has no policy payload");
  }
  const auto enc = encode_state(s, t, dims.n_states, dims.horizon);
  const std::vector<double> logits = net->shared_net.has_value()
                                         ? net->shared_net->logits(k, enc)
                                         : net->separate_actors[static_cast<std::size_t>(k)]
                                               .forward(enc);
  return argmax_lowest(logits);
}

std::vector<double> TrainedArtifacts::head_probs(int k, int s, int t) const {
  if (tabular.has_value()) {
    std::vector<double> probs(static_cast<std::size_t>(dims.n_actions), 0.0);
    probs[static_cast<std::size_t>(head_action(k, s, t))] = 1.0;
    return probs;
  }
  if (!net.has_value()) {
    throw InternalError("head_probs: artifact has no policy payload");
  }
  const auto enc = encode_state(s, t, dims.n_states, dims.horizon);
  const std::vector<double> logits = net->shared_net.has_value()
                                         ? net->shared_net->logits(k, enc)
                                         : net->separate_actors[static_cast<std::size_t>(k)]
                                               .forward(enc);
  return softmax(logits);
}

double TrainedArtifacts::q_reward_at(int s, int a, int t) const {
  if (tabular.has_value()) {
    return tabular->q_reward[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                            [static_cast<std::size_t>(a)];
  }
  if (!has_critics()) {
    throw MissingInputError("artifact has no Q estimators (behavior-cloning baseline)");
  }
  const auto enc = encode_state(s, t, dims.n_states, dims.horizon);
  return net->q_reward.forward(enc)[static_cast<std::size_t>(a)];
}

double TrainedArtifacts::q_cost_at(int s, int a, int t) const {
  if (tabular.has_value()) {
    return tabular->q_cost[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                          [static_cast<std::size_t>(a)];
  }
  if (!has_critics()) {
    throw MissingInputError("artifact has no Q estimators (behavior-cloning baseline)");
  }
  const auto enc = encode_state(s, t, dims.n_states, dims.horizon);
  return net->q_cost.forward(enc)[static_cast<std::size_t>(a)] +
         net->chat[static_cast<std::size_t>(s)];
}

TrainedArtifacts train_iql_caps(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg) {
  if (cfg.algo != Algo::iql) {
    throw InternalError("train_iql_caps called with algo != iql");
  }
  require_trainable(ds, dims, cfg);
  const std::size_t n = ds.transitions.size();
  const EncodedData enc = encode_dataset(ds, dims);
  Rng rng(RngSeed{cfg.seed, 0}, "train.iql", 0);

  MlpSpec qspec;
  qspec.input_dim = encoding_dim(dims.n_states);
  qspec.hidden = cfg.hidden;
  qspec.output_dim = dims.n_actions;
  MlpSpec vspec = qspec;
  vspec.output_dim = 1;

  Mlp q_r(qspec), q_c(qspec), v_r(vspec), v_c(vspec);
  q_r.init(rng);
  q_c.init(rng);
  v_r.init(rng);
  v_c.init(rng);
  Mlp tq_r = q_r, tq_c = q_c;

  AdamState adam_qr, adam_qc, adam_vr, adam_vc;
  adam_qr.init(q_r.n_params(), cfg.lr_critic);
  adam_qc.init(q_c.n_params(), cfg.lr_critic);
  adam_vr.init(v_r.n_params(), cfg.lr_critic);
  adam_vc.init(v_c.n_params(), cfg.lr_critic);
  std::vector<double> grad_q(q_r.n_params()), grad_v(v_r.n_params());

  const double tau_r = cfg.expectile_tau;
  const double tau_c = 1.0 - cfg.expectile_tau;  // cost V chases the LOWER expectile (min cost)
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = draw_batch(rng, n, cfg.batch_size);
    iql_value_step(v_r, adam_vr, grad_v, tq_r, enc, ds, batch, tau_r);
    iql_value_step(v_c, adam_vc, grad_v, tq_c, enc, ds, batch, tau_c);
    const auto y_r = td_targets(v_r, enc, ds, batch, cfg.gamma, false);
    const auto y_c = td_targets(v_c, enc, ds, batch, cfg.gamma, true);
    td_q_step(q_r, adam_qr, grad_q, y_r, enc, ds, batch, dims.n_actions);
    td_q_step(q_c, adam_qc, grad_q, y_c, enc, ds, batch, dims.n_actions);
    polyak_track(tq_r, q_r, cfg.polyak);
    polyak_track(tq_c, q_c, cfg.polyak);
  }

  // Frozen-critic advantages and clipped exponential weights, per head.
  const std::vector<double> lambda = lambda_schedule(cfg.K);
  std::vector<std::vector<double>> weight(static_cast<std::size_t>(cfg.K),
                                          std::vector<double>(n, 0.0));
  const double log_clip = std::log(cfg.weight_clip);
  for (std::size_t i = 0; i < n; ++i) {
    const int a = ds.transitions[i].a;
    const double adv_r =
        q_r.forward(enc.state[i])[static_cast<std::size_t>(a)] - v_r.forward(enc.state[i])[0];
    const double adv_c =
        q_c.forward(enc.state[i])[static_cast<std::size_t>(a)] - v_c.forward(enc.state[i])[0];
    for (int k = 0; k < cfg.K; ++k) {
      const double adv = head_advantage(k, cfg.K, lambda, adv_r, adv_c);
      const double exponent = cfg.beta * adv;
      weight[static_cast<std::size_t>(k)][i] =
          exponent > log_clip ? cfg.weight_clip : std::exp(exponent);
    }
  }

  TrainedArtifacts out;
  out.algo = Algo::iql;
  out.K = cfg.K;
  out.shared_backbone = cfg.shared_backbone;
  out.dims = dims;
  out.lambda_values = lambda;
  out.config = cfg;
  out.env_name = ds.env_name;
  out.dataset_hash = dataset_hash(ds);
  out.critic_passes = 2;  // one reward-critic training, one cost-critic training
  out.net.emplace();
  extract_heads(*out.net, cfg.shared_backbone, cfg.K, dims, cfg, enc, ds, weight, rng);
  out.extractions = cfg.K;
  out.net->q_reward = std::move(q_r);
  out.net->q_cost = std::move(q_c);
  out.net->v_reward = std::move(v_r);
  out.net->v_cost = std::move(v_c);
  out.net->chat = chat_from_dataset(ds, dims.n_states);
  log_info("iql training done: steps=" + std::to_string(cfg.steps) +
           " K=" + std::to_string(cfg.K));
  return out;
}

TrainedArtifacts train_sacbc_caps(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg) {
  if (cfg.algo != Algo::sacbc) {
    throw InternalError("train_sacbc_caps called with algo != sacbc");
  }
  require_trainable(ds, dims, cfg);
  const std::size_t n = ds.transitions.size();
  const EncodedData enc = encode_dataset(ds, dims);
  Rng rng(RngSeed{cfg.seed, 0}, "train.sacbc", 0);
  const std::vector<double> lambda = lambda_schedule(cfg.K);
  const int K = cfg.K;
  const int A = dims.n_actions;

  MlpSpec qspec;
  qspec.input_dim = encoding_dim(dims.n_states);
  qspec.hidden = cfg.hidden;
  qspec.output_dim = A;

  Mlp q_r(qspec), q_c(qspec);
  q_r.init(rng);
  q_c.init(rng);
  Mlp tq_r = q_r, tq_c = q_c;
  AdamState adam_qr, adam_qc;
  adam_qr.init(q_r.n_params(), cfg.lr_critic);
  adam_qc.init(q_c.n_params(), cfg.lr_critic);
  std::vector<double> grad_q(q_r.n_params());

  // Actor: shared body with K heads, or K independent single-head nets.
  std::optional<MultiHeadPolicyNet> shared;
  std::vector<Mlp> separate;
  if (cfg.shared_backbone) {
    shared.emplace(qspec.input_dim, cfg.hidden, A, K, MlpSpec::Act::relu);
    shared->init(rng);
  } else {
    for (int k = 0; k < K; ++k) {
      Mlp actor(qspec);
      actor.init(rng);
      separate.push_back(std::move(actor));
    }
  }
  AdamState adam_body;
  std::vector<AdamState> adam_head(static_cast<std::size_t>(K));
  std::vector<std::vector<double>> grad_head(static_cast<std::size_t>(K));
  std::vector<double> grad_body;
  if (cfg.shared_backbone) {
    adam_body.init(shared->body().n_params(), cfg.lr_actor);
    grad_body.resize(shared->body().n_params());
    for (int k = 0; k < K; ++k) {
      adam_head[static_cast<std::size_t>(k)].init(shared->head(k).n_params(), cfg.lr_actor);
      grad_head[static_cast<std::size_t>(k)].resize(shared->head(k).n_params());
    }
  } else {
    for (int k = 0; k < K; ++k) {
      adam_head[static_cast<std::size_t>(k)].init(separate[static_cast<std::size_t>(k)].n_params(),
                                                  cfg.lr_actor);
      grad_head[static_cast<std::size_t>(k)].resize(
          separate[static_cast<std::size_t>(k)].n_params());
    }
  }

  auto head_logits_at = [&](int k, const std::vector<double>& x) {
    return cfg.shared_backbone ? shared->logits(k, x)
                               : separate[static_cast<std::size_t>(k)].forward(x);
  };

  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = draw_batch(rng, n, cfg.batch_size);

    // Soft TD targets under the current extreme heads and target critics:
    // reward bootstrap rewards entropy, cost bootstrap charges it.
    std::vector<double> y_r(batch.size()), y_c(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Transition& tr = ds.transitions[batch[b]];
      if (tr.done) {
        y_r[b] = tr.r;
        y_c[b] = static_cast<double>(tr.c);
      } else {
        const auto& ex = enc.next_state[batch[b]];
        const double vr_soft =
            soft_value(head_logits_at(0, ex), tq_r.forward(ex), cfg.alpha, nullptr);
        const double vc_soft =
            soft_value(head_logits_at(K - 1, ex), tq_c.forward(ex), -cfg.alpha, nullptr);
        y_r[b] = tr.r + cfg.gamma * vr_soft;
        y_c[b] = static_cast<double>(tr.c) + cfg.gamma * vc_soft;
      }
    }
    td_q_step(q_r, adam_qr, grad_q, y_r, enc, ds, batch, A);
    td_q_step(q_c, adam_qc, grad_q, y_c, enc, ds, batch, A);

    // Actor step against the (frozen within this step) current critics:
    // maximize E_pi[Q^k - alpha log pi] + bc_weight * log pi(a_data).
    if (cfg.shared_backbone) {
      std::fill(grad_body.begin(), grad_body.end(), 0.0);
    }
    for (auto& g : grad_head) {
      std::fill(g.begin(), g.end(), 0.0);
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<double> qk(static_cast<std::size_t>(A));
    for (const std::size_t i : batch) {
      const auto& x = enc.state[i];
      const int a_data = ds.transitions[i].a;
      const std::vector<double> qr_vals = q_r.forward(x);
      const std::vector<double> qc_vals = q_c.forward(x);
      std::optional<MultiHeadPolicyNet::Cache> cache;
      if (cfg.shared_backbone) {
        cache = shared->forward_body(x);
      }
      for (int k = 0; k < K; ++k) {
        for (int a = 0; a < A; ++a) {
          const std::size_t ai = static_cast<std::size_t>(a);
          if (k == 0) {
            qk[ai] = qr_vals[ai];
          } else if (k == K - 1) {
            qk[ai] = -qc_vals[ai];
          } else {
            qk[ai] = qr_vals[ai] - lambda[static_cast<std::size_t>(k - 1)] * qc_vals[ai];
          }
        }
        if (cfg.shared_backbone) {
          const std::vector<double> logits = shared->head_logits(k, *cache);
          std::vector<double> g_soft;
          soft_value(logits, qk, cfg.alpha, &g_soft);
          const std::vector<double> g_bc = log_prob_grad(logits, a_data);
          std::vector<double> upstream(static_cast<std::size_t>(A));
          for (int a = 0; a < A; ++a) {
            const std::size_t ai = static_cast<std::size_t>(a);
            upstream[ai] = -(g_soft[ai] + cfg.bc_weight * g_bc[ai]) * scale;
          }
          shared->backward_head(k, *cache, upstream, grad_body,
                                grad_head[static_cast<std::size_t>(k)]);
        } else {
          Mlp& actor = separate[static_cast<std::size_t>(k)];
          const Mlp::Cache acache = actor.forward_cached(x);
          const std::vector<double>& logits = acache.post.back();
          std::vector<double> g_soft;
          soft_value(logits, qk, cfg.alpha, &g_soft);
          const std::vector<double> g_bc = log_prob_grad(logits, a_data);
          std::vector<double> upstream(static_cast<std::size_t>(A));
          for (int a = 0; a < A; ++a) {
            const std::size_t ai = static_cast<std::size_t>(a);
            upstream[ai] = -(g_soft[ai] + cfg.bc_weight * g_bc[ai]) * scale;
          }
          actor.backward(acache, upstream, grad_head[static_cast<std::size_t>(k)]);
        }
      }
    }
    if (cfg.shared_backbone) {
      adam_body.apply(shared->body().params(), grad_body);
      for (int k = 0; k < K; ++k) {
        adam_head[static_cast<std::size_t>(k)].apply(shared->head(k).params(),
                                                     grad_head[static_cast<std::size_t>(k)]);
      }
    } else {
      for (int k = 0; k < K; ++k) {
        adam_head[static_cast<std::size_t>(k)].apply(separate[static_cast<std::size_t>(k)].params(),
                                                     grad_head[static_cast<std::size_t>(k)]);
      }
    }

    polyak_track(tq_r, q_r, cfg.polyak);
    polyak_track(tq_c, q_c, cfg.polyak);
  }

  TrainedArtifacts out;
  out.algo = Algo::sacbc;
  out.K = K;
  out.shared_backbone = cfg.shared_backbone;
  out.dims = dims;
  out.lambda_values = lambda;
  out.config = cfg;
  out.env_name = ds.env_name;
  out.dataset_hash = dataset_hash(ds);
  out.critic_passes = 2;
  out.extractions = K;
  out.net.emplace();
  if (cfg.shared_backbone) {
    out.net->shared_net = std::move(*shared);
  } else {
    out.net->separate_actors = std::move(separate);
  }
  out.net->q_reward = std::move(q_r);
  out.net->q_cost = std::move(q_c);
  out.net->chat = chat_from_dataset(ds, dims.n_states);
  log_info("sacbc training done: steps=" + std::to_string(cfg.steps) +
           " K=" + std::to_string(K));
  return out;
}

TrainedArtifacts train_tabular_caps(const OfflineDataset& ds, EnvDims dims,
                                    const TrainConfig& cfg) {
  if (cfg.algo != Algo::tabular) {
    throw InternalError("train_tabular_caps called with algo != tabular");
  }
  require_trainable(ds, dims, cfg);
  const int S = dims.n_states, A = dims.n_actions, T = dims.horizon;
  const std::size_t su = static_cast<std::size_t>(S), au = static_cast<std::size_t>(A);

  // Empirical model, pooled over t (the true dynamics are stationary):
  // transition frequencies, mean rewards, per-state landed costs.
  std::vector<std::vector<long long>> count(su, std::vector<long long>(au, 0));
  std::vector<std::vector<std::vector<long long>>> succ(
      su, std::vector<std::vector<long long>>(au, std::vector<long long>(su, 0)));
  std::vector<std::vector<double>> reward_sum(su, std::vector<double>(au, 0.0));
  std::vector<std::vector<std::vector<char>>> seen(
      static_cast<std::size_t>(T), std::vector<std::vector<char>>(su, std::vector<char>(au, 0)));
  for (const Transition& tr : ds.transitions) {
    const std::size_t s = static_cast<std::size_t>(tr.s), a = static_cast<std::size_t>(tr.a);
    ++count[s][a];
    ++succ[s][a][static_cast<std::size_t>(tr.s_next)];
    reward_sum[s][a] += tr.r;
    seen[static_cast<std::size_t>(tr.t)][s][a] = 1;
  }
  const std::vector<double> chat = chat_from_dataset(ds, S);
  const int fallback_action = most_frequent_action(ds, A);

  TabularPayload tab;
  tab.q_reward.assign(static_cast<std::size_t>(T) + 1,
                      std::vector<std::vector<double>>(su, std::vector<double>(au, 0.0)));
  tab.q_cost = tab.q_reward;
  tab.v_reward.assign(static_cast<std::size_t>(T) + 1, std::vector<double>(su, 0.0));
  tab.v_cost = tab.v_reward;
  for (int s = 0; s < S; ++s) {
    tab.v_cost[static_cast<std::size_t>(T)][static_cast<std::size_t>(s)] =
        chat[static_cast<std::size_t>(s)];
    for (int a = 0; a < A; ++a) {
      tab.q_cost[static_cast<std::size_t>(T)][static_cast<std::size_t>(s)]
                [static_cast<std::size_t>(a)] = chat[static_cast<std::size_t>(s)];
    }
  }
  for (int t = T - 1; t >= 0; --t) {
    const std::size_t tu = static_cast<std::size_t>(t);
    for (int s = 0; s < S; ++s) {
      const std::size_t si = static_cast<std::size_t>(s);
      double best_c = std::numeric_limits<double>::infinity();
      double best_r = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (int a = 0; a < A; ++a) {
        const std::size_t ai = static_cast<std::size_t>(a);
        if (!seen[tu][si][ai]) {
          continue;
        }
        any = true;
        double exp_c = 0.0, exp_r = 0.0;
        const double total = static_cast<double>(count[si][ai]);
        for (int sn = 0; sn < S; ++sn) {
          const std::size_t sni = static_cast<std::size_t>(sn);
          if (succ[si][ai][sni] == 0) {
            continue;
          }
          const double p = static_cast<double>(succ[si][ai][sni]) / total;
          exp_c += p * tab.v_cost[tu + 1][sni];
          exp_r += p * tab.v_reward[tu + 1][sni];
        }
        const double qc = chat[si] + cfg.gamma * exp_c;
        const double qr = reward_sum[si][ai] / total + cfg.gamma * exp_r;
        tab.q_cost[tu][si][ai] = qc;
        tab.q_reward[tu][si][ai] = qr;
        if (qc < best_c) {
          best_c = qc;
        }
        if (qr > best_r) {
          best_r = qr;
        }
      }
      if (!any) {
        // (s,t) never appears in the data: fall back to the immediate cost
        // estimate and zero reward-to-go.
        best_c = chat[si];
        best_r = 0.0;
      }
      tab.v_cost[tu][si] = best_c;
      tab.v_reward[tu][si] = best_r;
      for (int a = 0; a < A; ++a) {
        const std::size_t ai = static_cast<std::size_t>(a);
        if (!seen[tu][si][ai]) {
          tab.q_cost[tu][si][ai] = best_c;
          tab.q_reward[tu][si][ai] = best_r;
        }
      }
    }
  }

  // K deterministic extractions: argmax over actions observed at (s,t) of
  // Q^r - lambda_k Q^c (head 0: Q^r, last head: -Q^c), lowest index on ties;
  // unobserved (s,t) take the globally most frequent dataset action.
  const std::vector<double> lambda = lambda_schedule(cfg.K);
  tab.policy.assign(static_cast<std::size_t>(cfg.K),
                    std::vector<std::vector<int>>(static_cast<std::size_t>(T),
                                                  std::vector<int>(su, fallback_action)));
  for (int k = 0; k < cfg.K; ++k) {
    for (int t = 0; t < T; ++t) {
      const std::size_t tu = static_cast<std::size_t>(t);
      for (int s = 0; s < S; ++s) {
        const std::size_t si = static_cast<std::size_t>(s);
        int best = -1;
        double best_score = 0.0;
        for (int a = 0; a < A; ++a) {
          const std::size_t ai = static_cast<std::size_t>(a);
          if (!seen[tu][si][ai]) {
            continue;
          }
          const double score =
              head_advantage(k, cfg.K, lambda, tab.q_reward[tu][si][ai], tab.q_cost[tu][si][ai]);
          if (best < 0 || score > best_score) {
            best = a;
            best_score = score;
          }
        }
        if (best >= 0) {
          tab.policy[static_cast<std::size_t>(k)][tu][si] = best;
        }
      }
    }
  }

  TrainedArtifacts out;
  out.algo = Algo::tabular;
  out.K = cfg.K;
  out.shared_backbone = cfg.shared_backbone;
  out.dims = dims;
  out.lambda_values = lambda;
  out.config = cfg;
  out.env_name = ds.env_name;
  out.dataset_hash = dataset_hash(ds);
  out.critic_passes = 2;  // one cost DP, one reward DP
  out.extractions = cfg.K;
  out.tabular = std::move(tab);
  return out;
}

TrainedArtifacts train_bc(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg) {
  if (cfg.algo != Algo::bc) {
    throw InternalError("train_bc called with algo != bc");
  }
  require_trainable(ds, dims, cfg);
  const std::size_t n = ds.transitions.size();
  const EncodedData enc = encode_dataset(ds, dims);
  Rng rng(RngSeed{cfg.seed, 0}, "train.bc", 0);

  MlpSpec spec;
  spec.input_dim = encoding_dim(dims.n_states);
  spec.hidden = cfg.hidden;
  spec.output_dim = dims.n_actions;
  Mlp actor(spec);
  actor.init(rng);
  AdamState adam;
  adam.init(actor.n_params(), cfg.lr_actor);
  std::vector<double> grad(actor.n_params());
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = draw_batch(rng, n, cfg.batch_size);
    std::fill(grad.begin(), grad.end(), 0.0);
    const double scale = -1.0 / static_cast<double>(batch.size());  // minimize NLL
    for (const std::size_t i : batch) {
      const Mlp::Cache cache = actor.forward_cached(enc.state[i]);
      std::vector<double> g = log_prob_grad(cache.post.back(), ds.transitions[i].a);
      for (double& x : g) {
        x *= scale;
      }
      actor.backward(cache, g, grad);
    }
    adam.apply(actor.params(), grad);
  }

  TrainedArtifacts out;
  out.algo = Algo::bc;
  out.K = 1;
  out.shared_backbone = false;
  out.dims = dims;
  out.config = cfg;
  out.env_name = ds.env_name;
  out.dataset_hash = dataset_hash(ds);
  out.critic_passes = 0;
  out.extractions = 1;
  out.net.emplace();
  out.net->separate_actors.push_back(std::move(actor));
  out.net->chat.assign(static_cast<std::size_t>(dims.n_states), 0.0);
  return out;
}

TrainedArtifacts train_caps(const OfflineDataset& ds, EnvDims dims, const TrainConfig& cfg) {
  switch (cfg.algo) {
    case Algo::iql:
      return train_iql_caps(ds, dims, cfg);
    case Algo::sacbc:
      return train_sacbc_caps(ds, dims, cfg);
    case Algo::tabular:
      return train_tabular_caps(ds, dims, cfg);
    case Algo::bc:
      return train_bc(ds, dims, cfg);
  }
  throw InternalError("train_caps: unknown algo");
}

// ---------------------------------------------------------------------------
// Fitted Q-evaluation
// ---------------------------------------------------------------------------

double FqeTable::q_at(int s, int a, int t) const {
  if (t >= horizon) {
    return cost_objective ? chat[static_cast<std::size_t>(s)] : 0.0;
  }
  const double raw =
      q[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
  return cost_objective ? raw + chat[static_cast<std::size_t>(s)] : raw;
}

FqeTable fqe(const OfflineDataset& ds, EnvDims dims, const HeadPolicyFn& policy, FqeObjective obj,
             const TrainConfig& cfg) {
  require_trainable(ds, dims, cfg);
  const int S = dims.n_states, A = dims.n_actions, T = dims.horizon;
  const std::size_t su = static_cast<std::size_t>(S), au = static_cast<std::size_t>(A);

  FqeTable out;
  out.horizon = T;
  out.n_states = S;
  out.n_actions = A;
  out.cost_objective = obj == FqeObjective::cost;
  out.q.assign(static_cast<std::size_t>(T),
               std::vector<std::vector<double>>(su, std::vector<double>(au, 0.0)));
  out.observed.assign(static_cast<std::size_t>(T),
                      std::vector<std::vector<char>>(su, std::vector<char>(au, 0)));
  out.chat = chat_from_dataset(ds, S);

  // Cell -> member transition indices.
  std::vector<std::vector<std::vector<std::vector<std::size_t>>>> cells(
      static_cast<std::size_t>(T),
      std::vector<std::vector<std::vector<std::size_t>>>(
          su, std::vector<std::vector<std::size_t>>(au)));
  for (std::size_t i = 0; i < ds.transitions.size(); ++i) {
    const Transition& tr = ds.transitions[i];
    cells[static_cast<std::size_t>(tr.t)][static_cast<std::size_t>(tr.s)]
         [static_cast<std::size_t>(tr.a)]
             .push_back(i);
    out.observed[static_cast<std::size_t>(tr.t)][static_cast<std::size_t>(tr.s)]
                [static_cast<std::size_t>(tr.a)] = 1;
  }

  // Lookup with a fixed fallback cascade so the fitted iteration is total:
  // exact cell -> mean over observed actions at (s,t) -> mean over all of
  // s's observed cells -> global mean over observed cells -> 0.
  auto lookup = [&](const std::vector<std::vector<std::vector<double>>>& q, int s, int t,
                    int a) -> double {
    if (t >= T) {
      return 0.0;
    }
    const std::size_t tu = static_cast<std::size_t>(t), si = static_cast<std::size_t>(s);
    if (out.observed[tu][si][static_cast<std::size_t>(a)]) {
      return q[tu][si][static_cast<std::size_t>(a)];
    }
    double sum = 0.0;
    long long cnt = 0;
    for (int b = 0; b < A; ++b) {
      if (out.observed[tu][si][static_cast<std::size_t>(b)]) {
        sum += q[tu][si][static_cast<std::size_t>(b)];
        ++cnt;
      }
    }
    if (cnt > 0) {
      return sum / static_cast<double>(cnt);
    }
    sum = 0.0;
    cnt = 0;
    for (int u = 0; u < T; ++u) {
      for (int b = 0; b < A; ++b) {
        if (out.observed[static_cast<std::size_t>(u)][si][static_cast<std::size_t>(b)]) {
          sum += q[static_cast<std::size_t>(u)][si][static_cast<std::size_t>(b)];
          ++cnt;
        }
      }
    }
    if (cnt > 0) {
      return sum / static_cast<double>(cnt);
    }
    sum = 0.0;
    cnt = 0;
    for (int u = 0; u < T; ++u) {
      for (int w = 0; w < S; ++w) {
        for (int b = 0; b < A; ++b) {
          if (out.observed[static_cast<std::size_t>(u)][static_cast<std::size_t>(w)]
                          [static_cast<std::size_t>(b)]) {
            sum += q[static_cast<std::size_t>(u)][static_cast<std::size_t>(w)]
                    [static_cast<std::size_t>(b)];
            ++cnt;
          }
        }
      }
    }
    return cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
  };

  // Jacobi sweeps of the cell-mean Bellman regression (all targets read the
  // previous sweep's table, so cell order cannot matter).
  auto next = out.q;
  for (int sweep = 0; sweep < cfg.fqe_sweeps; ++sweep) {
    double residual = 0.0;
    for (int t = 0; t < T; ++t) {
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          const auto& members = cells[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                                     [static_cast<std::size_t>(a)];
          if (members.empty()) {
            continue;
          }
          double sum = 0.0;
          for (const std::size_t i : members) {
            const Transition& tr = ds.transitions[i];
            const double x =
                obj == FqeObjective::cost ? static_cast<double>(tr.c) : tr.r;
            if (tr.done) {
              sum += x;
            } else {
              const int a_next = policy(tr.s_next, tr.t + 1);
              sum += x + cfg.gamma * lookup(out.q, tr.s_next, tr.t + 1, a_next);
            }
          }
          const double fitted = sum / static_cast<double>(members.size());
          const double prev = out.q[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                                   [static_cast<std::size_t>(a)];
          residual = std::max(residual, std::abs(fitted - prev));
          next[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
              [static_cast<std::size_t>(a)] = fitted;
        }
      }
    }
    out.q.swap(next);
    out.max_residual = residual;
  }
  log_debug("fqe: sweeps=" + std::to_string(cfg.fqe_sweeps) +
            " max_residual=" + format_real(out.max_residual));

  // Dense fill so q_at is total: unobserved cells take their cascade value
  // computed against the final observed table.
  auto filled = out.q;
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        if (!out.observed[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                         [static_cast<std::size_t>(a)]) {
          filled[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)]
                [static_cast<std::size_t>(a)] = lookup(out.q, s, t, a);
        }
      }
    }
  }
  out.q = std::move(filled);
  return out;
}

// ---------------------------------------------------------------------------
// Artifact checkpoint directory
// ---------------------------------------------------------------------------

void save_artifacts(const TrainedArtifacts& artifacts, const std::filesystem::path& dir) {
  std::vector<std::string> components;
  if (artifacts.tabular.has_value()) {
    const TabularPayload& tab = *artifacts.tabular;
    JsonWriter w;
    w.begin_object();
    w.key("policy");
    w.begin_array();
    for (const auto& per_head : tab.policy) {
      w.begin_array();
      for (const auto& row : per_head) {
        w.int_array(row);
      }
      w.end_array();
    }
    w.end_array();
    w.key("q_cost");
    write_table3(w, tab.q_cost);
    w.key("q_reward");
    write_table3(w, tab.q_reward);
    w.key("v_cost");
    write_table2(w, tab.v_cost);
    w.key("v_reward");
    write_table2(w, tab.v_reward);
    w.end_object();
    write_file_atomic(dir / "tables.json", w.str() + "\n");
    components.push_back("tables.json");
  }
  if (artifacts.net.has_value()) {
    const NetPayload& net = *artifacts.net;
    if (net.shared_net.has_value()) {
      write_file_atomic(dir / "actor_body.json", mlp_to_json(net.shared_net->body()) + "\n");
      components.push_back("actor_body.json");
      for (int k = 0; k < net.shared_net->heads(); ++k) {
        const std::string name = "actor_head_" + std::to_string(k) + ".json";
        write_file_atomic(dir / name, mlp_to_json(net.shared_net->head(k)) + "\n");
        components.push_back(name);
      }
    } else {
      for (std::size_t k = 0; k < net.separate_actors.size(); ++k) {
        const std::string name = "actor_" + std::to_string(k) + ".json";
        write_file_atomic(dir / name, mlp_to_json(net.separate_actors[k]) + "\n");
        components.push_back(name);
      }
    }
    if (net.q_reward.n_params() > 0) {
      write_file_atomic(dir / "q_reward.json", mlp_to_json(net.q_reward) + "\n");
      components.push_back("q_reward.json");
      write_file_atomic(dir / "q_cost.json", mlp_to_json(net.q_cost) + "\n");
      components.push_back("q_cost.json");
    }
    if (net.v_reward.has_value()) {
      write_file_atomic(dir / "v_reward.json", mlp_to_json(*net.v_reward) + "\n");
      components.push_back("v_reward.json");
      write_file_atomic(dir / "v_cost.json", mlp_to_json(*net.v_cost) + "\n");
      components.push_back("v_cost.json");
    }
    JsonWriter w;
    w.begin_object();
    w.key("chat").real_array(net.chat);
    w.end_object();
    write_file_atomic(dir / "chat.json", w.str() + "\n");
    components.push_back("chat.json");
  }

  // Manifest goes last: a directory without one is an incomplete checkpoint.
  JsonWriter w;
  w.begin_object();
  w.key("algo").value(algo_name(artifacts.algo));
  w.key("components");
  w.begin_array();
  for (const auto& c : components) {
    w.value(c);
  }
  w.end_array();
  w.key("config").value_raw(train_config_to_json(artifacts.config));
  w.key("counters");
  w.begin_object();
  w.key("critic_passes").value(artifacts.critic_passes);
  w.key("extractions").value(artifacts.extractions);
  w.end_object();
  w.key("dataset_hash").value(hex64(artifacts.dataset_hash));
  w.key("dims");
  w.begin_object();
  w.key("horizon").value(artifacts.dims.horizon);
  w.key("n_actions").value(artifacts.dims.n_actions);
  w.key("n_states").value(artifacts.dims.n_states);
  w.end_object();
  w.key("env_name").value(artifacts.env_name);
  w.key("K").value(artifacts.K);
  w.key("lambda_values").real_array(artifacts.lambda_values);
  w.key("payload").value(artifacts.tabular.has_value() ? "tabular" : "net");
  w.key("shared_backbone").value(artifacts.shared_backbone);
  w.end_object();
  write_file_atomic(dir / "manifest.json", w.str() + "\n");
}

TrainedArtifacts load_artifacts(const std::filesystem::path& dir) {
  const std::string manifest_text = read_file(dir / "manifest.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("artifact manifest: not valid JSON: " + std::string(e.what()));
  }
  TrainedArtifacts out;
  try {
    out.algo = algo_from_name(j.at("algo").get<std::string>());
    out.config = train_config_from_json(j.at("config"));
    out.critic_passes = j.at("counters").at("critic_passes").get<int>();
    out.extractions = j.at("counters").at("extractions").get<int>();
    const std::string hash_hex = j.at("dataset_hash").get<std::string>();
    out.dataset_hash = std::stoull(hash_hex, nullptr, 16);
    out.dims.horizon = j.at("dims").at("horizon").get<int>();
    out.dims.n_actions = j.at("dims").at("n_actions").get<int>();
    out.dims.n_states = j.at("dims").at("n_states").get<int>();
    out.env_name = j.at("env_name").get<std::string>();
    out.K = j.at("K").get<int>();
    out.lambda_values = j.at("lambda_values").get<std::vector<double>>();
    out.shared_backbone = j.at("shared_backbone").get<bool>();
    const std::string payload = j.at("payload").get<std::string>();
    if (payload == "tabular") {
      nlohmann::json tj;
      try {
        tj = nlohmann::json::parse(read_file(dir / "tables.json"));
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("artifact tables.json: not valid JSON: " + std::string(e.what()));
      }
      TabularPayload tab;
      tab.policy = tj.at("policy").get<std::vector<std::vector<std::vector<int>>>>();
      tab.q_cost = tj.at("q_cost").get<std::vector<std::vector<std::vector<double>>>>();
      tab.q_reward = tj.at("q_reward").get<std::vector<std::vector<std::vector<double>>>>();
      tab.v_cost = tj.at("v_cost").get<std::vector<std::vector<double>>>();
      tab.v_reward = tj.at("v_reward").get<std::vector<std::vector<double>>>();
      out.tabular = std::move(tab);
    } else if (payload == "net") {
      NetPayload net;
      if (out.algo == Algo::bc) {
        net.separate_actors.push_back(mlp_from_json(read_file(dir / "actor_0.json")));
      } else if (out.shared_backbone) {
        MultiHeadPolicyNet shared(encoding_dim(out.dims.n_states), out.config.hidden,
                                  out.dims.n_actions, out.K, MlpSpec::Act::relu);
        shared.body() = mlp_from_json(read_file(dir / "actor_body.json"));
        for (int k = 0; k < out.K; ++k) {
          shared.head(k) =
              mlp_from_json(read_file(dir / ("actor_head_" + std::to_string(k) + ".json")));
        }
        net.shared_net = std::move(shared);
      } else {
        for (int k = 0; k < out.K; ++k) {
          net.separate_actors.push_back(
              mlp_from_json(read_file(dir / ("actor_" + std::to_string(k) + ".json"))));
        }
      }
      if (out.algo != Algo::bc) {
        net.q_reward = mlp_from_json(read_file(dir / "q_reward.json"));
        net.q_cost = mlp_from_json(read_file(dir / "q_cost.json"));
      }
      if (out.algo == Algo::iql) {
        net.v_reward = mlp_from_json(read_file(dir / "v_reward.json"));
        net.v_cost = mlp_from_json(read_file(dir / "v_cost.json"));
      }
      nlohmann::json cj;
      try {
        cj = nlohmann::json::parse(read_file(dir / "chat.json"));
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("artifact chat.json: not valid JSON: " + std::string(e.what()));
      }
      net.chat = cj.at("chat").get<std::vector<double>>();
      out.net = std::move(net);
    } else {
      throw SchemaError("artifact manifest: unknown payload kind '" + payload + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("artifact manifest: malformed field: " + std::string(e.what()));
  }
  return out;
}

}  // namespace capsrl
