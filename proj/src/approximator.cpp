#include "capsrl/approximator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"

#include "capsrl/errors.hpp"
#include "capsrl/io.hpp"

namespace capsrl {

namespace {

double activate(double x, MlpSpec::Act act) {
  return act == MlpSpec::Act::relu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

double activate_grad(double pre, double post, MlpSpec::Act act) {
  if (act == MlpSpec::Act::relu) {
    return pre > 0.0 ? 1.0 : 0.0;
  }
  return 1.0 - post * post;  // d tanh = 1 - tanh^2
}

}  // namespace

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_dim < 1 || spec_.output_dim < 1) {
    throw InternalError("Mlp: input and output dims must be >= 1");
  }
  for (const int h : spec_.hidden) {
    if (h < 1) {
      throw InternalError("Mlp: hidden widths must be >= 1");
    }
  }
  int in = spec_.input_dim;
  std::size_t offset = 0;
  for (std::size_t l = 0; l <= spec_.hidden.size(); ++l) {
    const int out = l < spec_.hidden.size() ? spec_.hidden[l] : spec_.output_dim;
    layer_in_.push_back(in);
    layer_out_.push_back(out);
    w_offset_.push_back(offset);
    offset += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
    b_offset_.push_back(offset);
    offset += static_cast<std::size_t>(out);
    in = out;
  }
  params_.assign(offset, 0.0);
}

bool Mlp::layer_activated(std::size_t layer) const {
  const bool is_output = layer + 1 == layer_out_.size();
  return !is_output || spec_.activate_output;
}

void Mlp::init(Rng& rng) {
  for (std::size_t l = 0; l < layer_out_.size(); ++l) {
    const int fan_in = layer_in_[l];
    const int fan_out = layer_out_[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    const std::size_t w0 = w_offset_[l];
    for (std::size_t i = 0; i < static_cast<std::size_t>(fan_in) * static_cast<std::size_t>(fan_out);
         ++i) {
      params_[w0 + i] = (2.0 * rng.next_real() - 1.0) * limit;
    }
    const std::size_t b0 = b_offset_[l];
    for (int i = 0; i < fan_out; ++i) {
      params_[b0 + static_cast<std::size_t>(i)] = 0.0;
    }
  }
}

Mlp::Cache Mlp::forward_cached(const std::vector<double>& input) const {
  if (static_cast<int>(input.size()) != spec_.input_dim) {
    throw InternalError("Mlp::forward: input dimension mismatch (got " +
                        std::to_string(input.size()) + ", expected " +
                        std::to_string(spec_.input_dim) + ")");
  }
  Cache cache;
  cache.post.reserve(layer_out_.size() + 1);
  cache.pre.reserve(layer_out_.size());
  cache.post.push_back(input);
  for (std::size_t l = 0; l < layer_out_.size(); ++l) {
    const auto& x = cache.post.back();
    const int in = layer_in_[l];
    const int out = layer_out_[l];
    std::vector<double> pre(static_cast<std::size_t>(out));
    const double* w = params_.data() + w_offset_[l];
    const double* b = params_.data() + b_offset_[l];
    for (int o = 0; o < out; ++o) {
      double acc = b[o];
      const double* wr = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      for (int i = 0; i < in; ++i) {
        acc += wr[i] * x[static_cast<std::size_t>(i)];
      }
      pre[static_cast<std::size_t>(o)] = acc;
    }
    std::vector<double> post(static_cast<std::size_t>(out));
    if (layer_activated(l)) {
      for (int o = 0; o < out; ++o) {
        post[static_cast<std::size_t>(o)] = activate(pre[static_cast<std::size_t>(o)], spec_.activation);
      }
    } else {
      post = pre;
    }
    cache.pre.push_back(std::move(pre));
    cache.post.push_back(std::move(post));
  }
  return cache;
}

std::vector<double> Mlp::forward(const std::vector<double>& input) const {
  return forward_cached(input).post.back();
}

std::vector<double> Mlp::backward(const Cache& cache, const std::vector<double>& grad_output,
                                  std::vector<double>& grad) const {
  if (grad.size() != params_.size()) {
    throw InternalError("Mlp::backward: gradient buffer size mismatch");
  }
  std::vector<double> delta = grad_output;
  for (std::size_t l = layer_out_.size(); l-- > 0;) {
    const int in = layer_in_[l];
    const int out = layer_out_[l];
    if (static_cast<int>(delta.size()) != out) {
      throw InternalError("Mlp::backward: upstream gradient dimension mismatch");
    }
    if (layer_activated(l)) {
      for (int o = 0; o < out; ++o) {
        delta[static_cast<std::size_t>(o)] *= activate_grad(
            cache.pre[l][static_cast<std::size_t>(o)], cache.post[l + 1][static_cast<std::size_t>(o)],
            spec_.activation);
      }
    }
    const auto& x = cache.post[l];
    double* gw = grad.data() + w_offset_[l];
    double* gb = grad.data() + b_offset_[l];
    const double* w = params_.data() + w_offset_[l];
    std::vector<double> dx(static_cast<std::size_t>(in), 0.0);
    for (int o = 0; o < out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      gb[o] += d;
      double* gwr = gw + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      const double* wr = w + static_cast<std::size_t>(o) * static_cast<std::size_t>(in);
      for (int i = 0; i < in; ++i) {
        gwr[i] += d * x[static_cast<std::size_t>(i)];
        dx[static_cast<std::size_t>(i)] += d * wr[i];
      }
    }
    delta = std::move(dx);
  }
  return delta;
}

MultiHeadPolicyNet::MultiHeadPolicyNet(int input_dim, const std::vector<int>& hidden, int n_actions,
                                       int K, MlpSpec::Act activation) {
  if (K < 1) {
    throw InternalError("MultiHeadPolicyNet: K must be >= 1");
  }
  if (hidden.empty()) {
    throw InternalError("MultiHeadPolicyNet: shared body needs at least one hidden layer");
  }
  MlpSpec body_spec;
  body_spec.input_dim = input_dim;
  body_spec.hidden.assign(hidden.begin(), hidden.end() - 1);
  body_spec.output_dim = hidden.back();
  body_spec.activation = activation;
  body_spec.activate_output = true;  // body output is the shared representation
  body_ = Mlp(body_spec);
  MlpSpec head_spec;
  head_spec.input_dim = hidden.back();
  head_spec.output_dim = n_actions;
  head_spec.activation = activation;
  head_spec.activate_output = false;  // heads emit raw logits
  heads_.assign(static_cast<std::size_t>(K), Mlp(head_spec));
}

void MultiHeadPolicyNet::init(Rng& rng) {
  body_.init(rng);
  for (auto& h : heads_) {
    h.init(rng);
  }
}

int MultiHeadPolicyNet::n_actions() const {
  return heads_.empty() ? 0 : heads_.front().spec().output_dim;
}

MultiHeadPolicyNet::Cache MultiHeadPolicyNet::forward_body(const std::vector<double>& input) const {
  Cache cache;
  cache.input = input;
  cache.body = body_.forward_cached(input);
  return cache;
}

std::vector<double> MultiHeadPolicyNet::head_logits(int k, const Cache& cache) const {
  return heads_[static_cast<std::size_t>(k)].forward(cache.body.post.back());
}

std::vector<double> MultiHeadPolicyNet::logits(int k, const std::vector<double>& input) const {
  return heads_[static_cast<std::size_t>(k)].forward(body_.forward(input));
}

void MultiHeadPolicyNet::backward_head(int k, const Cache& cache,
                                       const std::vector<double>& grad_logits,
                                       std::vector<double>& grad_body,
                                       std::vector<double>& grad_head) const {
  const Mlp& head = heads_[static_cast<std::size_t>(k)];
  const Mlp::Cache head_cache = head.forward_cached(cache.body.post.back());
  const std::vector<double> grad_rep = head.backward(head_cache, grad_logits, grad_head);
  body_.backward(cache.body, grad_rep, grad_body);
}

void AdamState::init(std::size_t n, double learning_rate) {
  lr = learning_rate;
  step = 0;
  m.assign(n, 0.0);
  v.assign(n, 0.0);
}

void AdamState::apply(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != m.size() || grad.size() != m.size()) {
    throw InternalError("AdamState::apply: shape mismatch");
  }
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

LossValue expectile_loss(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InternalError("expectile_loss: tau must lie in (0, 1)");
  }
  const double w = u < 0.0 ? 1.0 - tau : tau;  // |tau - 1(u<0)|
  return {w * u * u, 2.0 * w * u};
}

std::vector<double> softmax(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& p : out) {
    p /= sum;
  }
  return out;
}

double log_prob(const std::vector<double>& logits, int action) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double l : logits) {
    sum += std::exp(l - mx);
  }
  return logits[static_cast<std::size_t>(action)] - mx - std::log(sum);
}

std::vector<double> log_prob_grad(const std::vector<double>& logits, int action) {
  std::vector<double> g = softmax(logits);
  for (double& p : g) {
    p = -p;
  }
  g[static_cast<std::size_t>(action)] += 1.0;
  return g;
}

double soft_value(const std::vector<double>& logits, const std::vector<double>& q, double alpha,
                  std::vector<double>* grad) {
  if (logits.size() != q.size()) {
    throw InternalError("soft_value: logits/q size mismatch");
  }
  const std::vector<double> p = softmax(logits);
  // x_a = q[a] - alpha * log p_a; E = sum p_a x_a; dE/dl_j = p_j (x_j - E).
  // (The d log p / d logits contribution cancels: sum_a p_a d log p_a = 0.)
  std::vector<double> x(p.size());
  double e = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] > 0.0) {
      x[a] = q[a] - alpha * std::log(p[a]);
      e += p[a] * x[a];
    } else {
      x[a] = 0.0;  // p log p -> 0 in the limit; the term contributes nothing
    }
  }
  if (grad != nullptr) {
    grad->assign(p.size(), 0.0);
    for (std::size_t a = 0; a < p.size(); ++a) {
      (*grad)[a] = p[a] * (x[a] - e);
    }
  }
  return e;
}

int encoding_dim(int n_states) { return n_states + 1; }

std::vector<double> encode_state(int s, int t, int n_states, int horizon) {
  std::vector<double> x(static_cast<std::size_t>(n_states) + 1, 0.0);
  x[static_cast<std::size_t>(s)] = 1.0;
  x.back() = static_cast<double>(t) / static_cast<double>(horizon);
  return x;
}

std::string mlp_to_json(const Mlp& net) {
  JsonWriter w;
  w.begin_object();
  w.key("activation").value(net.spec().activation == MlpSpec::Act::relu ? "relu" : "tanh");
  w.key("activate_output").value(net.spec().activate_output);
  w.key("hidden").int_array(net.spec().hidden);
  w.key("input_dim").value(net.spec().input_dim);
  w.key("output_dim").value(net.spec().output_dim);
  w.key("params").real_array(net.params());
  w.end_object();
  return w.str();
}

Mlp mlp_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("network checkpoint: not valid JSON: ") + e.what());
  }
  MlpSpec spec;
  try {
    const std::string act = j.at("activation").get<std::string>();
    spec.activation = act == "tanh" ? MlpSpec::Act::tanh : MlpSpec::Act::relu;
    spec.activate_output = j.at("activate_output").get<bool>();
    spec.hidden = j.at("hidden").get<std::vector<int>>();
    spec.input_dim = j.at("input_dim").get<int>();
    spec.output_dim = j.at("output_dim").get<int>();
    Mlp net(spec);
    const auto params = j.at("params").get<std::vector<double>>();
    if (params.size() != net.n_params()) {
      throw SchemaError("network checkpoint: parameter count mismatch");
    }
    net.params() = params;
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("network checkpoint: malformed field: ") + e.what());
  }
}

}  // namespace capsrl
