#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capsrl/rng.hpp"

namespace capsrl {

// Feed-forward network specification. Activation applies after every hidden
// layer; activate_output additionally applies it after the output layer (used
// by the shared policy body, whose output is the representation).
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  enum class Act { relu, tanh } activation = Act::relu;
  bool activate_output = false;
};

// Plain value-type MLP with manual backprop. Parameters are stored flat
// (per layer: weights row-major [out][in], then biases) so Adam and the
// checkpoint format can treat them as a single array.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(MlpSpec spec);

  // Uniform +/- sqrt(6/(fan_in+fan_out)) weights, zero biases.
  void init(Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  std::size_t n_params() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> forward(const std::vector<double>& input) const;

  // Forward pass retaining per-layer activations for backprop.
  struct Cache {
    std::vector<std::vector<double>> post;  // post[0] = input, post[L] = output
    std::vector<std::vector<double>> pre;   // pre-activation per layer
  };
  Cache forward_cached(const std::vector<double>& input) const;
  const std::vector<double>& output(const Cache& cache) const { return cache.post.back(); }

  // Accumulates dLoss/dParams into grad (same layout as params) given
  // dLoss/dOutput; returns dLoss/dInput for upstream (shared-body) chaining.
  std::vector<double> backward(const Cache& cache, const std::vector<double>& grad_output,
                               std::vector<double>& grad) const;

 private:
  MlpSpec spec_;
  std::vector<int> layer_in_, layer_out_;
  std::vector<std::size_t> w_offset_, b_offset_;
  std::vector<double> params_;
  bool layer_activated(std::size_t layer) const;
};

// Shared-backbone multi-head policy network: one body maps the state encoding
// to a representation consumed by K linear heads producing action logits.
// Head order is [pi_r, pi_1, ..., pi_{K-2}, pi_c].
class MultiHeadPolicyNet {
 public:
  MultiHeadPolicyNet() = default;
  MultiHeadPolicyNet(int input_dim, const std::vector<int>& hidden, int n_actions, int K,
                     MlpSpec::Act activation);
  void init(Rng& rng);

  int heads() const { return static_cast<int>(heads_.size()); }
  int n_actions() const;
  std::vector<double> logits(int k, const std::vector<double>& input) const;

  struct Cache {
    Mlp::Cache body;
    std::vector<double> input;
  };
  Cache forward_body(const std::vector<double>& input) const;
  std::vector<double> head_logits(int k, const Cache& cache) const;

  // Backprop one head's logit gradient: head parameters and, through the
  // representation, the shared body parameters.
  void backward_head(int k, const Cache& cache, const std::vector<double>& grad_logits,
                     std::vector<double>& grad_body, std::vector<double>& grad_head) const;

  Mlp& body() { return body_; }
  const Mlp& body() const { return body_; }
  Mlp& head(int k) { return heads_[static_cast<std::size_t>(k)]; }
  const Mlp& head(int k) const { return heads_[static_cast<std::size_t>(k)]; }

 private:
  Mlp body_;
  std::vector<Mlp> heads_;
};

// Standard bias-corrected Adam (beta1 0.9, beta2 0.999, eps-hat 1e-8).
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  std::vector<double> m, v;

  void init(std::size_t n, double learning_rate);
  void apply(std::vector<double>& params, const std::vector<double>& grad);
};

// Expectile loss L_tau(u) = |tau - 1(u<0)| * u^2 and its derivative in u.
// L_{0.5} is squared error / 2 exactly.
struct LossValue {
  double value = 0.0;
  double dvalue = 0.0;
};
LossValue expectile_loss(double u, double tau);

// Numerically stable softmax / log-softmax helpers.
std::vector<double> softmax(const std::vector<double>& logits);
double log_prob(const std::vector<double>& logits, int action);
// d log_prob(a) / d logits = onehot(a) - softmax(logits).
std::vector<double> log_prob_grad(const std::vector<double>& logits, int action);

// Entropy-regularized expected value of the categorical policy softmax(logits)
// under fixed per-action values q:
//   E = sum_a p_a * (q[a] - alpha * log p_a).
// If grad is non-null it receives dE/dlogits. Negative alpha flips the
// entropy term's sign (used by the cost critic's soft bootstrap).
double soft_value(const std::vector<double>& logits, const std::vector<double>& q, double alpha,
                  std::vector<double>* grad);

// State encoding realizing non-stationary Q with one network:
// one-hot(state) concatenated with t / horizon.
int encoding_dim(int n_states);
std::vector<double> encode_state(int s, int t, int n_states, int horizon);

// Checkpoint round trip: JSON header (spec, seed tag) + flat decimal
// parameter array, exact to the serialized precision.
std::string mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const std::string& text);

}  // namespace capsrl
