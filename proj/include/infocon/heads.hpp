#pragma once

// Learned heads: the key-state predictor, the hyper-network that decodes a
// concept's compressed parameters into a compatibility function, and the
// policy driven by the gradient of that function.

#include "infocon/autodiff.hpp"
#include "infocon/batch.hpp"
#include "infocon/nn.hpp"

#include <vector>

namespace infocon {

struct HyperNetConfig {
  int num_hidden_layers = 1;  // H
  int hidden_width = 16;      // W_c
  int probe_dim = 16;         // must equal hidden_width
  int hn_width = 32;          // width of the per-segment HN^w layers
  double tau = 0.1;

  int segment_len() const { return hidden_width; }
  int param_dim() const { return (num_hidden_layers + 1) * segment_len(); }  // L_p
  void validate() const;
};

struct HeadConfig {
  int num_layers = 1;
  int num_heads = 4;
};

// Compatibility function C^p(s) in (0, 1):
//   W_i, b_i = HN^p(tanh(HN^w_i(segment_i(p))))      for i < H
//   h_0 = s, h_i = tanh(W_i h_{i-1} + b_i)
//   C = sigmoid(cos(h_H, probe(p)) / tau),  probe(p) = last segment of p
class HyperNet {
 public:
  HyperNet() = default;
  HyperNet(nn::ParamStore& store, const HyperNetConfig& cfg, int state_dim, nn::Rng& rng);

  struct Generated {
    std::vector<ad::Var> weights;  // N x (W_c * in_i), row-major out x in
    std::vector<ad::Var> biases;   // N x W_c
    ad::Var probe;                 // N x W_c
  };
  Generated generate(ad::Tape& tape, const ad::Var& p_rows) const;
  // Row-gather of a generated set (e.g. K concepts expanded to N states).
  static Generated gather(const Generated& g, const std::vector<int>& rows);

  struct Eval {
    ad::Var score;  // N x 1
    ad::Var grad;   // N x D_s, dC/ds as a differentiable expression (when requested)
  };
  Eval evaluate(const Generated& g, const ad::Var& s, bool with_grad) const;

  // Frozen-parameter conveniences for a single (p, s).
  double compat_score(const Vector& p, const Vector& s) const;
  Vector compat_grad(const Vector& p, const Vector& s) const;

  const HyperNetConfig& config() const { return cfg_; }
  int state_dim() const { return state_dim_; }
  int layer_input(int i) const { return i == 0 ? state_dim_ : cfg_.hidden_width; }

 private:
  HyperNetConfig cfg_;
  int state_dim_ = 0;
  int max_input_ = 0;
  std::vector<nn::Linear> hn_w_;
  nn::Linear hn_p_;
};

// theta^g: predicts the key state of the current segment from
// tokens [s_t, alpha_t, a_{t-1}].
class KeyStatePredictor {
 public:
  KeyStatePredictor() = default;
  KeyStatePredictor(nn::ParamStore& store, const HeadConfig& cfg, int model_dim, int max_len, int state_dim,
                    int concept_dim, int action_dim, nn::Rng& rng);
  ad::Var operator()(ad::Tape& tape, const Batch& batch, const ad::Var& alpha_eff) const;

 private:
  nn::CausalTransformer net_;
};

// pi: predicts a_t from tokens [s_t, dC/ds at s_t, a_{t-1}].
class ConceptPolicy {
 public:
  ConceptPolicy() = default;
  ConceptPolicy(nn::ParamStore& store, const HeadConfig& cfg, int model_dim, int max_len, int state_dim, int action_dim,
                nn::Rng& rng);
  ad::Var operator()(ad::Tape& tape, const Batch& batch, const ad::Var& compat_grad) const;

 private:
  nn::CausalTransformer net_;
};

}  // namespace infocon
