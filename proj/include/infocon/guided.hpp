#pragma once

// Downstream check of discovered key states: a causal sequence policy with an
// action head and a next-key-state head. The action head reads the predicted
// key state, so the labels act as guidance. With key_weight = 0 the same
// network is an action-only twin.

#include "infocon/evallab.hpp"
#include "infocon/nn.hpp"
#include "infocon/synthdata.hpp"

#include <cstdint>
#include <memory>

namespace infocon {

struct PolicyConfig {
  int model_dim = 32;
  int num_layers = 2;
  int num_heads = 4;
  int window_len = 60;
  int max_len = 256;
  int iters = 1500;
  int batch_size = 16;
  double base_lr = 1e-3;
  int warmup_iters = 100;
  double weight_decay = 1e-3;
  double key_weight = 1.0;
  std::uint64_t seed = 0;
};

class GuidedPolicy {
 public:
  GuidedPolicy(const PolicyConfig& cfg, int state_dim, int action_dim);
  GuidedPolicy(const GuidedPolicy&) = delete;
  GuidedPolicy& operator=(const GuidedPolicy&) = delete;

  struct Output {
    ad::Var action;  // N x D_a, normalised
    ad::Var key;     // N x D_s, normalised
  };
  Output operator()(ad::Tape& tape, const Batch& batch) const;

  // Normalised action for the last row of a normalised history.
  Vector act(const Matrix& states, const Matrix& actions_so_far) const;

  const PolicyConfig& config() const { return cfg_; }
  nn::ParamStore store;

 private:
  PolicyConfig cfg_;
  int state_dim_, action_dim_;
  nn::CausalTransformer trunk_;
  nn::Linear key_head_, act_hidden_, act_out_;
};

struct PolicyTrainLog {
  double first_action_loss = 0, last_action_loss = 0, last_key_loss = 0;
};

// Trains on a normalised dataset. Key targets are the states at the next
// labelled key time >= t.
std::unique_ptr<GuidedPolicy> train_guided_policy(const synth::Dataset& data, const LabelSet& labels,
                                                  const PolicyConfig& cfg, PolicyTrainLog* log = nullptr);

// Fraction of `episodes` seeded rollouts from fresh initial states that end
// within the final waypoint's arrival radius. `data` supplies the task spec
// and normalisation statistics.
double evaluate_guided_policy(const GuidedPolicy& policy, const synth::Dataset& data, int episodes,
                              std::uint64_t seed);

}  // namespace infocon
