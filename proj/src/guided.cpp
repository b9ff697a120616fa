#include "infocon/guided.hpp"

#include "infocon/losses.hpp"
#include "infocon/optimizer.hpp"
#include "infocon/parallel.hpp"

#include <algorithm>
#include <stdexcept>

namespace infocon {

GuidedPolicy::GuidedPolicy(const PolicyConfig& cfg, int state_dim, int action_dim)
    : cfg_(cfg), state_dim_(state_dim), action_dim_(action_dim) {
  nn::Rng rng(synth::mix_seed(cfg.seed, 0x90a1));
  nn::TransformerConfig tc;
  tc.input_dim = state_dim + action_dim;
  tc.model_dim = cfg.model_dim;
  tc.output_dim = cfg.model_dim;
  tc.num_layers = cfg.num_layers;
  tc.num_heads = cfg.num_heads;
  tc.max_len = cfg.max_len;
  trunk_ = nn::CausalTransformer(store, "guided.trunk", tc, rng);
  key_head_ = nn::Linear(store, "guided.key_head", cfg.model_dim, state_dim, rng);
  act_hidden_ = nn::Linear(store, "guided.act_hidden", cfg.model_dim + state_dim, cfg.model_dim, rng);
  act_out_ = nn::Linear(store, "guided.act_out", cfg.model_dim, action_dim, rng);
}

GuidedPolicy::Output GuidedPolicy::operator()(ad::Tape& tape, const Batch& batch) const {
  Matrix tokens(batch.rows(), state_dim_ + action_dim_);
  tokens << batch.states, batch.prev_actions;
  ad::Var h = trunk_(tape, tape.constant(std::move(tokens)), batch.layout, batch.positions);
  Output out;
  out.key = key_head_(tape, h);
  out.action = act_out_(tape, ad::gelu(act_hidden_(tape, ad::concat_cols({h, out.key}))));
  return out;
}

Vector GuidedPolicy::act(const Matrix& states, const Matrix& actions_so_far) const {
  const int t_len = static_cast<int>(states.rows());
  if (t_len < 1) throw std::invalid_argument("policy: empty history");
  if (actions_so_far.rows() != t_len - 1) throw std::invalid_argument("policy: need one action per past step");
  const int start = std::max(0, t_len - cfg_.window_len);
  const int len = t_len - start;
  Batch b;
  b.layout = ad::SeqLayout::single(len);
  b.states = states.middleRows(start, len);
  b.prev_actions.resize(len, action_dim_);
  for (int r = 0; r < len; ++r) {
    const int t = start + r;
    if (t == 0)
      b.prev_actions.row(r).setZero();
    else
      b.prev_actions.row(r) = actions_so_far.row(t - 1);
    b.positions.push_back(t);
    b.full_length.push_back(t_len);
  }
  b.traj_index = {0};
  b.window_start = {start};
  ad::Tape tape(false);
  return (*this)(tape, b).action.value().row(len - 1).transpose();
}

std::unique_ptr<GuidedPolicy> train_guided_policy(const synth::Dataset& data, const LabelSet& labels,
                                                  const PolicyConfig& cfg, PolicyTrainLog* log) {
  if (!data.normalized) throw std::invalid_argument("guided policy: dataset must be normalised");
  validate_labels(labels, data);
  auto policy = std::make_unique<GuidedPolicy>(cfg, data.state_dim(), data.action_dim());
  // Next key state per step of every trajectory.
  std::vector<Matrix> key_states(data.trajectories.size());
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& t = data.trajectories[i];
    const auto& keys = labels.trajectories[i].key_times;
    key_states[i].resize(t.length(), t.states.cols());
    std::size_t k = 0;
    for (int s = 0; s < t.length(); ++s) {
      while (keys[k] < s) ++k;
      key_states[i].row(s) = t.states.row(keys[k]);
    }
  }

  nn::Rng rng(synth::mix_seed(cfg.seed, 0xba7c4));
  AdamW opt(policy->store.all(), {.weight_decay = cfg.weight_decay});
  WarmupCosine lr(cfg.base_lr, cfg.warmup_iters, cfg.iters);
  const int n = static_cast<int>(data.trajectories.size());
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int it = 0; it < cfg.iters; ++it) {
    std::vector<int> ids(cfg.batch_size), starts(cfg.batch_size);
    for (int i = 0; i < cfg.batch_size; ++i) {
      ids[i] = pick(rng);
      const int t_len = data.trajectories[ids[i]].length();
      starts[i] = t_len > cfg.window_len ? std::uniform_int_distribution<int>(0, t_len - cfg.window_len)(rng) : 0;
    }
    const Batch b = make_batch(data.trajectories, ids, starts, cfg.window_len);
    Matrix key_target(b.rows(), b.states.cols());
    for (int s = 0; s < b.num_sequences(); ++s)
      key_target.middleRows(b.offset(s), b.length(s)) = key_states[ids[s]].middleRows(starts[s], b.length(s));

    ad::Tape tape(true);
    const auto out = (*policy)(tape, b);
    ad::Var action_loss = mean_squared_error(out.action, b.actions, b.layout);
    ad::Var loss = action_loss;
    ad::Var key_loss;
    if (cfg.key_weight > 0) {
      key_loss = mean_squared_error(out.key, key_target, b.layout);
      loss = loss + ad::scale(key_loss, cfg.key_weight);
    }
    if (log) {
      if (it == 0) log->first_action_loss = action_loss.scalar();
      log->last_action_loss = action_loss.scalar();
      log->last_key_loss = key_loss.valid() ? key_loss.scalar() : 0.0;
    }
    policy->store.zero_grad();
    tape.backward(loss);
    opt.step(lr(it));
  }
  return policy;
}

double evaluate_guided_policy(const GuidedPolicy& policy, const synth::Dataset& data, int episodes,
                              std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  const auto& spec = data.spec;
  const auto& st = data.stats;
  std::vector<char> success(episodes, 0);
  parallel_for(static_cast<std::size_t>(episodes), [&](std::size_t e) {
    Vector state = synth::sample_initial_state(spec, synth::mix_seed(seed, e));
    std::vector<Vector> norm_states;
    std::vector<Vector> norm_actions;
    for (int t = 0; t + 1 < spec.max_steps; ++t) {
      norm_states.push_back((state - st.state_mean).cwiseQuotient(st.state_std));
      Matrix hs(norm_states.size(), state.size());
      for (std::size_t i = 0; i < norm_states.size(); ++i) hs.row(i) = norm_states[i].transpose();
      Matrix ha(norm_actions.size(), st.action_mean.size());
      for (std::size_t i = 0; i < norm_actions.size(); ++i) ha.row(i) = norm_actions[i].transpose();
      const Vector a_norm = policy.act(hs, ha);
      const Vector a = a_norm.cwiseProduct(st.action_std) + st.action_mean;
      const Vector next = synth::env_step(state, a, spec);
      // Feed back the displacement actually applied, as in the demonstrations.
      Vector applied = next.head(2) - state.head(2);
      norm_actions.push_back((applied - st.action_mean).cwiseQuotient(st.action_std));
      state = next;
      if (synth::rollout_success(state, spec)) {
        success[e] = 1;
        break;
      }
    }
  });
  const auto wins = std::count(success.begin(), success.end(), 1);
  return static_cast<double>(wins) / episodes;
}

}  // namespace infocon
