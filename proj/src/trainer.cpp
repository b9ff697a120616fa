#include "infocon/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace infocon {

Trainer::Trainer(InfoConModel& model, const synth::Dataset& data)
    : model_(model), data_(data), rng_(synth::mix_seed(model.config().seed, 0x7a11)) {
  if (data.trajectories.empty()) throw std::invalid_argument("trainer: empty dataset");
  if (data.state_dim() != model.state_dim() || data.action_dim() != model.action_dim())
    throw std::invalid_argument("trainer: dataset dimensions do not match the model");
  for (const auto& t : data.trajectories)
    if (t.length() > model.config().encoder.max_len)
      throw std::invalid_argument("trainer: trajectory of length " + std::to_string(t.length()) +
                                  " exceeds encoder.max_len; raise max_len");
}

Matrix Trainer::key_states_for(const Batch& b, const std::vector<int>& hard) const {
  Matrix keys(b.rows(), b.states.cols());
  for (int s = 0; s < b.num_sequences(); ++s) {
    const auto& traj = data_.trajectories[b.traj_index[s]];
    const int off = b.offset(s);
    const int len = b.length(s);
    std::vector<int> targets;
    if (b.window_start[s] == 0 && len == traj.length()) {
      targets = key_state_targets(std::vector<int>(hard.begin() + off, hard.begin() + off + len));
    } else {
      // Run ends may lie outside the window: label the whole trajectory.
      const auto full = key_state_targets(concept_ids(model_, traj));
      targets.assign(full.begin() + b.window_start[s], full.begin() + b.window_start[s] + len);
    }
    for (int r = 0; r < len; ++r) keys.row(off + r) = traj.states.row(targets[r]);
  }
  return keys;
}

Trainer::Sampled Trainer::sample(bool need_keys) {
  const int n = static_cast<int>(data_.trajectories.size());
  const int w = model_.config().window_len();
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> ids(model_.config().batch_size), starts(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ids[i] = pick(rng_);
    const int t_len = data_.trajectories[ids[i]].length();
    starts[i] = t_len > w ? std::uniform_int_distribution<int>(0, t_len - w)(rng_) : 0;
  }
  Sampled s;
  s.batch = make_batch(data_.trajectories, ids, starts, w);

  // Assign, move prototypes, then assign again with the moved prototypes.
  ad::Tape tape(false);
  const Matrix z = model_.encoder(tape, s.batch).z.value();
  const auto before = argmax_rows(concept_probs(model_, z));
  ema_update(model_.codebook.alpha.value, z, before, model_.codebook.c_ema);
  s.hard = argmax_rows(concept_probs(model_, z));
  if (need_keys) s.key_states = key_states_for(s.batch, s.hard);
  return s;
}

IterationLog Trainer::step(const Sampled& s, const LossWeights& w, AdamW& opt, double lr) {
  ad::Tape tape(true);
  LossInputs in;
  in.batch = &s.batch;
  in.hard = s.hard;
  in.key_states = s.key_states;
  in.weights = w;
  const LossTerms terms = compute_losses(tape, model_, in);
  IterationLog rec;
  rec.lr = lr;
  rec.total = terms.total.scalar();
  rec.gen = terms.gen;
  rec.dis_a = terms.dis_a;
  rec.dis_c = terms.dis_c;
  rec.ent = terms.ent;
  rec.rec = terms.rec;
  rec.active = static_cast<int>(active_concepts(s.hard, model_.codebook.size()).size());
  if (!std::isfinite(rec.total))
    throw TrainingDiverged("non-finite total loss at iteration " + std::to_string(done_) + " (gen=" +
                           std::to_string(rec.gen) + " dis_a=" + std::to_string(rec.dis_a) +
                           " dis_c=" + std::to_string(rec.dis_c) + " ent=" + std::to_string(rec.ent) +
                           " rec=" + std::to_string(rec.rec) + ")");
  model_.zero_grad();
  tape.backward(terms.total);
  rec.grad_norm = clip_grad_norm(opt.params(), model_.config().grad_clip);
  if (!std::isfinite(rec.grad_norm))
    throw TrainingDiverged("non-finite gradient norm at iteration " + std::to_string(done_));
  opt.step(lr);
  model_.codebook.renormalize();
  return rec;
}

void Trainer::pretrain() {
  const TrainConfig& cfg = model_.config();
  if (cfg.pretrain_iters == 0) return;
  AdamW opt(model_.trainable(), {.weight_decay = cfg.weight_decay});
  WarmupCosine lr(cfg.base_lr, cfg.warmup_iters, cfg.pretrain_iters);
  const LossWeights w = LossWeights::pretraining(cfg);
  for (int it = 0; it < cfg.pretrain_iters; ++it) {
    const Sampled s = sample(false);
    IterationLog rec = step(s, w, opt, lr(it));
    rec.phase = "pretrain";
    rec.iteration = it;
    log_.push_back(rec);
    ++done_;
    if (on_iteration) on_iteration(rec);
  }
}

void Trainer::train() {
  const TrainConfig& cfg = model_.config();
  if (cfg.total_iters == 0) return;
  AdamW opt(model_.trainable(), {.weight_decay = cfg.weight_decay});
  WarmupCosine lr(cfg.base_lr, cfg.warmup_iters, cfg.total_iters);
  for (int it = 0; it < cfg.total_iters; ++it) {
    const LossWeights w = LossWeights::main_phase(cfg, it);
    const Sampled s = sample(w.gen > 0);
    IterationLog rec = step(s, w, opt, lr(it));
    rec.phase = "train";
    rec.iteration = it;
    log_.push_back(rec);
    ++done_;
    if (on_iteration) on_iteration(rec);
  }
}

double Trainer::evaluate(const std::vector<int>& ids, const LossWeights& weights) {
  std::vector<int> starts(ids.size(), 0);
  const Batch b = make_batch(data_.trajectories, ids, starts, 0);
  ad::Tape tape(false);
  const Matrix z = model_.encoder(tape, b).z.value();
  LossInputs in;
  in.batch = &b;
  in.hard = argmax_rows(concept_probs(model_, z));
  in.key_states = key_states_for(b, in.hard);
  in.weights = weights;
  ad::Tape eval_tape(false);
  return compute_losses(eval_tape, model_, in).total.scalar();
}

int Trainer::dataset_active_concepts() const {
  std::set<int> seen;
  for (const auto& t : data_.trajectories)
    for (int k : concept_ids(model_, t)) seen.insert(k);
  return static_cast<int>(seen.size());
}

void Trainer::write_loss_csv(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error(file.string() + ": cannot write");
  out << "phase,iteration,lr,total,gen,dis_a,dis_c,ent,rec,grad_norm,active\n";
  char buf[512];
  for (const auto& r : log_) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", r.phase.c_str(), r.iteration,
                  r.lr, r.total, r.gen, r.dis_a, r.dis_c, r.ent, r.rec, r.grad_norm, r.active);
    out << buf;
  }
}

}  // namespace infocon
