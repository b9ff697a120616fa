#include "infocon/losses.hpp"

#include <stdexcept>

namespace infocon {

namespace {
constexpr double kLogEps = 1e-7;

void compat_weights(Eigen::Index n, const std::vector<int>& hard, const std::vector<int>& active, Matrix& w_pos,
                    Matrix& w_neg) {
  const Eigen::Index ka = static_cast<Eigen::Index>(active.size());
  w_pos = Matrix::Zero(ka * n, 1);
  w_neg = Matrix::Zero(ka * n, 1);
  if (ka == 0) return;
  for (Eigen::Index j = 0; j < ka; ++j) {
    Eigen::Index pos = 0;
    for (int h : hard) pos += (h == active[j]);
    const Eigen::Index neg = n - pos;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (hard[r] == active[j])
        w_pos(j * n + r, 0) = 1.0 / (static_cast<double>(ka) * static_cast<double>(pos));
      else
        w_neg(j * n + r, 0) = 1.0 / (static_cast<double>(ka) * static_cast<double>(neg));
    }
  }
}
}  // namespace

std::vector<int> key_state_targets(const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  std::vector<int> out(n);
  int end = n - 1;
  for (int t = n - 1; t >= 0; --t) {
    if (t < n - 1 && labels[t] != labels[t + 1]) end = t;
    out[t] = end;
  }
  return out;
}

std::vector<int> run_ends(const std::vector<int>& labels) {
  std::vector<int> out;
  const int n = static_cast<int>(labels.size());
  for (int t = 0; t < n; ++t)
    if (t == n - 1 || labels[t] != labels[t + 1]) out.push_back(t);
  return out;
}

Matrix sequence_weights(const ad::SeqLayout& layout) {
  Matrix w(layout.total_rows(), 1);
  const double s = static_cast<double>(layout.offsets.size());
  for (std::size_t i = 0; i < layout.offsets.size(); ++i)
    w.middleRows(layout.offsets[i], layout.lengths[i]).setConstant(1.0 / (s * layout.lengths[i]));
  return w;
}

ad::Var mean_squared_error(const ad::Var& pred, const Matrix& target, const ad::SeqLayout& layout) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("mean_squared_error: shape mismatch");
  ad::Tape& tape = *pred.tape();
  ad::Var diff = pred - tape.constant(target);
  return ad::weighted_sum(ad::row_sum(ad::square(diff)), sequence_weights(layout));
}

ad::Var mean_error_norm(const ad::Var& pred, const Matrix& target, const ad::SeqLayout& layout, bool squared) {
  if (squared) return mean_squared_error(pred, target, layout);
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("mean_error_norm: shape mismatch");
  ad::Tape& tape = *pred.tape();
  return ad::weighted_sum(ad::row_norm(pred - tape.constant(target)), sequence_weights(layout));
}

ad::Var compat_cross_entropy(const ad::Var& scores, const std::vector<int>& hard, const std::vector<int>& active) {
  const Eigen::Index n = static_cast<Eigen::Index>(hard.size());
  if (scores.rows() != n * static_cast<Eigen::Index>(active.size()) || scores.cols() != 1)
    throw std::invalid_argument("compat_cross_entropy: expected one score per (concept, row)");
  Matrix w_pos, w_neg;
  compat_weights(n, hard, active, w_pos, w_neg);
  ad::Var log_pos = ad::log(ad::clamp(scores, kLogEps, 1.0 - kLogEps));
  ad::Var log_neg = ad::log(ad::clamp(ad::add_scalar(-scores, 1.0), kLogEps, 1.0 - kLogEps));
  return -(ad::weighted_sum(log_pos, w_pos) + ad::weighted_sum(log_neg, w_neg));
}

double compat_cross_entropy(const Matrix& scores, const std::vector<int>& hard, const std::vector<int>& active) {
  const Eigen::Index n = static_cast<Eigen::Index>(hard.size());
  if (scores.rows() != n * static_cast<Eigen::Index>(active.size()) || scores.cols() != 1)
    throw std::invalid_argument("compat_cross_entropy: expected one score per (concept, row)");
  Matrix w_pos, w_neg;
  compat_weights(n, hard, active, w_pos, w_neg);
  const auto c = scores.array().max(kLogEps).min(1.0 - kLogEps);
  return -((w_pos.array() * c.log()).sum() + (w_neg.array() * (1.0 - c).log()).sum());
}

LossWeights LossWeights::main_phase(const TrainConfig& cfg, int iteration) {
  LossWeights w;
  const bool deferred = static_cast<double>(iteration) < cfg.gen_defer_fraction * cfg.total_iters;
  w.gen = (cfg.ablation != Ablation::kDisOnly && !deferred) ? 1.0 : 0.0;
  w.dis_a = cfg.ablation == Ablation::kGenOnly ? 0.0 : 1.0;
  w.dis_c = cfg.ablation == Ablation::kGenOnly ? 0.0 : cfg.lambda;
  w.ent = cfg.lambda;
  w.rec = cfg.lambda_rec;
  return w;
}

LossWeights LossWeights::pretraining(const TrainConfig& cfg) {
  LossWeights w;
  w.rec = 1.0;
  w.ent = cfg.lambda;
  return w;
}

SmoothSurrogate make_surrogate(const InfoConModel& model, const Matrix& probs, const std::vector<int>& hard) {
  SmoothSurrogate s;
  s.alpha_table = model.codebook.alpha.value;
  s.p_table = model.codebook.p.value;
  s.alpha_offset = straight_through_offset(probs, model.codebook.alpha.value, hard);
  s.p_offset = straight_through_offset(probs, s.p_table, hard);
  return s;
}

LossTerms compute_losses(ad::Tape& tape, InfoConModel& model, const LossInputs& in) {
  if (in.batch == nullptr) throw std::invalid_argument("compute_losses: missing batch");
  const Batch& b = *in.batch;
  const TrainConfig& cfg = model.config();
  const LossWeights& w = in.weights;
  if (static_cast<int>(in.hard.size()) != b.rows()) throw std::invalid_argument("compute_losses: one concept per row");
  for (int h : in.hard)
    if (h < 0 || h >= model.codebook.size()) throw std::out_of_range("compute_losses: concept index outside codebook");

  LossTerms out;
  const auto enc = model.encoder(tape, b);
  const SmoothSurrogate* sur = in.surrogate;
  ad::Var probs = assign_probs(enc.z, sur ? sur->alpha_table : model.codebook.alpha.value, model.codebook.tau);
  out.probs = probs.value();
  const Matrix& alpha_table = sur ? sur->alpha_table : model.codebook.alpha.value;
  ad::Var alpha_eff = ad::straight_through(probs, alpha_table, in.hard, sur ? &sur->alpha_offset : nullptr);
  if (w.rec > 0 || w.gen > 0) {
    // Same split as for p below: alpha_k takes the direct gradient.
    Matrix alpha_hard(b.rows(), alpha_table.cols());
    for (int r = 0; r < b.rows(); ++r) alpha_hard.row(r) = alpha_table.row(in.hard[r]);
    alpha_eff = ad::gather_rows(tape.param(model.codebook.alpha), in.hard) +
                (alpha_eff - tape.constant(std::move(alpha_hard)));
  }

  std::vector<std::pair<ad::Var, double>> terms;
  if (w.ent > 0) {
    ad::Var ent = assignment_entropy_loss(probs, in.hard, cfg.entropy_full_k);
    out.ent = ent.scalar();
    terms.emplace_back(ent, w.ent);
  }
  if (w.rec > 0) {
    ad::Var rec = mean_error_norm(model.decoder(tape, alpha_eff, b), b.states, b.layout, cfg.square_rec);
    out.rec = rec.scalar();
    terms.emplace_back(rec, w.rec);
  }
  if (w.gen > 0) {
    if (in.key_states.rows() != b.rows()) throw std::invalid_argument("compute_losses: one key state per row");
    ad::Var gen = mean_squared_error(model.genhead(tape, b, alpha_eff), in.key_states, b.layout);
    out.gen = gen.scalar();
    terms.emplace_back(gen, w.gen);
  }
  if (w.dis_c > 0 || w.dis_a > 0) {
    const int n = b.rows();
    ad::Var p_all = tape.param(model.codebook.p);
    if (w.dis_c > 0) {
      const auto active = active_concepts(in.hard, model.codebook.size());
      const auto per_concept = model.hypernet.generate(tape, ad::gather_rows(p_all, active));
      std::vector<int> rows;
      rows.reserve(active.size() * n);
      Matrix tiled(static_cast<Eigen::Index>(active.size()) * n, b.states.cols());
      for (std::size_t j = 0; j < active.size(); ++j) {
        tiled.middleRows(static_cast<Eigen::Index>(j) * n, n) = b.states;
        for (int r = 0; r < n; ++r) rows.push_back(static_cast<int>(j));
      }
      const auto expanded = HyperNet::gather(per_concept, rows);
      ad::Var scores = model.hypernet.evaluate(expanded, tape.constant(std::move(tiled)), false).score;
      ad::Var dis_c = compat_cross_entropy(scores, in.hard, active);
      out.dis_c = dis_c.scalar();
      terms.emplace_back(dis_c, w.dis_c);
    }
    if (w.dis_a > 0) {
      const Matrix& p_table = sur ? sur->p_table : model.codebook.p.value;
      ad::Var p_sel = ad::straight_through(probs, p_table, in.hard, sur ? &sur->p_offset : nullptr);
      Matrix p_hard(n, p_table.cols());
      for (int r = 0; r < n; ++r) p_hard.row(r) = p_table.row(in.hard[r]);
      // Forward value is p_{k*}; p_k itself receives the direct gradient and
      // the assignment probabilities receive the straight-through one.
      ad::Var p_in = ad::gather_rows(p_all, in.hard) + (p_sel - tape.constant(std::move(p_hard)));
      const auto generated = model.hypernet.generate(tape, p_in);
      ad::Var grad = model.hypernet.evaluate(generated, tape.constant(b.states), true).grad;
      if (cfg.detach_compat_grad) grad = tape.constant(grad.value());
      ad::Var dis_a = mean_squared_error(model.policy(tape, b, grad), b.actions, b.layout);
      out.dis_a = dis_a.scalar();
      terms.emplace_back(dis_a, w.dis_a);
    }
  }

  if (terms.empty()) {
    out.total = tape.constant(Matrix::Zero(1, 1));
    return out;
  }
  out.total = ad::scale(terms[0].first, terms[0].second);
  for (std::size_t i = 1; i < terms.size(); ++i) out.total = out.total + ad::scale(terms[i].first, terms[i].second);
  return out;
}

}  // namespace infocon
