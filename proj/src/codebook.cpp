#include "infocon/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace infocon {

Codebook Codebook::random(const CodebookConfig& cfg, int latent_dim, int param_dim, nn::Rng& rng) {
  if (cfg.num_concepts < 1) throw std::invalid_argument("codebook needs at least one concept");
  if (!(cfg.tau > 0)) throw std::invalid_argument("codebook temperature must be positive");
  if (!(cfg.c_ema > 0 && cfg.c_ema < 1)) throw std::invalid_argument("EMA coefficient must lie in (0, 1)");
  Codebook cb;
  cb.alpha.value = nn::random_normal(cfg.num_concepts, latent_dim, 1.0, rng);
  cb.alpha.value.rowwise().normalize();
  cb.alpha.name = "codebook.alpha";
  cb.alpha.decay = false;
  cb.alpha.zero_grad();
  cb.p.name = "codebook.p";
  cb.p.value = nn::random_normal(cfg.num_concepts, param_dim, 0.02, rng);
  cb.p.decay = true;
  cb.p.zero_grad();
  cb.tau = cfg.tau;
  cb.c_ema = cfg.c_ema;
  return cb;
}

ad::Var assign_probs(const ad::Var& z, const Matrix& alpha, double tau) {
  ad::Tape& tape = *z.tape();
  Matrix unit_alpha = alpha.rowwise().normalized();
  ad::Var cos = ad::matmul_nt(ad::row_normalize(z), tape.constant(std::move(unit_alpha)));
  return ad::softmax_rows(ad::scale(cos, 1.0 / tau));
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> idx(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    idx[i] = static_cast<int>(best);
  }
  return idx;
}

int ema_update(Matrix& alpha, const Matrix& latents, const std::vector<int>& hard, double c_ema) {
  if (static_cast<Eigen::Index>(hard.size()) != latents.rows()) throw std::invalid_argument("ema_update: one index per latent");
  if (latents.cols() != alpha.cols()) throw std::invalid_argument("ema_update: latent dimension mismatch");
  const Eigen::Index k = alpha.rows();
  Matrix sums = Matrix::Zero(k, alpha.cols());
  std::vector<int> counts(k, 0);
  for (std::size_t i = 0; i < hard.size(); ++i) {
    if (hard[i] < 0 || hard[i] >= k) throw std::out_of_range("ema_update: assignment index outside codebook");
    sums.row(hard[i]) += latents.row(i);
    ++counts[hard[i]];
  }
  int updated = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (counts[j] == 0) continue;
    const double n = sums.row(j).norm();
    if (!(n > 0.0)) continue;
    Vector mixed = c_ema * alpha.row(j).transpose() + (1.0 - c_ema) * (sums.row(j).transpose() / n);
    const double mn = mixed.norm();
    if (!(mn > 0.0)) continue;
    alpha.row(j) = (mixed / mn).transpose();
    ++updated;
  }
  return updated;
}

Matrix straight_through_offset(const Matrix& probs, const Matrix& table, const std::vector<int>& hard) {
  Matrix off = -(probs * table);
  for (std::size_t i = 0; i < hard.size(); ++i) off.row(i) += table.row(hard[i]);
  return off;
}

Selection straight_through_select(const ad::Var& probs, const std::vector<int>& hard, const Codebook& cb,
                                  const Matrix* frozen_alpha_offset, const Matrix* frozen_p_offset) {
  for (int h : hard)
    if (h < 0 || h >= cb.size()) throw std::out_of_range("straight_through_select: index outside codebook");
  return {ad::straight_through(probs, cb.alpha.value, hard, frozen_alpha_offset),
          ad::straight_through(probs, cb.p.value, hard, frozen_p_offset)};
}

std::vector<int> active_concepts(const std::vector<int>& hard, int num_concepts) {
  std::vector<char> seen(num_concepts, 0);
  for (int h : hard) seen.at(h) = 1;
  std::vector<int> out;
  for (int k = 0; k < num_concepts; ++k)
    if (seen[k]) out.push_back(k);
  return out;
}

namespace {

// Weight matrix W with W(t, k) = 1 / (K * |{t : hard[t] = k}|) at assigned
// entries, so that -sum(W .* log P) is the confidence loss.
Matrix entropy_weights(Eigen::Index rows, Eigen::Index k, const std::vector<int>& hard, bool full_k) {
  std::vector<int> counts(k, 0);
  for (int h : hard) ++counts.at(h);
  const auto active = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; });
  const double denom_k = full_k ? static_cast<double>(k) : static_cast<double>(active);
  Matrix w = Matrix::Zero(rows, k);
  if (denom_k == 0) return w;
  for (std::size_t t = 0; t < hard.size(); ++t) w(t, hard[t]) = 1.0 / (denom_k * counts[hard[t]]);
  return w;
}

}  // namespace

ad::Var assignment_entropy_loss(const ad::Var& probs, const std::vector<int>& hard, bool full_k) {
  if (static_cast<Eigen::Index>(hard.size()) != probs.rows()) throw std::invalid_argument("entropy loss: one index per row");
  const Matrix w = entropy_weights(probs.rows(), probs.cols(), hard, full_k);
  return ad::scale(ad::weighted_sum(ad::log(ad::clamp(probs, 1e-7, 1.0)), w), -1.0);
}

double assignment_entropy_loss(const Matrix& probs, const std::vector<int>& hard, bool full_k) {
  if (static_cast<Eigen::Index>(hard.size()) != probs.rows()) throw std::invalid_argument("entropy loss: one index per row");
  const Matrix w = entropy_weights(probs.rows(), probs.cols(), hard, full_k);
  return -(w.array() * probs.array().max(1e-7).log()).sum();
}

}  // namespace infocon
