#pragma once

// Concept codebook: cosine-softmax assignment, EMA prototype updates,
// straight-through selection and the assignment-confidence loss.

#include "infocon/autodiff.hpp"
#include "infocon/nn.hpp"

#include <vector>

namespace infocon {

using ad::Matrix;
using ad::Vector;

struct CodebookConfig {
  int num_concepts = 6;  // K
  double tau = 0.1;
  double c_ema = 0.9;
};

// Concept k is the pair (alpha.value.row(k), p.value.row(k)). Prototypes are
// unit vectors moved by EMA and by the direct gradient of the generative and
// reconstruction losses; p is trained by gradient.
struct Codebook {
  ad::Param alpha;  // K x (M+1), named "codebook.alpha", not decayed
  ad::Param p;      // K x L_p, named "codebook.p"
  double tau = 0.1;
  double c_ema = 0.9;

  int size() const { return static_cast<int>(alpha.value.rows()); }

  // Rescales every prototype to unit length.
  void renormalize() { alpha.value.rowwise().normalize(); }

  // alpha uniform on the unit sphere, p ~ N(0, 0.02^2).
  static Codebook random(const CodebookConfig& cfg, int latent_dim, int param_dim, nn::Rng& rng);
};

struct Assignment {
  Matrix probs;              // N x K, rows on the simplex
  std::vector<int> index;    // argmax per row, ties to the lowest index
};

// Cosine-similarity softmax against constant prototypes.
template <typename Derived>
Assignment assign(const Eigen::MatrixBase<Derived>& z, const Matrix& alpha, double tau) {
  Assignment a;
  const Eigen::Index n = z.rows();
  const Eigen::Index k = alpha.rows();
  Matrix logits = z.derived() * alpha.transpose();
  Vector zn = z.derived().rowwise().norm();
  Vector an = alpha.rowwise().norm();
  a.probs.resize(n, k);
  a.index.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) logits(i, j) /= (zn(i) * an(j) * tau);
    const double m = logits.row(i).maxCoeff();
    a.probs.row(i) = (logits.row(i).array() - m).exp();
    a.probs.row(i) /= a.probs.row(i).sum();
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < k; ++j)
      if (a.probs(i, j) > a.probs(i, best)) best = j;
    a.index[i] = static_cast<int>(best);
  }
  return a;
}

// Differentiable probabilities w.r.t. z (prototypes are constants).
ad::Var assign_probs(const ad::Var& z, const Matrix& alpha, double tau);
std::vector<int> argmax_rows(const Matrix& probs);

// alpha_k <- normalize(c * alpha_k + (1 - c) * normalize(mean of assigned latents)).
// Concepts with no assigned latent, or whose mean is the zero vector, are left
// unchanged. Returns the number of updated concepts.
int ema_update(Matrix& alpha, const Matrix& latents, const std::vector<int>& hard, double c_ema);

struct Selection {
  ad::Var alpha_eff;  // N x (M+1)
  ad::Var p_eff;      // N x L_p
};

// Forward: the hard-selected concept vectors. Backward: the soft mixture with
// stopped prototypes, so gradients reach only the assignment probabilities.
Selection straight_through_select(const ad::Var& probs, const std::vector<int>& hard, const Codebook& cb,
                                  const Matrix* frozen_alpha_offset = nullptr, const Matrix* frozen_p_offset = nullptr);

// Offsets hard - soft at the current point, for the smooth surrogate.
Matrix straight_through_offset(const Matrix& probs, const Matrix& table, const std::vector<int>& hard);

// -(1/K) sum_k mean_{t assigned to k} log probs[t][k]. K counts concepts present
// in `hard` unless `full_k` is set, in which case it is the codebook size.
ad::Var assignment_entropy_loss(const ad::Var& probs, const std::vector<int>& hard, bool full_k = false);
double assignment_entropy_loss(const Matrix& probs, const std::vector<int>& hard, bool full_k = false);

// Distinct concept ids in ascending order.
std::vector<int> active_concepts(const std::vector<int>& hard, int num_concepts);

}  // namespace infocon
