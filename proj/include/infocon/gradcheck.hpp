#pragma once

// Central finite differences against the tape's analytic gradients.

#include "infocon/batch.hpp"
#include "infocon/losses.hpp"
#include "infocon/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace infocon {

// d f / d x by central differences, perturbing each entry of x in place.
Matrix numeric_gradient(const std::function<double()>& f, Matrix& x, double step);

// |a - n| / max(|a|, |n|) in the Frobenius norm; 0 when both vanish.
double relative_error(const Matrix& analytic, const Matrix& numeric);

struct GroupCheck {
  std::string group;
  double rel_error = 0;
  double analytic_norm = 0;
  std::size_t scalars = 0;
};

// Checks the gradient of the weighted objective on `batch` (whole
// trajectories) w.r.t. every parameter group: encoder, decoder, genhead,
// hypernet, policy, codebook.alpha and codebook.p. Assignments, key targets and the
// straight-through surrogate are frozen at the base point.
std::vector<GroupCheck> check_loss_gradients(InfoConModel& model, const Batch& batch, const LossWeights& weights,
                                             double step = 1e-4);

}  // namespace infocon
