#pragma once

// Loss terms of concept discovery and the combined objective.
//
// All per-timestep means are taken per sequence and then averaged over
// sequences, so a batch of windows of unequal length weighs each trajectory
// equally.

#include "infocon/batch.hpp"
#include "infocon/config.hpp"
#include "infocon/model.hpp"

#include <vector>

namespace infocon {

// For every t the last index u >= t of the run of equal labels containing t.
std::vector<int> key_state_targets(const std::vector<int>& labels);
// Last index of every run, ascending. Always ends with size - 1.
std::vector<int> run_ends(const std::vector<int>& labels);

// Row weights 1 / (S * len_s) for S sequences.
Matrix sequence_weights(const ad::SeqLayout& layout);

// Sequence-weighted mean of squared row errors.
ad::Var mean_squared_error(const ad::Var& pred, const Matrix& target, const ad::SeqLayout& layout);
// Sequence-weighted mean of row error norms; squared norms when `squared`.
ad::Var mean_error_norm(const ad::Var& pred, const Matrix& target, const ad::SeqLayout& layout, bool squared);

// Class-balanced cross entropy of the compatibility classifiers. `scores` is
// (|active| * N) x 1; entry j * N + r is the score of row r under concept
// active[j]. Concepts with no positive (or no negative) rows skip that term.
ad::Var compat_cross_entropy(const ad::Var& scores, const std::vector<int>& hard, const std::vector<int>& active);
double compat_cross_entropy(const Matrix& scores, const std::vector<int>& hard, const std::vector<int>& active);

struct LossWeights {
  double gen = 0, dis_a = 0, dis_c = 0, ent = 0, rec = 0;

  // Main-phase weights at a given iteration.
  static LossWeights main_phase(const TrainConfig& cfg, int iteration);
  static LossWeights pretraining(const TrainConfig& cfg);
};

// Values at the base point that turn the piecewise-constant straight-through
// forward into a smooth function with the same gradient, for
// finite-difference checks. Everything here is held fixed under perturbation.
struct SmoothSurrogate {
  Matrix alpha_table;  // prototypes seen by the assignment softmax
  Matrix alpha_offset;
  Matrix p_offset;
  Matrix p_table;
};

struct LossInputs {
  const Batch* batch = nullptr;
  std::vector<int> hard;  // concept per row
  Matrix key_states;      // N x D_s target key state per row
  LossWeights weights;
  const SmoothSurrogate* surrogate = nullptr;
};

struct LossTerms {
  ad::Var total;
  // Values of the terms that were evaluated; others stay 0.
  double gen = 0, dis_a = 0, dis_c = 0, ent = 0, rec = 0;
  Matrix probs;  // assignment probabilities at the forward point
};

// Builds the weighted objective on `tape`. Terms with zero weight are not
// constructed at all.
LossTerms compute_losses(ad::Tape& tape, InfoConModel& model, const LossInputs& in);

// Surrogate for the point at which `hard` and `probs` were computed.
SmoothSurrogate make_surrogate(const InfoConModel& model, const Matrix& probs, const std::vector<int>& hard);

}  // namespace infocon
