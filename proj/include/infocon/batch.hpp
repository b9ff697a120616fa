#pragma once

// Packed batch of (windowed) trajectories. Sequences are stacked along rows;
// per-row bookkeeping keeps absolute time indices so that windows retain the
// time semantics of the full trajectory.

#include "infocon/autodiff.hpp"
#include "infocon/synthdata.hpp"

#include <vector>

namespace infocon {

using ad::Matrix;
using ad::Vector;

struct Batch {
  ad::SeqLayout layout;
  Matrix states;        // N x D_s
  Matrix actions;       // N x D_a, action taken at each row
  Matrix prev_actions;  // N x D_a, action of the previous time step (zero at t = 0)
  std::vector<int> positions;    // absolute 0-based time index per row
  std::vector<int> full_length;  // length T of the source trajectory per row
  std::vector<int> traj_index;   // per sequence: index into the dataset
  std::vector<int> window_start; // per sequence: absolute start time

  int rows() const { return static_cast<int>(states.rows()); }
  int num_sequences() const { return static_cast<int>(layout.offsets.size()); }
  // Rows in [offset, offset + length) of sequence s.
  int offset(int s) const { return layout.offsets[s]; }
  int length(int s) const { return layout.lengths[s]; }
};

// Windows [start, start + window) clipped to each trajectory's length.
// A window of 0 means "whole trajectory".
Batch make_batch(const std::vector<synth::Trajectory>& trajs, const std::vector<int>& traj_ids,
                 const std::vector<int>& starts, int window);

// Whole-trajectory batch of a single trajectory.
Batch make_full_batch(const synth::Trajectory& traj, int traj_id = 0);

}  // namespace infocon
