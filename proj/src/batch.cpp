#include "infocon/batch.hpp"

#include <algorithm>
#include <stdexcept>

namespace infocon {

Batch make_batch(const std::vector<synth::Trajectory>& trajs, const std::vector<int>& traj_ids,
                 const std::vector<int>& starts, int window) {
  if (traj_ids.size() != starts.size()) throw std::invalid_argument("make_batch: one start per trajectory");
  if (traj_ids.empty()) throw std::invalid_argument("make_batch: empty batch");
  Batch b;
  int total = 0;
  for (std::size_t i = 0; i < traj_ids.size(); ++i) {
    const auto& tr = trajs.at(traj_ids[i]);
    const int t_len = tr.length();
    if (starts[i] < 0 || starts[i] >= t_len) throw std::out_of_range("make_batch: window start outside trajectory");
    const int len = window > 0 ? std::min(window, t_len - starts[i]) : t_len - starts[i];
    b.layout.offsets.push_back(total);
    b.layout.lengths.push_back(len);
    b.traj_index.push_back(traj_ids[i]);
    b.window_start.push_back(starts[i]);
    total += len;
  }
  const auto& first = trajs.at(traj_ids[0]);
  b.states.resize(total, first.states.cols());
  b.actions.resize(total, first.actions.cols());
  b.prev_actions.resize(total, first.actions.cols());
  b.positions.resize(total);
  b.full_length.resize(total);
  for (std::size_t i = 0; i < traj_ids.size(); ++i) {
    const auto& tr = trajs[traj_ids[i]];
    const int off = b.layout.offsets[i];
    const int len = b.layout.lengths[i];
    const int s0 = starts[i];
    b.states.middleRows(off, len) = tr.states.middleRows(s0, len);
    b.actions.middleRows(off, len) = tr.actions.middleRows(s0, len);
    for (int r = 0; r < len; ++r) {
      const int t = s0 + r;
      if (t == 0)
        b.prev_actions.row(off + r).setZero();
      else
        b.prev_actions.row(off + r) = tr.actions.row(t - 1);
      b.positions[off + r] = t;
      b.full_length[off + r] = tr.length();
    }
  }
  return b;
}

Batch make_full_batch(const synth::Trajectory& traj, int traj_id) {
  std::vector<synth::Trajectory> one{traj};
  Batch b = make_batch(one, {0}, {0}, 0);
  b.traj_index[0] = traj_id;
  return b;
}

}  // namespace infocon
