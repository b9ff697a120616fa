#pragma once

// Synthetic multi-phase reaching trajectories with exact key-state labels,
// the point-mass dynamics used for policy rollouts, and dataset persistence.
//
// State layout: [agent_x, agent_y, wp0_x, wp0_y, ..., wp{P-1}_x, wp{P-1}_y].
// Actions are planar displacements. Time indices are 0-based.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace infocon::synth {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Box2 {
  Eigen::Vector2d lo{-1.0, -1.0};
  Eigen::Vector2d hi{1.0, 1.0};
};

struct PhaseSpec {
  Box2 waypoint_box;
  double arrival_eps = 0.06;
  double action_scale = 0.06;
  double noise_sigma = 0.01;
};

struct SyntheticTaskSpec {
  int num_phases = 3;
  std::vector<PhaseSpec> phases;
  int max_steps = 200;
  Box2 start_box;

  int state_dim() const { return 2 + 2 * num_phases; }
  static constexpr int action_dim() { return 2; }
  // Largest per-phase action scale; the dynamics clip at 1.5x this value.
  double max_action_scale() const;
  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  // The 3-phase reaching task used throughout the tests and examples.
  static SyntheticTaskSpec standard(int num_phases = 3);
};

struct Trajectory {
  Matrix states;   // T x D_s
  Matrix actions;  // T x D_a; action t is applied in state t
  std::vector<int> gt_phase;      // empty when unlabeled
  std::vector<int> gt_key_times;  // empty when unlabeled

  int length() const { return static_cast<int>(states.rows()); }
  bool operator==(const Trajectory&) const = default;
};

// Error raised for malformed or inconsistent dataset files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NormStats {
  Vector state_mean, state_std, action_mean, action_std;
  bool operator==(const NormStats&) const = default;
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  NormStats stats;
  SyntheticTaskSpec spec;
  bool normalized = false;

  int state_dim() const { return spec.state_dim(); }
  int action_dim() const { return SyntheticTaskSpec::action_dim(); }
};

inline constexpr double kStdFloor = 1e-6;

// Deterministic demonstration for one seed; std::nullopt when the step limit
// is reached before the last phase completes.
std::optional<Trajectory> generate_trajectory(const SyntheticTaskSpec& spec, std::uint64_t seed);

// Same dynamics and labelling from an explicit start and waypoint list.
std::optional<Trajectory> generate_trajectory(const SyntheticTaskSpec& spec, const Eigen::Vector2d& start,
                                              const std::vector<Eigen::Vector2d>& waypoints, std::uint64_t noise_seed);

// Samples a fresh initial state (agent start plus waypoints).
Vector sample_initial_state(const SyntheticTaskSpec& spec, std::uint64_t seed);

// `n` trajectories; failed draws are resampled with derived seeds. Generation
// runs in parallel and the result depends only on (spec, n, seed).
Dataset generate_dataset(const SyntheticTaskSpec& spec, int n, std::uint64_t seed);

Vector env_step(const Vector& state, const Vector& action, const SyntheticTaskSpec& spec);
bool rollout_success(const Vector& final_state, const SyntheticTaskSpec& spec);

NormStats compute_stats(const std::vector<Trajectory>& trajs);
Dataset normalize_dataset(const Dataset& d);
Dataset denormalize_dataset(const Dataset& d);

void save_dataset(const Dataset& d, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Stable content hash of a dataset directory (meta plus trajectory files).
std::string dataset_id(const std::filesystem::path& dir);

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace infocon::synth
