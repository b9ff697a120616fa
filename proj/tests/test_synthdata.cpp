#include "infocon/synthdata.hpp"

#include "common.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

namespace infocon::synth {
namespace {

using testing::TempDir;

SyntheticTaskSpec one_phase_noiseless() {
  SyntheticTaskSpec s = SyntheticTaskSpec::standard(1);
  s.phases[0].noise_sigma = 0.0;
  return s;
}

TEST(GenerateTrajectory, StartAtWaypointCompletesAfterOneStep) {
  const auto t = generate_trajectory(one_phase_noiseless(), Eigen::Vector2d(0.3, -0.2), {Eigen::Vector2d(0.3, -0.2)}, 1);
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->length(), 2);
  EXPECT_EQ(t->gt_key_times, std::vector<int>({1}));
}

TEST(GenerateTrajectory, ThreePhasesAreMonotone) {
  const auto t = generate_trajectory(SyntheticTaskSpec::standard(), 7);
  ASSERT_TRUE(t.has_value());
  EXPECT_TRUE(std::is_sorted(t->gt_phase.begin(), t->gt_phase.end()));
  EXPECT_EQ(std::set<int>(t->gt_phase.begin(), t->gt_phase.end()).size(), 3u);
}

TEST(GenerateTrajectory, IsAPureFunctionOfSeed) {
  const auto spec = SyntheticTaskSpec::standard();
  EXPECT_EQ(*generate_trajectory(spec, 11), *generate_trajectory(spec, 11));
  EXPECT_NE(generate_trajectory(spec, 11)->states, generate_trajectory(spec, 12)->states);
}

TEST(GenerateTrajectory, StepLimitGivesNoTrajectory) {
  SyntheticTaskSpec s = one_phase_noiseless();
  s.max_steps = 3;
  EXPECT_FALSE(generate_trajectory(s, Eigen::Vector2d(-1, -1), {Eigen::Vector2d(1, 1)}, 0).has_value());
}

TEST(GenerateTrajectory, KeyTimesArePhaseIncrementsPlusLastIndex) {
  const auto d = generate_dataset(SyntheticTaskSpec::standard(), 40, 3);
  for (const auto& t : d.trajectories) {
    std::vector<int> expected;
    for (int i = 0; i + 1 < t.length(); ++i)
      if (t.gt_phase[i + 1] > t.gt_phase[i]) expected.push_back(i);
    expected.push_back(t.length() - 1);
    EXPECT_EQ(t.gt_key_times, expected);
    EXPECT_EQ(t.states.rows(), t.actions.rows());
    EXPECT_GE(t.length(), 2);
  }
}

TEST(GenerateTrajectory, WaypointCoordinatesStayConstant) {
  const auto t = *generate_trajectory(SyntheticTaskSpec::standard(), 2);
  for (int s = 1; s < t.length(); ++s) EXPECT_EQ(t.states.row(s).tail(6), t.states.row(0).tail(6));
}

TEST(GenerateTrajectory, ActionsAreTheAppliedDisplacements) {
  const auto t = *generate_trajectory(SyntheticTaskSpec::standard(), 9);
  for (int s = 0; s + 1 < t.length(); ++s)
    EXPECT_LT((t.states.row(s + 1).head(2) - t.states.row(s).head(2) - t.actions.row(s)).norm(), 1e-15);
  EXPECT_EQ(t.actions.row(t.length() - 1).norm(), 0.0);
}

TEST(GenerateDataset, CountAndDeterminism) {
  const auto spec = SyntheticTaskSpec::standard();
  const auto a = generate_dataset(spec, 25, 4);
  const auto b = generate_dataset(spec, 25, 4);
  EXPECT_EQ(a.trajectories.size(), 25u);
  EXPECT_EQ(a.trajectories, b.trajectories);
  EXPECT_EQ(a.stats, b.stats);
}

TEST(GenerateDataset, RejectsNonPositiveCount) {
  EXPECT_THROW(generate_dataset(SyntheticTaskSpec::standard(), 0, 1), std::invalid_argument);
}

TEST(Spec, ValidateRejectsBadFields) {
  SyntheticTaskSpec s = SyntheticTaskSpec::standard();
  s.phases[1].arrival_eps = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = SyntheticTaskSpec::standard();
  s.max_steps = 5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = SyntheticTaskSpec::standard();
  s.phases.pop_back();
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(EnvStep, ZeroActionKeepsState) {
  const auto spec = SyntheticTaskSpec::standard();
  const Vector s = sample_initial_state(spec, 1);
  EXPECT_EQ(env_step(s, Vector::Zero(2), spec), s);
}

TEST(EnvStep, AddsActionToPosition) {
  const auto spec = SyntheticTaskSpec::standard();
  Vector s = Vector::Zero(spec.state_dim());
  const Vector next = env_step(s, Eigen::Vector2d(0.01, 0.0), spec);
  EXPECT_DOUBLE_EQ(next(0), 0.01);
  EXPECT_DOUBLE_EQ(next(1), 0.0);
}

TEST(EnvStep, ClipsLargeActions) {
  SyntheticTaskSpec spec = SyntheticTaskSpec::standard(1);
  spec.phases[0].action_scale = 0.1;
  const Vector next = env_step(Vector::Zero(spec.state_dim()), Eigen::Vector2d(6.0, 8.0), spec);
  EXPECT_NEAR(next.head(2).norm(), 0.15, 1e-15);
  EXPECT_NEAR(next(0) / next(1), 0.75, 1e-12);
}

TEST(EnvStep, ClipsSmallSpecExampleAction) {
  SyntheticTaskSpec spec = SyntheticTaskSpec::standard(1);
  spec.phases[0].action_scale = 0.1;
  Vector s = Vector::Zero(spec.state_dim());
  EXPECT_NEAR((env_step(s, Eigen::Vector2d(0.1, 0.0), spec).head(2) - Eigen::Vector2d(0.1, 0.0)).norm(), 0.0, 1e-15);
}

TEST(EnvStep, DimensionMismatchThrows) {
  const auto spec = SyntheticTaskSpec::standard();
  EXPECT_THROW(env_step(Vector::Zero(3), Vector::Zero(2), spec), std::invalid_argument);
  EXPECT_THROW(env_step(Vector::Zero(spec.state_dim()), Vector::Zero(3), spec), std::invalid_argument);
}

TEST(RolloutSuccess, UsesStrictArrivalRadius) {
  const auto spec = SyntheticTaskSpec::standard();
  const double eps = spec.phases.back().arrival_eps;
  Vector s = sample_initial_state(spec, 3);
  const Eigen::Vector2d goal = s.tail(2);
  s.head(2) = goal;
  EXPECT_TRUE(rollout_success(s, spec));
  s.head(2) = goal + Eigen::Vector2d(2 * eps, 0);
  EXPECT_FALSE(rollout_success(s, spec));
  s.head(2) = goal + Eigen::Vector2d(0, 0.99 * eps);
  EXPECT_TRUE(rollout_success(s, spec));
}

TEST(Normalize, ConstantDimensionsUseTheFloor) {
  Dataset d;
  d.spec = SyntheticTaskSpec::standard(1);
  Trajectory t;
  t.states = Matrix::Constant(3, 4, 0.5);
  t.actions = Matrix::Constant(3, 2, -1.0);
  d.trajectories = {t, t};
  d.stats = compute_stats(d.trajectories);
  EXPECT_TRUE((d.stats.state_std.array() == kStdFloor).all());
  const Dataset n = normalize_dataset(d);
  for (const auto& tr : n.trajectories) {
    EXPECT_EQ(tr.states, Matrix::Zero(3, 4));
    EXPECT_EQ(tr.actions, Matrix::Zero(3, 2));
  }
}

TEST(Normalize, HandComputedMean) {
  Trajectory a, b;
  a.states = (Matrix(2, 4) << 0, 0, 1, 1, 2, 0, 1, 1).finished();
  a.actions = (Matrix(2, 2) << 1, 0, 0, 0).finished();
  b.states = (Matrix(1, 4) << 4, 6, 1, 1).finished();
  b.actions = (Matrix(1, 2) << 0, 3).finished();
  const NormStats s = compute_stats({a, b});
  EXPECT_TRUE(s.state_mean.isApprox((Vector(4) << 2, 2, 1, 1).finished()));
  EXPECT_TRUE(s.action_mean.isApprox((Vector(2) << 1.0 / 3, 1).finished()));
}

TEST(Normalize, ZeroMeanUnitVarianceAndInverse) {
  const Dataset raw = generate_dataset(SyntheticTaskSpec::standard(), 30, 8);
  const Dataset n = normalize_dataset(raw);
  Matrix all(0, raw.state_dim());
  for (const auto& t : n.trajectories) {
    all.conservativeResize(all.rows() + t.length(), Eigen::NoChange);
    all.bottomRows(t.length()) = t.states;
  }
  const Vector mean = all.colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-9);
  for (int c = 0; c < all.cols(); ++c)
    EXPECT_NEAR(std::sqrt((all.col(c).array() - mean(c)).square().mean()), 1.0, 1e-9);
  const Dataset back = denormalize_dataset(n);
  for (std::size_t i = 0; i < raw.trajectories.size(); ++i) {
    const Matrix& r = raw.trajectories[i].states;
    EXPECT_LT((back.trajectories[i].states - r).norm() / r.norm(), 1e-6);
  }
}

TEST(Persistence, SaveLoadRoundTripsBitExactly) {
  TempDir dir("synth");
  for (const Dataset& d : {generate_dataset(SyntheticTaskSpec::standard(), 5, 1),
                           normalize_dataset(generate_dataset(SyntheticTaskSpec::standard(2), 4, 2))}) {
    save_dataset(d, dir.path() / "d");
    const Dataset back = load_dataset(dir.path() / "d");
    EXPECT_EQ(back.trajectories, d.trajectories);
    EXPECT_EQ(back.stats, d.stats);
    EXPECT_EQ(back.normalized, d.normalized);
    EXPECT_EQ(back.spec.num_phases, d.spec.num_phases);
    std::filesystem::remove_all(dir.path() / "d");
  }
}

TEST(Persistence, LayoutAndIdentifier) {
  TempDir dir("synth");
  const Dataset d = generate_dataset(SyntheticTaskSpec::standard(), 3, 1);
  save_dataset(d, dir / "a");
  save_dataset(d, dir / "b");
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "meta.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a" / "traj_00002.json"));
  EXPECT_EQ(dataset_id(dir / "a"), dataset_id(dir / "b"));
  save_dataset(generate_dataset(SyntheticTaskSpec::standard(), 3, 2), dir / "b");
  EXPECT_NE(dataset_id(dir / "a"), dataset_id(dir / "b"));
}

TEST(Persistence, CorruptFileNamesFileAndField) {
  TempDir dir("synth");
  save_dataset(generate_dataset(SyntheticTaskSpec::standard(), 2, 1), dir / "d");
  {
    std::ofstream out(dir / "d" / "traj_00001.json");
    out << "{\"states\": [[1, 2]], \"actions\": [[0, 0]], \"gt_phase\": [0], \"gt_key_times\": [0]}";
  }
  try {
    load_dataset(dir / "d");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("traj_00001.json"), std::string::npos) << msg;
    EXPECT_NE(msg.find("states"), std::string::npos) << msg;
  }
  {
    std::ofstream out(dir / "d" / "traj_00001.json");
    out << "{not json";
  }
  EXPECT_THROW(load_dataset(dir / "d"), DataError);
  EXPECT_THROW(load_dataset(dir / "missing"), DataError);
}

}  // namespace
}  // namespace infocon::synth
