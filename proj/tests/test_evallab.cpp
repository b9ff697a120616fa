#include "infocon/evallab.hpp"
#include "infocon/guided.hpp"
#include "infocon/losses.hpp"

#include "common.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>

namespace infocon {
namespace {

using testing::random_matrix;
using testing::TempDir;

long his_oracle(const std::vector<int>& pred, const std::vector<int>& gt, int T) {
  long total = 0;
  for (int g : gt) {
    int found = T - 1;
    for (int p : pred)
      if (p >= g) {
        found = p;
        break;
      }
    total += found - g;
  }
  return total;
}

std::vector<int> random_sorted_subset(int T, int max_size, std::mt19937_64& rng) {
  std::vector<int> all(T);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(1 + rng() % std::min(T, max_size));
  std::sort(all.begin(), all.end());
  return all;
}

TEST(His, WorkedExamples) {
  EXPECT_EQ(his({4, 7, 9}, {3, 7}, 10), 1);
  EXPECT_EQ(his({3}, {8}, 10), 1);
  EXPECT_EQ(his({2, 5, 9}, {2, 5, 9}, 10), 0);
}

TEST(His, MatchesLinearScanOracle) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const int T = 1 + static_cast<int>(rng() % 80);
    const auto pred = random_sorted_subset(T, 8, rng);
    const auto gt = random_sorted_subset(T, 5, rng);
    EXPECT_EQ(his(pred, gt, T), his_oracle(pred, gt, T));
  }
}

TEST(His, RejectsInvalidInput) {
  EXPECT_THROW(his({}, {1}, 5), std::invalid_argument);
  EXPECT_THROW(his({5}, {1}, 5), std::out_of_range);
  EXPECT_THROW(his({4}, {-1}, 5), std::out_of_range);
  EXPECT_THROW(his({3, 1}, {1}, 5), std::invalid_argument);
}

TEST(His, ReportAggregates) {
  synth::Dataset d;
  synth::Trajectory a, b;
  a.states = Matrix::Zero(10, 2);
  a.gt_key_times = {3, 7, 9};
  b.states = Matrix::Zero(6, 2);
  b.gt_key_times = {5};
  d.trajectories = {a, b};
  LabelSet l;
  l.trajectories = {{{}, {4, 9}}, {{}, {5}}};
  const HisReport r = his_report(l, d);
  EXPECT_EQ(r.per_trajectory, std::vector<long>({3, 0}));
  EXPECT_EQ(r.total, 3);
  EXPECT_EQ(r.gt_keys, 4u);
  EXPECT_DOUBLE_EQ(r.mean_per_gt_key, 0.75);
  EXPECT_DOUBLE_EQ(r.mean_per_trajectory, 1.5);
  EXPECT_DOUBLE_EQ(r.per_trajectory_mean[0], 1.0);
  l.trajectories.pop_back();
  EXPECT_THROW(his_report(l, d), synth::DataError);
}

TEST(Labels, GroundTruthScoresZero) {
  const auto& d = testing::fixture();
  const LabelSet gt = ground_truth_labels(d);
  EXPECT_NO_THROW(validate_labels(gt, d));
  EXPECT_EQ(his_report(gt, d).total, 0);
}

TEST(Labels, ModelLabelsAreRunEndsAndDeterministic) {
  const auto& d = testing::fixture();
  InfoConModel m(TrainConfig::desk_scale(), d.state_dim(), d.action_dim());
  const LabelSet a = label_dataset(m, d, "m");
  EXPECT_EQ(a, label_dataset(m, d, "m"));
  EXPECT_NO_THROW(validate_labels(a, d));
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) {
    const auto& ids = a.trajectories[i].concept_ids;
    std::vector<int> ends;
    for (std::size_t t = 0; t < ids.size(); ++t)
      if (t + 1 == ids.size() || ids[t + 1] != ids[t]) ends.push_back(static_cast<int>(t));
    EXPECT_EQ(a.trajectories[i].key_times, ends);
    EXPECT_EQ(ids, concept_ids(m, d.trajectories[i]));
  }
}

TEST(Labels, DimensionMismatchIsADataError) {
  const auto& d = testing::fixture();
  InfoConModel m(TrainConfig::desk_scale(), d.state_dim() + 1, d.action_dim());
  EXPECT_THROW(label_dataset(m, d, "m"), synth::DataError);
}

TEST(Labels, JsonRoundTrip) {
  TempDir dir("labels");
  LabelSet l;
  l.model_id = "abc";
  l.dataset_id = "def";
  l.trajectories = {{{0, 0, 1}, {1, 2}}, {{}, {4}}};
  save_labels(l, dir / "l.json");
  EXPECT_EQ(load_labels(dir / "l.json"), l);
}

TEST(Labels, MalformedFilesNameTheField) {
  TempDir dir("labels");
  {
    std::ofstream out(dir / "l.json");
    out << R"({"model_id": "x", "trajectories": [{"concept_ids": [0], "key_times": [0.5]}]})";
  }
  try {
    load_labels(dir / "l.json");
    FAIL();
  } catch (const synth::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("key_times"), std::string::npos) << e.what();
  }
  {
    std::ofstream out(dir / "l.json");
    out << "[";
  }
  EXPECT_THROW(load_labels(dir / "l.json"), synth::DataError);
  EXPECT_THROW(load_labels(dir / "none.json"), synth::DataError);
}

TEST(Labels, ValidationCatchesEachViolation) {
  const auto& d = testing::fixture();
  const LabelSet good = ground_truth_labels(d);
  const int T = d.trajectories[0].length();
  auto broken = [&](auto edit) {
    LabelSet l = good;
    edit(l.trajectories[0]);
    return l;
  };
  EXPECT_THROW(validate_labels(broken([](TrajectoryLabels& t) { t.key_times.clear(); }), d), synth::DataError);
  EXPECT_THROW(validate_labels(broken([&](TrajectoryLabels& t) { t.key_times.back() = T; }), d), synth::DataError);
  EXPECT_THROW(validate_labels(broken([&](TrajectoryLabels& t) { t.key_times.back() = T - 2; }), d),
               synth::DataError);
  EXPECT_THROW(validate_labels(broken([](TrajectoryLabels& t) { std::swap(t.key_times[0], t.key_times[1]); }), d),
               synth::DataError);
  EXPECT_THROW(validate_labels(broken([](TrajectoryLabels& t) { t.concept_ids.pop_back(); }), d), synth::DataError);
  EXPECT_THROW(validate_labels(broken([](TrajectoryLabels& t) { t.concept_ids[0] = 9; }), d), synth::DataError);
  LabelSet fewer = good;
  fewer.trajectories.pop_back();
  EXPECT_THROW(validate_labels(fewer, d), synth::DataError);
}

LabelSet ids_only(const std::vector<std::vector<int>>& ids) {
  LabelSet l;
  for (const auto& v : ids) l.trajectories.push_back({v, run_ends(v)});
  return l;
}

TEST(ActivationRates, Examples) {
  const LabelSet l = ids_only({{0, 0, 1}, {0, 2}, {0, 1, 1}, {0, 1}});
  const auto r = activation_rates(l, 4);
  EXPECT_EQ(r, std::vector<double>({1.0, 0.75, 0.25, 0.0}));
  EXPECT_THROW(activation_rates(LabelSet{}, 4), std::invalid_argument);
  EXPECT_THROW(activation_rates(l, 2), std::out_of_range);
}

TEST(ActivationRates, PermutationEquivariantAndOrderFree) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    std::vector<std::vector<int>> ids(1 + rng() % 10);
    for (auto& v : ids) {
      v.resize(1 + rng() % 20);
      for (auto& x : v) x = static_cast<int>(rng() % 5);
    }
    std::vector<int> perm = {0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    auto relabeled = ids;
    for (auto& v : relabeled)
      for (auto& x : v) x = perm[x];
    auto reversed = ids;
    std::reverse(reversed.begin(), reversed.end());
    const auto r = activation_rates(ids_only(ids), 5);
    const auto rp = activation_rates(ids_only(relabeled), 5);
    for (int k = 0; k < 5; ++k) EXPECT_EQ(rp[perm[k]], r[k]);
    EXPECT_EQ(activation_rates(ids_only(reversed), 5), r);
  }
}

TEST(Baselines, LastAndUniform) {
  const auto& d = testing::fixture();
  const LabelSet last = baseline_last_state(d);
  const LabelSet one = baseline_uniform(d, 1);
  for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
    const std::vector<int> end = {d.trajectories[i].length() - 1};
    EXPECT_EQ(last.trajectories[i].key_times, end);
    EXPECT_EQ(one.trajectories[i].key_times, end);
  }
  EXPECT_EQ(uniform_keys(10, 3), std::vector<int>({2, 5, 9}));
  EXPECT_EQ(uniform_keys(4, 4), std::vector<int>({0, 1, 2, 3}));
  EXPECT_THROW(uniform_keys(3, 4), std::invalid_argument);
  EXPECT_NO_THROW(validate_labels(baseline_uniform(d, 3), d));
}

TEST(Baselines, LinearDpFindsTheCorner) {
  Matrix s(9, 2);
  for (int t = 0; t < 9; ++t) s.row(t) = t <= 5 ? Eigen::RowVector2d(0.5 * t, 1.0) : Eigen::RowVector2d(2.5, 1.0 - (t - 5));
  const PiecewiseFit f = linear_dp_keys(s, 2);
  EXPECT_EQ(f.key_times, std::vector<int>({5, 8}));
  EXPECT_LT(f.cost, 1e-20);
  EXPECT_GT(linear_dp_keys(s, 1).cost, 1.0);
  EXPECT_THROW(linear_dp_keys(s, 10), std::invalid_argument);
  EXPECT_THROW(linear_dp_keys(s, 0), std::invalid_argument);
}

// Residual against straight lines through consecutive anchors 0, keys...
double interpolation_residual(const Matrix& s, const std::vector<int>& keys) {
  double c = 0;
  int a = 0;
  for (int b : keys) {
    for (int t = a + 1; t < b; ++t) {
      const Eigen::RowVectorXd line = s.row(a) + (s.row(b) - s.row(a)) * (t - a) / static_cast<double>(b - a);
      c += (s.row(t) - line).squaredNorm();
    }
    a = b;
  }
  return c;
}

void for_each_breakpoint_set(int T, int m, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int from) {
    if (static_cast<int>(cur.size()) == m) {
      auto keys = cur;
      keys.push_back(T - 1);
      f(keys);
      return;
    }
    for (int b = from; b <= T - 2; ++b) {
      cur.push_back(b);
      rec(b + 1);
      cur.pop_back();
    }
  };
  rec(0);
}

TEST(Baselines, LinearDpMatchesExhaustiveSearch) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const int T = 3 + static_cast<int>(rng() % 18);
    const Matrix s = random_matrix(T, 3, rng);
    for (int k = 1; k <= 3; ++k) {
      double best = std::numeric_limits<double>::infinity();
      for_each_breakpoint_set(T, k - 1, [&](const std::vector<int>& keys) {
        best = std::min(best, interpolation_residual(s, keys));
      });
      const PiecewiseFit f = linear_dp_keys(s, k);
      ASSERT_EQ(f.key_times.size(), static_cast<std::size_t>(k));
      EXPECT_TRUE(std::is_sorted(f.key_times.begin(), f.key_times.end()));
      EXPECT_EQ(f.key_times.back(), T - 1);
      EXPECT_NEAR(f.cost, best, 1e-9 * (1 + best)) << "T=" << T << " k=" << k;
      EXPECT_NEAR(interpolation_residual(s, f.key_times), f.cost, 1e-9 * (1 + best));
      EXPECT_NEAR(piecewise_linear_cost(s, f.key_times), f.cost, 1e-9 * (1 + best));
    }
  }
}

PolicyConfig quick_policy(std::uint64_t seed) {
  PolicyConfig c;
  c.iters = 20;
  c.batch_size = 4;
  c.warmup_iters = 2;
  c.seed = seed;
  return c;
}

TEST(GuidedPolicy, TrainingAndRolloutsAreDeterministic) {
  const auto& d = testing::fixture();
  const LabelSet gt = ground_truth_labels(d);
  PolicyTrainLog la, lb;
  const auto a = train_guided_policy(d, gt, quick_policy(1), &la);
  const auto b = train_guided_policy(d, gt, quick_policy(1), &lb);
  EXPECT_EQ(la.last_action_loss, lb.last_action_loss);
  EXPECT_EQ(la.last_key_loss, lb.last_key_loss);
  const double ra = evaluate_guided_policy(*a, d, 8, 4);
  EXPECT_EQ(ra, evaluate_guided_policy(*b, d, 8, 4));
  EXPECT_EQ(ra, evaluate_guided_policy(*a, d, 8, 4));
  EXPECT_GE(ra, 0.0);
  EXPECT_LE(ra, 1.0);
  EXPECT_LT(la.last_action_loss, la.first_action_loss);
}

TEST(GuidedPolicy, ActMatchesBatchedForwardOnLastRow) {
  const auto& d = testing::fixture();
  const auto p = train_guided_policy(d, ground_truth_labels(d), quick_policy(2));
  const auto& t = d.trajectories[0];
  const int n = 7;
  const Vector a = p->act(t.states.topRows(n), t.actions.topRows(n - 1));
  const Batch b = make_full_batch(testing::truncated(t, n), 0);
  ad::Tape tape(false);
  const Matrix out = (*p)(tape, b).action.value();
  EXPECT_LT((a.transpose() - out.row(n - 1)).norm(), 1e-12);
}

TEST(GuidedPolicy, RejectsMismatchedLabels) {
  const auto& d = testing::fixture();
  LabelSet gt = ground_truth_labels(d);
  gt.trajectories.pop_back();
  EXPECT_THROW(train_guided_policy(d, gt, quick_policy(0)), synth::DataError);
  const synth::Dataset raw = synth::generate_dataset(synth::SyntheticTaskSpec::standard(), 3, 1);
  EXPECT_THROW(train_guided_policy(raw, ground_truth_labels(raw), quick_policy(0)), std::invalid_argument);
}

}  // namespace
}  // namespace infocon
