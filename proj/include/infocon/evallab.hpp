#pragma once

// Key-state labelling, the HIS metric, activation rates and segmentation
// baselines.

#include "infocon/model.hpp"
#include "infocon/synthdata.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace infocon {

struct TrajectoryLabels {
  std::vector<int> concept_ids;  // empty for baselines
  std::vector<int> key_times;
  bool operator==(const TrajectoryLabels&) const = default;
};

struct LabelSet {
  std::string model_id;    // checkpoint hash or baseline name
  std::string dataset_id;  // empty when unknown
  std::vector<TrajectoryLabels> trajectories;
  bool operator==(const LabelSet&) const = default;
};

LabelSet label_dataset(const InfoConModel& model, const synth::Dataset& data, const std::string& model_id);
LabelSet ground_truth_labels(const synth::Dataset& data);

// Sum over gt keys of (first pred >= gt) - gt; T-1 stands in for a missing
// successor. Throws on empty predictions or indices outside [0, T).
long his(const std::vector<int>& pred_keys, const std::vector<int>& gt_keys, int T);

struct HisReport {
  std::vector<long> per_trajectory;          // raw sums
  std::vector<double> per_trajectory_mean;   // sum / number of gt keys
  long total = 0;                            // dataset sum
  double mean_per_trajectory = 0;            // mean of raw sums
  double mean_per_gt_key = 0;                // total / number of gt keys
  std::size_t gt_keys = 0;
};

HisReport his_report(const LabelSet& labels, const synth::Dataset& data);

// Fraction of trajectories in which each concept id appears.
std::vector<double> activation_rates(const LabelSet& labels, int num_concepts);

LabelSet baseline_last_state(const synth::Dataset& data);
// k keys at round((j+1) * T / k) - 1, j = 0..k-1.
LabelSet baseline_uniform(const synth::Dataset& data, int k);
// k - 1 breakpoints in [0, T-2] plus T-1 minimising the squared residual of a
// piecewise-linear interpolation of the states through the breakpoints.
LabelSet baseline_linear_dp(const synth::Dataset& data, int k);

std::vector<int> uniform_keys(int T, int k);
struct PiecewiseFit {
  std::vector<int> key_times;
  double cost = 0;
};
PiecewiseFit linear_dp_keys(const Matrix& states, int k);
// Residual of interpolating states linearly between consecutive key times,
// with index 0 as the implicit first anchor.
double piecewise_linear_cost(const Matrix& states, const std::vector<int>& key_times);

nlohmann::json labels_to_json(const LabelSet& labels);
LabelSet labels_from_json(const nlohmann::json& j, const std::filesystem::path& file);
void save_labels(const LabelSet& labels, const std::filesystem::path& file);
LabelSet load_labels(const std::filesystem::path& file);

nlohmann::json his_report_to_json(const HisReport& r);

// Checks that labels cover the dataset (count, key-time ranges, run ends).
// Throws synth::DataError describing the first violation.
void validate_labels(const LabelSet& labels, const synth::Dataset& data);

}  // namespace infocon
