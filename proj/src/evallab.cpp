#include "infocon/evallab.hpp"

#include "infocon/losses.hpp"
#include "infocon/parallel.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace infocon {

using nlohmann::json;

LabelSet label_dataset(const InfoConModel& model, const synth::Dataset& data, const std::string& model_id) {
  if (data.state_dim() != model.state_dim())
    throw synth::DataError("label: dataset state_dim " + std::to_string(data.state_dim()) +
                           " does not match checkpoint state_dim " + std::to_string(model.state_dim()));
  if (data.action_dim() != model.action_dim())
    throw synth::DataError("label: dataset action_dim " + std::to_string(data.action_dim()) +
                           " does not match checkpoint action_dim " + std::to_string(model.action_dim()));
  LabelSet out;
  out.model_id = model_id;
  out.trajectories.resize(data.trajectories.size());
  parallel_for(data.trajectories.size(), [&](std::size_t i) {
    auto& l = out.trajectories[i];
    l.concept_ids = concept_ids(model, data.trajectories[i]);
    l.key_times = run_ends(l.concept_ids);
  });
  return out;
}

LabelSet ground_truth_labels(const synth::Dataset& data) {
  LabelSet out;
  out.model_id = "ground_truth";
  for (const auto& t : data.trajectories) {
    if (t.gt_key_times.empty()) throw synth::DataError("ground truth labels requested for an unlabeled trajectory");
    out.trajectories.push_back({t.gt_phase, t.gt_key_times});
  }
  return out;
}

long his(const std::vector<int>& pred_keys, const std::vector<int>& gt_keys, int T) {
  if (pred_keys.empty()) throw std::invalid_argument("his: empty prediction");
  if (T < 1) throw std::invalid_argument("his: trajectory length must be positive");
  for (int p : pred_keys)
    if (p < 0 || p >= T) throw std::out_of_range("his: predicted key outside [0, T)");
  if (!std::is_sorted(pred_keys.begin(), pred_keys.end())) throw std::invalid_argument("his: predictions must be sorted");
  long total = 0;
  for (int g : gt_keys) {
    if (g < 0 || g >= T) throw std::out_of_range("his: ground-truth key outside [0, T)");
    auto it = std::lower_bound(pred_keys.begin(), pred_keys.end(), g);
    total += (it == pred_keys.end() ? T - 1 : *it) - g;
  }
  return total;
}

HisReport his_report(const LabelSet& labels, const synth::Dataset& data) {
  if (labels.trajectories.size() != data.trajectories.size())
    throw synth::DataError("his: label count differs from dataset size");
  HisReport r;
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    const auto& t = data.trajectories[i];
    if (t.gt_key_times.empty()) throw synth::DataError("his: trajectory " + std::to_string(i) + " has no ground truth");
    const long h = his(labels.trajectories[i].key_times, t.gt_key_times, t.length());
    r.per_trajectory.push_back(h);
    r.per_trajectory_mean.push_back(static_cast<double>(h) / t.gt_key_times.size());
    r.total += h;
    r.gt_keys += t.gt_key_times.size();
  }
  if (!r.per_trajectory.empty()) {
    r.mean_per_trajectory = static_cast<double>(r.total) / r.per_trajectory.size();
    r.mean_per_gt_key = static_cast<double>(r.total) / r.gt_keys;
  }
  return r;
}

std::vector<double> activation_rates(const LabelSet& labels, int num_concepts) {
  if (labels.trajectories.empty()) throw std::invalid_argument("activation_rates: empty label set");
  std::vector<double> counts(num_concepts, 0.0);
  for (const auto& t : labels.trajectories) {
    std::vector<char> seen(num_concepts, 0);
    for (int k : t.concept_ids) {
      if (k < 0 || k >= num_concepts) throw std::out_of_range("activation_rates: concept id outside codebook");
      seen[k] = 1;
    }
    for (int k = 0; k < num_concepts; ++k) counts[k] += seen[k];
  }
  for (auto& c : counts) c /= static_cast<double>(labels.trajectories.size());
  return counts;
}

std::vector<int> uniform_keys(int T, int k) {
  if (k < 1) throw std::invalid_argument("uniform baseline: k must be >= 1");
  if (k > T) throw std::invalid_argument("uniform baseline: k = " + std::to_string(k) + " exceeds T = " + std::to_string(T));
  std::vector<int> out;
  for (int j = 0; j < k; ++j) out.push_back(static_cast<int>((static_cast<long>(j + 1) * T) / k) - 1);
  return out;
}

namespace {

// seg(i, j): squared residual of states strictly between anchors i < j
// against the straight line through s_i and s_j.
Matrix segment_costs(const Matrix& s) {
  const int T = static_cast<int>(s.rows());
  Matrix cost = Matrix::Zero(T, T);
  for (int i = 0; i < T; ++i)
    for (int j = i + 2; j < T; ++j) {
      double c = 0.0;
      const double span = j - i;
      for (int t = i + 1; t < j; ++t) {
        const double a = (t - i) / span;
        c += (s.row(t) - ((1.0 - a) * s.row(i) + a * s.row(j))).squaredNorm();
      }
      cost(i, j) = c;
    }
  return cost;
}

}  // namespace

double piecewise_linear_cost(const Matrix& states, const std::vector<int>& key_times) {
  double c = 0.0;
  int prev = 0;
  const Matrix seg = segment_costs(states);
  for (int k : key_times) {
    if (k > prev) c += seg(prev, k);
    prev = k;
  }
  return c;
}

PiecewiseFit linear_dp_keys(const Matrix& states, int k) {
  const int T = static_cast<int>(states.rows());
  if (k < 1) throw std::invalid_argument("linear_dp: k must be >= 1");
  if (k > T) throw std::invalid_argument("linear_dp: k = " + std::to_string(k) + " exceeds T = " + std::to_string(T));
  const Matrix seg = segment_costs(states);
  if (k == 1) return {{T - 1}, seg(0, T - 1)};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const int m = k - 1;  // interior breakpoints, each in [0, T-2]
  Matrix f = Matrix::Constant(m, T - 1, kInf);
  std::vector<std::vector<int>> from(m, std::vector<int>(T - 1, -1));
  for (int j = 0; j < T - 1; ++j) f(0, j) = seg(0, j);
  for (int r = 1; r < m; ++r)
    for (int j = r; j < T - 1; ++j)
      for (int i = r - 1; i < j; ++i) {
        const double c = f(r - 1, i) + seg(i, j);
        if (c < f(r, j)) {
          f(r, j) = c;
          from[r][j] = i;
        }
      }
  int best = -1;
  double best_cost = kInf;
  for (int j = m - 1; j < T - 1; ++j) {
    const double c = f(m - 1, j) + seg(j, T - 1);
    if (c < best_cost) {
      best_cost = c;
      best = j;
    }
  }
  std::vector<int> keys(m);
  for (int r = m - 1; r >= 0; --r) {
    keys[r] = best;
    best = from[r][best];
  }
  keys.push_back(T - 1);
  return {keys, best_cost};
}

LabelSet baseline_last_state(const synth::Dataset& data) {
  LabelSet out;
  out.model_id = "baseline:last";
  for (const auto& t : data.trajectories) out.trajectories.push_back({{}, {t.length() - 1}});
  return out;
}

LabelSet baseline_uniform(const synth::Dataset& data, int k) {
  LabelSet out;
  out.model_id = "baseline:uniform:" + std::to_string(k);
  for (const auto& t : data.trajectories) out.trajectories.push_back({{}, uniform_keys(t.length(), k)});
  return out;
}

LabelSet baseline_linear_dp(const synth::Dataset& data, int k) {
  LabelSet out;
  out.model_id = "baseline:lindp:" + std::to_string(k);
  out.trajectories.resize(data.trajectories.size());
  parallel_for(data.trajectories.size(), [&](std::size_t i) {
    out.trajectories[i].key_times = linear_dp_keys(data.trajectories[i].states, k).key_times;
  });
  return out;
}

json labels_to_json(const LabelSet& labels) {
  json trajs = json::array();
  for (const auto& t : labels.trajectories) trajs.push_back({{"concept_ids", t.concept_ids}, {"key_times", t.key_times}});
  return {{"model_id", labels.model_id}, {"dataset_id", labels.dataset_id}, {"trajectories", trajs}};
}

LabelSet labels_from_json(const json& j, const std::filesystem::path& file) {
  auto fail = [&](const std::string& field, const std::string& what) {
    throw synth::DataError(file.string() + ": field '" + field + "': " + what);
  };
  if (!j.is_object()) fail("", "expected an object");
  LabelSet out;
  if (!j.contains("model_id") || !j["model_id"].is_string()) fail("model_id", "missing or not a string");
  out.model_id = j["model_id"].get<std::string>();
  if (j.contains("dataset_id")) {
    if (!j["dataset_id"].is_string()) fail("dataset_id", "not a string");
    out.dataset_id = j["dataset_id"].get<std::string>();
  }
  if (!j.contains("trajectories") || !j["trajectories"].is_array()) fail("trajectories", "missing or not an array");
  for (const auto& t : j["trajectories"]) {
    TrajectoryLabels l;
    for (const char* key : {"concept_ids", "key_times"}) {
      if (!t.contains(key) || !t[key].is_array()) fail(key, "missing or not an array");
      for (const auto& v : t[key])
        if (!v.is_number_integer()) fail(key, "expected integers");
    }
    l.concept_ids = t["concept_ids"].get<std::vector<int>>();
    l.key_times = t["key_times"].get<std::vector<int>>();
    out.trajectories.push_back(std::move(l));
  }
  return out;
}

void save_labels(const LabelSet& labels, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw synth::DataError(file.string() + ": cannot write");
  out << labels_to_json(labels).dump() << "\n";
}

LabelSet load_labels(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw synth::DataError(file.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw synth::DataError(file.string() + ": corrupt JSON: " + e.what());
  }
  return labels_from_json(j, file);
}

json his_report_to_json(const HisReport& r) {
  return {{"per_trajectory", r.per_trajectory},
          {"per_trajectory_mean", r.per_trajectory_mean},
          {"total", r.total},
          {"mean_per_trajectory", r.mean_per_trajectory},
          {"mean_per_gt_key", r.mean_per_gt_key},
          {"gt_keys", r.gt_keys}};
}

void validate_labels(const LabelSet& labels, const synth::Dataset& data) {
  if (labels.trajectories.size() != data.trajectories.size())
    throw synth::DataError("labels cover " + std::to_string(labels.trajectories.size()) + " trajectories, dataset has " +
                           std::to_string(data.trajectories.size()));
  for (std::size_t i = 0; i < labels.trajectories.size(); ++i) {
    const auto& l = labels.trajectories[i];
    const int T = data.trajectories[i].length();
    const std::string where = "labels: trajectory " + std::to_string(i) + ": ";
    if (l.key_times.empty()) throw synth::DataError(where + "no key times");
    for (std::size_t k = 0; k < l.key_times.size(); ++k) {
      if (l.key_times[k] < 0 || l.key_times[k] >= T) throw synth::DataError(where + "key time outside [0, T)");
      if (k > 0 && l.key_times[k] <= l.key_times[k - 1]) throw synth::DataError(where + "key times not increasing");
    }
    if (l.key_times.back() != T - 1) throw synth::DataError(where + "last key time is not T-1");
    if (!l.concept_ids.empty()) {
      if (static_cast<int>(l.concept_ids.size()) != T) throw synth::DataError(where + "concept_ids length differs from T");
      if (run_ends(l.concept_ids) != l.key_times) throw synth::DataError(where + "key times are not the run ends");
    }
  }
}

}  // namespace infocon
