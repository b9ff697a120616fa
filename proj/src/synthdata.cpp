#include "infocon/synthdata.hpp"

#include "infocon/hash.hpp"
#include "infocon/parallel.hpp"
#include "infocon/serialize.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace infocon::synth {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SyntheticTaskSpec::max_action_scale() const {
  double m = 0.0;
  for (const auto& p : phases) m = std::max(m, p.action_scale);
  return m;
}

void SyntheticTaskSpec::validate() const {
  if (num_phases < 1) throw std::invalid_argument("num_phases must be >= 1");
  if (static_cast<int>(phases.size()) != num_phases)
    throw std::invalid_argument("phase_specs must contain exactly num_phases entries");
  if (max_steps < 2 * num_phases) throw std::invalid_argument("max_steps must be >= 2 * num_phases");
  for (const auto& p : phases) {
    if (!(p.arrival_eps > 0)) throw std::invalid_argument("arrival_eps must be positive");
    if (!(p.action_scale > 0)) throw std::invalid_argument("action_scale must be positive");
    if (!(p.noise_sigma >= 0)) throw std::invalid_argument("noise_sigma must be nonnegative");
    if ((p.waypoint_box.hi.array() < p.waypoint_box.lo.array()).any())
      throw std::invalid_argument("waypoint box has hi < lo");
  }
  if ((start_box.hi.array() < start_box.lo.array()).any()) throw std::invalid_argument("start box has hi < lo");
}

SyntheticTaskSpec SyntheticTaskSpec::standard(int num_phases) {
  SyntheticTaskSpec s;
  s.num_phases = num_phases;
  s.phases.assign(num_phases, PhaseSpec{});
  s.max_steps = 200;
  return s;
}

namespace {

Eigen::Vector2d sample_box(const Box2& b, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::Vector2d p;
  for (int i = 0; i < 2; ++i) p(i) = b.lo(i) + (b.hi(i) - b.lo(i)) * u(rng);
  return p;
}

}  // namespace

Vector env_step(const Vector& state, const Vector& action, const SyntheticTaskSpec& spec) {
  if (state.size() != spec.state_dim()) throw std::invalid_argument("env_step: state dimension mismatch");
  if (action.size() != SyntheticTaskSpec::action_dim()) throw std::invalid_argument("env_step: action dimension mismatch");
  const double limit = 1.5 * spec.max_action_scale();
  Eigen::Vector2d a = action.head<2>();
  const double n = a.norm();
  if (n > limit) a *= limit / n;
  Vector next = state;
  next.head<2>() += a;
  return next;
}

bool rollout_success(const Vector& final_state, const SyntheticTaskSpec& spec) {
  const int last = spec.num_phases - 1;
  const Eigen::Vector2d agent = final_state.head<2>();
  const Eigen::Vector2d goal = final_state.segment<2>(2 + 2 * last);
  return (agent - goal).norm() < spec.phases[last].arrival_eps;
}

std::optional<Trajectory> generate_trajectory(const SyntheticTaskSpec& spec, const Eigen::Vector2d& start,
                                              const std::vector<Eigen::Vector2d>& waypoints, std::uint64_t noise_seed) {
  spec.validate();
  if (static_cast<int>(waypoints.size()) != spec.num_phases) throw std::invalid_argument("one waypoint per phase required");
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const int ds = spec.state_dim();
  Vector state(ds);
  state.head<2>() = start;
  for (int k = 0; k < spec.num_phases; ++k) state.segment<2>(2 + 2 * k) = waypoints[k];

  std::vector<Vector> states{state};
  std::vector<Eigen::Vector2d> actions;
  std::vector<int> phase{0};
  std::vector<int> keys;
  int k = 0;
  while (k < spec.num_phases) {
    if (static_cast<int>(states.size()) >= spec.max_steps) return std::nullopt;
    const PhaseSpec& ph = spec.phases[k];
    const Eigen::Vector2d to_goal = waypoints[k] - state.head<2>();
    const double dist = to_goal.norm();
    Eigen::Vector2d a = dist > 0.0 ? Eigen::Vector2d(ph.action_scale * to_goal / dist) : Eigen::Vector2d::Zero();
    a(0) += ph.noise_sigma * gauss(rng);
    a(1) += ph.noise_sigma * gauss(rng);
    state = env_step(state, a, spec);
    // record the displacement actually applied (after clipping)
    actions.push_back(state.head<2>() - states.back().head<2>());
    states.push_back(state);
    phase.push_back(k);
    if ((state.head<2>() - waypoints[k]).norm() < ph.arrival_eps) {
      keys.push_back(static_cast<int>(states.size()) - 1);
      ++k;
    }
  }
  // terminal no-op so that actions and states have equal length
  actions.push_back(Eigen::Vector2d::Zero());

  Trajectory tr;
  const int t_len = static_cast<int>(states.size());
  tr.states.resize(t_len, ds);
  tr.actions.resize(t_len, 2);
  for (int t = 0; t < t_len; ++t) {
    tr.states.row(t) = states[t].transpose();
    tr.actions.row(t) = actions[t].transpose();
  }
  tr.gt_phase = std::move(phase);
  tr.gt_key_times = std::move(keys);
  return tr;
}

Vector sample_initial_state(const SyntheticTaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Vector s(spec.state_dim());
  s.head<2>() = sample_box(spec.start_box, rng);
  for (int k = 0; k < spec.num_phases; ++k) s.segment<2>(2 + 2 * k) = sample_box(spec.phases[k].waypoint_box, rng);
  return s;
}

std::optional<Trajectory> generate_trajectory(const SyntheticTaskSpec& spec, std::uint64_t seed) {
  const Vector init = sample_initial_state(spec, seed);
  std::vector<Eigen::Vector2d> wps;
  for (int k = 0; k < spec.num_phases; ++k) wps.push_back(init.segment<2>(2 + 2 * k));
  return generate_trajectory(spec, init.head<2>(), wps, mix_seed(seed, 0x6e6f697365ULL));
}

Dataset generate_dataset(const SyntheticTaskSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("dataset size must be positive");
  Dataset d;
  d.spec = spec;
  d.trajectories.resize(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 10000) throw std::runtime_error("trajectory generation keeps failing; increase max_steps");
      auto tr = generate_trajectory(spec, mix_seed(mix_seed(seed, i), attempt));
      if (tr) {
        d.trajectories[i] = std::move(*tr);
        break;
      }
    }
  });
  d.stats = compute_stats(d.trajectories);
  return d;
}

NormStats compute_stats(const std::vector<Trajectory>& trajs) {
  if (trajs.empty()) throw std::invalid_argument("compute_stats: empty dataset");
  const Eigen::Index ds = trajs.front().states.cols();
  const Eigen::Index da = trajs.front().actions.cols();
  Vector s_sum = Vector::Zero(ds), s_sq = Vector::Zero(ds);
  Vector a_sum = Vector::Zero(da), a_sq = Vector::Zero(da);
  double count = 0.0;
  for (const auto& t : trajs) {
    if (t.states.cols() != ds || t.actions.cols() != da) throw std::invalid_argument("compute_stats: inconsistent dimensions");
    s_sum += t.states.colwise().sum().transpose();
    a_sum += t.actions.colwise().sum().transpose();
    count += static_cast<double>(t.states.rows());
  }
  NormStats st;
  st.state_mean = s_sum / count;
  st.action_mean = a_sum / count;
  for (const auto& t : trajs) {
    s_sq += (t.states.rowwise() - st.state_mean.transpose()).colwise().squaredNorm().transpose();
    a_sq += (t.actions.rowwise() - st.action_mean.transpose()).colwise().squaredNorm().transpose();
  }
  st.state_std = (s_sq / count).cwiseSqrt().cwiseMax(kStdFloor);
  st.action_std = (a_sq / count).cwiseSqrt().cwiseMax(kStdFloor);
  return st;
}

Dataset normalize_dataset(const Dataset& d) {
  if (d.trajectories.empty()) throw std::invalid_argument("normalize_dataset: empty dataset");
  if (d.normalized) return d;
  Dataset out = d;
  if (out.stats.state_mean.size() == 0) out.stats = compute_stats(d.trajectories);
  const auto& st = out.stats;
  for (auto& t : out.trajectories) {
    t.states = ((t.states.rowwise() - st.state_mean.transpose()).array().rowwise() / st.state_std.transpose().array()).matrix();
    t.actions = ((t.actions.rowwise() - st.action_mean.transpose()).array().rowwise() / st.action_std.transpose().array()).matrix();
  }
  out.normalized = true;
  return out;
}

Dataset denormalize_dataset(const Dataset& d) {
  if (!d.normalized) return d;
  Dataset out = d;
  const auto& st = out.stats;
  for (auto& t : out.trajectories) {
    t.states = ((t.states.array().rowwise() * st.state_std.transpose().array()).rowwise() + st.state_mean.transpose().array()).matrix();
    t.actions = ((t.actions.array().rowwise() * st.action_std.transpose().array()).rowwise() + st.action_mean.transpose().array()).matrix();
  }
  out.normalized = false;
  return out;
}

// ---------------------------------------------------------------- persistence

namespace {

constexpr int kFormatVersion = 1;

json vec_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.cols());
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

json box_to_json(const Box2& b) { return {{"lo", {b.lo(0), b.lo(1)}}, {"hi", {b.hi(0), b.hi(1)}}}; }

[[noreturn]] void fail(const std::filesystem::path& file, const std::string& field, const std::string& what) {
  throw DataError(file.string() + ": field '" + field + "': " + what);
}

const json& need(const json& j, const char* key, const std::filesystem::path& file) {
  if (!j.is_object() || !j.contains(key)) fail(file, key, "missing");
  return j.at(key);
}

double num(const json& j, const char* key, const std::filesystem::path& file) {
  const json& v = need(j, key, file);
  if (!v.is_number()) fail(file, key, "expected a number");
  return v.get<double>();
}

Vector json_to_vec(const json& j, const char* key, Eigen::Index expect, const std::filesystem::path& file) {
  const json& v = need(j, key, file);
  if (!v.is_array()) fail(file, key, "expected an array");
  if (expect >= 0 && static_cast<Eigen::Index>(v.size()) != expect)
    fail(file, key, "expected length " + std::to_string(expect) + ", got " + std::to_string(v.size()));
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(file, key, "non-numeric entry");
    out(i) = v[i].get<double>();
  }
  return out;
}

Matrix json_to_mat(const json& j, const char* key, Eigen::Index cols, const std::filesystem::path& file) {
  const json& v = need(j, key, file);
  if (!v.is_array()) fail(file, key, "expected an array of rows");
  Matrix m(v.size(), cols);
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (!v[r].is_array() || static_cast<Eigen::Index>(v[r].size()) != cols)
      fail(file, key, "row " + std::to_string(r) + " does not have " + std::to_string(cols) + " columns");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!v[r][c].is_number()) fail(file, key, "non-numeric entry");
      m(r, c) = v[r][c].get<double>();
    }
  }
  return m;
}

Box2 json_to_box(const json& j, const char* key, const std::filesystem::path& file) {
  const json& b = need(j, key, file);
  Box2 box;
  Vector lo = json_to_vec(b, "lo", 2, file), hi = json_to_vec(b, "hi", 2, file);
  box.lo = lo;
  box.hi = hi;
  return box;
}

std::vector<int> json_to_ints(const json& j, const char* key, const std::filesystem::path& file) {
  if (!j.contains(key)) return {};
  const json& v = j.at(key);
  if (!v.is_array()) fail(file, key, "expected an array");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) fail(file, key, "expected integers");
    out.push_back(e.get<int>());
  }
  return out;
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError(file.string() + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(file.string() + ": corrupt JSON: " + e.what());
  }
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError(file.string() + ": cannot write");
  out << text;
}

std::string traj_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%05zu.json", i);
  return buf;
}

}  // namespace

json spec_to_json(const SyntheticTaskSpec& s) {
  json phases = json::array();
  for (const auto& p : s.phases)
    phases.push_back({{"waypoint_box", box_to_json(p.waypoint_box)},
                      {"arrival_eps", p.arrival_eps},
                      {"action_scale", p.action_scale},
                      {"noise_sigma", p.noise_sigma}});
  return {{"num_phases", s.num_phases}, {"max_steps", s.max_steps}, {"start_box", box_to_json(s.start_box)},
          {"phases", phases}};
}

SyntheticTaskSpec spec_from_json(const json& j, const std::filesystem::path& file) {
  SyntheticTaskSpec s;
  s.num_phases = static_cast<int>(num(j, "num_phases", file));
  s.max_steps = static_cast<int>(num(j, "max_steps", file));
  if (j.contains("start_box")) s.start_box = json_to_box(j, "start_box", file);
  const json& ph = need(j, "phases", file);
  if (!ph.is_array()) fail(file, "phases", "expected an array");
  for (const auto& p : ph) {
    PhaseSpec ps;
    ps.waypoint_box = json_to_box(p, "waypoint_box", file);
    ps.arrival_eps = num(p, "arrival_eps", file);
    ps.action_scale = num(p, "action_scale", file);
    ps.noise_sigma = num(p, "noise_sigma", file);
    s.phases.push_back(ps);
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    fail(file, "spec", e.what());
  }
  return s;
}

void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  if (d.trajectories.empty()) throw std::invalid_argument("save_dataset: empty dataset");
  std::filesystem::create_directories(dir);
  json meta = {{"format_version", kFormatVersion},
               {"count", d.trajectories.size()},
               {"normalized", d.normalized},
               {"spec", spec_to_json(d.spec)},
               {"state_mean", vec_to_json(d.stats.state_mean)},
               {"state_std", vec_to_json(d.stats.state_std)},
               {"action_mean", vec_to_json(d.stats.action_mean)},
               {"action_std", vec_to_json(d.stats.action_std)}};
  write_text(dir / "meta.json", meta.dump(1) + "\n");
  for (std::size_t i = 0; i < d.trajectories.size(); ++i) {
    const auto& t = d.trajectories[i];
    json j = {{"states", mat_to_json(t.states)}, {"actions", mat_to_json(t.actions)}};
    j["gt_phase"] = t.gt_phase;
    j["gt_key_times"] = t.gt_key_times;
    write_text(dir / traj_name(i), j.dump() + "\n");
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) throw DataError(meta_path.string() + ": not found");
  const json meta = read_json(meta_path);
  if (static_cast<int>(num(meta, "format_version", meta_path)) != kFormatVersion)
    fail(meta_path, "format_version", "unsupported version");
  Dataset d;
  d.spec = spec_from_json(need(meta, "spec", meta_path), meta_path);
  const int ds = d.spec.state_dim();
  const int da = SyntheticTaskSpec::action_dim();
  d.stats.state_mean = json_to_vec(meta, "state_mean", ds, meta_path);
  d.stats.state_std = json_to_vec(meta, "state_std", ds, meta_path);
  d.stats.action_mean = json_to_vec(meta, "action_mean", da, meta_path);
  d.stats.action_std = json_to_vec(meta, "action_std", da, meta_path);
  if ((d.stats.state_std.array() <= 0).any()) fail(meta_path, "state_std", "entries must be positive");
  if ((d.stats.action_std.array() <= 0).any()) fail(meta_path, "action_std", "entries must be positive");
  d.normalized = meta.value("normalized", false);
  const long long count = static_cast<long long>(num(meta, "count", meta_path));
  if (count < 1) fail(meta_path, "count", "must be positive");
  d.trajectories.resize(count);
  for (long long i = 0; i < count; ++i) {
    const auto path = dir / traj_name(static_cast<std::size_t>(i));
    const json j = read_json(path);
    Trajectory t;
    t.states = json_to_mat(j, "states", ds, path);
    t.actions = json_to_mat(j, "actions", da, path);
    if (t.states.rows() != t.actions.rows()) fail(path, "actions", "row count differs from states");
    if (t.states.rows() < 2) fail(path, "states", "trajectory shorter than 2 steps");
    t.gt_phase = json_to_ints(j, "gt_phase", path);
    t.gt_key_times = json_to_ints(j, "gt_key_times", path);
    if (!t.gt_phase.empty() && static_cast<int>(t.gt_phase.size()) != t.length())
      fail(path, "gt_phase", "length differs from states");
    if (!t.gt_key_times.empty()) {
      if (!std::is_sorted(t.gt_key_times.begin(), t.gt_key_times.end()) ||
          std::adjacent_find(t.gt_key_times.begin(), t.gt_key_times.end()) != t.gt_key_times.end())
        fail(path, "gt_key_times", "must be strictly increasing");
      if (t.gt_key_times.back() != t.length() - 1) fail(path, "gt_key_times", "last key must be T-1");
    }
    d.trajectories[i] = std::move(t);
  }
  return d;
}

std::string dataset_id(const std::filesystem::path& dir) {
  Fnv1a h;
  auto add_file = [&](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError(p.string() + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    h.update(ss.str());
  };
  const json meta = read_json(dir / "meta.json");
  add_file(dir / "meta.json");
  const long long count = meta.value("count", 0LL);
  for (long long i = 0; i < count; ++i) add_file(dir / traj_name(static_cast<std::size_t>(i)));
  return h.hex();
}

}  // namespace infocon::synth
