#pragma once

#include "infocon/autodiff.hpp"
#include "infocon/synthdata.hpp"

#include <unistd.h>

#include <filesystem>
#include <map>
#include <random>
#include <string>

namespace infocon::testing {

using ad::Matrix;
using ad::Vector;

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline Vector random_unit(Eigen::Index n, std::mt19937_64& rng) {
  Vector v = random_matrix(n, 1, rng);
  return v / v.norm();
}

// Normalised standard-task dataset, generated once per (n, seed).
inline const synth::Dataset& fixture(int n = 12, std::uint64_t seed = 5) {
  static std::map<std::pair<int, std::uint64_t>, synth::Dataset> cache;
  auto it = cache.find({n, seed});
  if (it == cache.end())
    it = cache.emplace(std::make_pair(n, seed),
                       synth::normalize_dataset(synth::generate_dataset(synth::SyntheticTaskSpec::standard(), n, seed)))
             .first;
  return it->second;
}

// Copy of a trajectory cut to its first `len` steps.
inline synth::Trajectory truncated(const synth::Trajectory& t, int len) {
  synth::Trajectory out;
  out.states = t.states.topRows(len);
  out.actions = t.actions.topRows(len);
  return out;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("infocon_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace infocon::testing
