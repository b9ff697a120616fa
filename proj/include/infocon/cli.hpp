#pragma once

// Command implementations behind the `infocon` executable. Each command
// writes its outputs plus one run manifest at <out>.manifest.json.

#include "infocon/config.hpp"
#include "infocon/guided.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace infocon::cli {

namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kDiverged = 4 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GenDataArgs {
  std::optional<fs::path> spec;  // standard 3-phase task when absent
  int n = 200;
  std::uint64_t seed = 0;
  fs::path out;
};

struct TrainArgs {
  fs::path data, config, out;
  std::optional<Ablation> ablate;
};

struct LabelArgs {
  fs::path data;
  std::optional<fs::path> ckpt;  // absent with gt = true
  bool gt = false;
  fs::path out;
};

struct EvalArgs {
  fs::path data, labels, out;
  std::vector<std::string> baselines;  // last | uniform:k | lindp:k
};

struct PolicyArgs {
  fs::path data, labels, out;
  PolicyConfig policy;
  int episodes = 100;
  std::uint64_t eval_seed = 0;
};

struct PlotArgs {
  fs::path data, labels, out;
  int traj = 0;
};

void cmd_gen_data(const GenDataArgs& a);
void cmd_train(const TrainArgs& a);
void cmd_label(const LabelArgs& a);
void cmd_eval(const EvalArgs& a);
void cmd_policy(const PolicyArgs& a);
void cmd_plot(const PlotArgs& a);

// SVG for one trajectory: path segments coloured by concept, predicted key
// states, ground-truth keys and waypoints. Positions are in raw units.
std::string plot_svg(const synth::Dataset& raw, const TrajectoryLabels& labels, int traj);

fs::path manifest_path(const fs::path& out);
std::string file_hash(const fs::path& file);
// Hash of a file, or of a dataset directory's content.
std::string artifact_hash(const fs::path& p);

// Parses argv and dispatches. Returns the process exit code; errors are
// reported on stderr.
int run(int argc, const char* const* argv);

}  // namespace infocon::cli
