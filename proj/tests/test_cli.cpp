#include "infocon/cli.hpp"
#include "infocon/evallab.hpp"
#include "infocon/serialize.hpp"

#include "common.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

namespace infocon {
namespace {

using nlohmann::json;
using testing::TempDir;
namespace fs = std::filesystem;

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "infocon");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(bytes(p)); }

// Every opened element is closed in order and the document has one root.
bool balanced_xml(const std::string& text) {
  std::vector<std::string> stack;
  int roots = 0;
  const std::regex tag(R"(<(/?)([A-Za-z][\w:-]*)[^<>]*?(/?)>)");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), tag); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (m[1] == "/") {
      if (stack.empty() || stack.back() != m[2]) return false;
      stack.pop_back();
    } else {
      if (stack.empty()) ++roots;
      if (m[3] != "/") stack.push_back(m[2]);
    }
  }
  return stack.empty() && roots == 1;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    ASSERT_EQ(run({"gen-data", "--n", "6", "--seed", "3", "--out", (*dir_ / "data").string()}), 0);
  }
  static void TearDownTestSuite() { delete dir_; }
  static fs::path path(const std::string& name) { return *dir_ / name; }
  static std::string data() { return path("data").string(); }

  static TempDir* dir_;
};

TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, GenDataIsByteReproducible) {
  ASSERT_EQ(run({"gen-data", "--n", "6", "--seed", "3", "--out", path("again").string()}), 0);
  int files = 0;
  for (const auto& e : fs::directory_iterator(path("data"))) {
    ++files;
    EXPECT_EQ(bytes(e.path()), bytes(path("again") / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 7);
  const json m = read_json(cli::manifest_path(path("data")));
  EXPECT_EQ(m["command"], "gen-data");
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["outputs"]["dataset"]["hash"], synth::dataset_id(path("data")));
  EXPECT_EQ(m["outputs"]["dataset"]["hash"], read_json(cli::manifest_path(path("again")))["outputs"]["dataset"]["hash"]);
}

TEST_F(CliTest, GenDataRerunReplacesStaleFiles) {
  ASSERT_EQ(run({"gen-data", "--n", "4", "--seed", "1", "--out", path("shrink").string()}), 0);
  ASSERT_EQ(run({"gen-data", "--n", "2", "--seed", "1", "--out", path("shrink").string()}), 0);
  EXPECT_EQ(synth::load_dataset(path("shrink")).trajectories.size(), 2u);
  EXPECT_FALSE(fs::exists(path("shrink") / "traj_00003.json"));
}

TEST_F(CliTest, GenDataErrors) {
  EXPECT_EQ(run({"gen-data", "--n", "0", "--seed", "1", "--out", path("zero").string()}), cli::kUsage);
  EXPECT_EQ(run({"gen-data", "--n", "3", "--out", path("noseed").string()}), cli::kUsage);
  {
    std::ofstream out(path("bad_spec.json"));
    out << R"({"num_phases": 3})";
  }
  EXPECT_EQ(run({"gen-data", "--spec", path("bad_spec.json").string(), "--n", "3", "--seed", "1", "--out",
                 path("badspec").string()}),
            cli::kData);
  {
    std::ofstream out(path("spec.json"));
    auto s = synth::SyntheticTaskSpec::standard(2);
    out << spec_to_json(s).dump();
  }
  ASSERT_EQ(run({"gen-data", "--spec", path("spec.json").string(), "--n", "3", "--seed", "1", "--out",
                 path("two").string()}),
            0);
  EXPECT_EQ(synth::load_dataset(path("two")).spec.num_phases, 2);
}

TEST_F(CliTest, UnknownCommandAndMissingFlagsAreUsageErrors) {
  EXPECT_EQ(run({"frobnicate"}), cli::kUsage);
  EXPECT_EQ(run({}), cli::kUsage);
  EXPECT_EQ(run({"eval", "--data", data()}), cli::kUsage);
}

TEST_F(CliTest, DefaultConfigRoundTrips) {
  ASSERT_EQ(run({"default-config", "--preset", "paper", "--out", path("paper.json").string()}), 0);
  EXPECT_EQ(read_json(path("paper.json")), config_to_json(TrainConfig::paper_scale()));
  EXPECT_EQ(run({"default-config", "--preset", "huge", "--out", path("huge.json").string()}), cli::kUsage);
}

void write_quick_config(const fs::path& file) {
  TrainConfig c = TrainConfig::desk_scale();
  c.pretrain_iters = 2;
  c.total_iters = 4;
  c.warmup_iters = 1;
  c.batch_size = 2;
  std::ofstream(file) << config_to_json(c).dump(2);
}

TEST_F(CliTest, TrainLabelEvalPlotPipeline) {
  write_quick_config(path("quick.json"));
  const std::string ckpt = path("model.ckpt").string();
  ASSERT_EQ(run({"train", "--data", data(), "--config", path("quick.json").string(), "--out", ckpt,
                 "--ablate", "gen_only"}),
            0);
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(ckpt + ".config.json"));
  const std::string csv = bytes(ckpt + ".loss.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 + 4);
  const json tm = read_json(cli::manifest_path(ckpt));
  EXPECT_EQ(tm["config"]["ablation"], "gen_only");
  EXPECT_EQ(tm["inputs"]["data"]["hash"], synth::dataset_id(path("data")));
  EXPECT_EQ(tm["outputs"]["checkpoint"]["hash"], cli::file_hash(ckpt));

  const std::string labels = path("labels.json").string();
  ASSERT_EQ(run({"label", "--data", data(), "--ckpt", ckpt, "--out", labels}), 0);
  const LabelSet l = load_labels(labels);
  EXPECT_EQ(l.model_id, cli::file_hash(ckpt));
  EXPECT_EQ(l.dataset_id, synth::dataset_id(path("data")));
  EXPECT_EQ(l.trajectories.size(), 6u);

  const std::string report = path("report.json").string();
  ASSERT_EQ(run({"eval", "--data", data(), "--labels", labels, "--baseline", "uniform:3", "--baseline", "last", "--out",
                 report}),
            0);
  const json r = read_json(report);
  EXPECT_TRUE(r["warnings"].empty());
  EXPECT_EQ(r["model_id"], l.model_id);
  ASSERT_EQ(r["baselines"].size(), 2u);
  EXPECT_EQ(r["baselines"][0]["name"], "uniform:3");
  const auto data_set = synth::normalize_dataset(synth::load_dataset(path("data")));
  EXPECT_EQ(r["baselines"][0]["his"]["total"], his_report(baseline_uniform(data_set, 3), data_set).total);
  EXPECT_EQ(r["his"]["total"], his_report(l, data_set).total);
  EXPECT_FALSE(r["activation_rates"].empty());

  const std::string svg = path("t1.svg").string();
  ASSERT_EQ(run({"plot", "--data", data(), "--labels", labels, "--traj", "1", "--out", svg}), 0);
  const std::string first = bytes(svg);
  EXPECT_TRUE(balanced_xml(first));
  EXPECT_NE(first.find("<svg"), std::string::npos);
  ASSERT_EQ(run({"plot", "--data", data(), "--labels", labels, "--traj", "1", "--out", svg}), 0);
  EXPECT_EQ(bytes(svg), first);
  EXPECT_EQ(run({"plot", "--data", data(), "--labels", labels, "--traj", "6", "--out", path("x.svg").string()}),
            cli::kUsage);
  EXPECT_EQ(run({"plot", "--data", data(), "--labels", labels, "--traj", "-1", "--out", path("x.svg").string()}),
            cli::kUsage);
  EXPECT_FALSE(fs::exists(path("x.svg")));
}

TEST_F(CliTest, TrainErrors) {
  write_quick_config(path("quick.json"));
  EXPECT_EQ(run({"train", "--data", path("nowhere").string(), "--config", path("quick.json").string(), "--out",
                 path("m.ckpt").string()}),
            cli::kData);
  {
    std::ofstream out(path("partial.json"));
    out << R"({"lambda": 0.1})";
  }
  EXPECT_EQ(run({"train", "--data", data(), "--config", path("partial.json").string(), "--out",
                 path("m.ckpt").string()}),
            cli::kUsage);
  EXPECT_EQ(run({"train", "--data", data(), "--config", path("quick.json").string(), "--out",
                 path("m.ckpt").string(), "--ablate", "neither"}),
            cli::kUsage);
  EXPECT_FALSE(fs::exists(path("m.ckpt")));
}

TEST_F(CliTest, GroundTruthLabelsScoreZero) {
  const std::string labels = path("gt.json").string();
  ASSERT_EQ(run({"label", "--data", data(), "--gt", "--out", labels}), 0);
  const std::string report = path("gt_report.json").string();
  ASSERT_EQ(run({"eval", "--data", data(), "--labels", labels, "--out", report}), 0);
  const json r = read_json(report);
  EXPECT_EQ(r["his"]["total"], 0);
  EXPECT_EQ(r["his"]["mean_per_gt_key"], 0.0);
  EXPECT_TRUE(r["warnings"].empty());
  EXPECT_EQ(run({"label", "--data", data(), "--out", labels}), cli::kUsage);
}

TEST_F(CliTest, EvalWarnsOnDatasetMismatch) {
  const std::string labels = path("foreign.json").string();
  ASSERT_EQ(run({"label", "--data", data(), "--gt", "--out", labels}), 0);
  LabelSet l = load_labels(labels);
  l.dataset_id = "0123456789abcdef";
  save_labels(l, labels);
  const std::string report = path("mismatch.json").string();
  ASSERT_EQ(run({"eval", "--data", data(), "--labels", labels, "--out", report}), 0);
  const json r = read_json(report);
  ASSERT_EQ(r["warnings"].size(), 1u);
  EXPECT_NE(r["warnings"][0].get<std::string>().find(synth::dataset_id(path("data"))), std::string::npos);
  EXPECT_EQ(r["labels_dataset_id"], "0123456789abcdef");
  EXPECT_EQ(read_json(cli::manifest_path(report))["warnings"], r["warnings"]);
  l.dataset_id.clear();
  save_labels(l, labels);
  ASSERT_EQ(run({"eval", "--data", data(), "--labels", labels, "--out", report}), 0);
  EXPECT_EQ(read_json(report)["warnings"].size(), 1u);
}

TEST_F(CliTest, EvalErrors) {
  const std::string labels = path("gt2.json").string();
  ASSERT_EQ(run({"label", "--data", data(), "--gt", "--out", labels}), 0);
  for (const char* b : {"uniform", "uniform:x", "uniform:0", "median:2", "uniform:100000"})
    EXPECT_EQ(run({"eval", "--data", data(), "--labels", labels, "--baseline", b, "--out", path("r.json").string()}),
              cli::kUsage)
        << b;
  EXPECT_EQ(run({"eval", "--data", data(), "--labels", path("none.json").string(), "--out", path("r.json").string()}),
            cli::kData);
  {
    std::ofstream out(path("short.json"));
    out << R"({"model_id": "x", "trajectories": []})";
  }
  EXPECT_EQ(run({"eval", "--data", data(), "--labels", path("short.json").string(), "--out", path("r.json").string()}),
            cli::kData);
}

TEST_F(CliTest, PolicyReport) {
  const std::string labels = path("gt3.json").string();
  ASSERT_EQ(run({"label", "--data", data(), "--gt", "--out", labels}), 0);
  const std::string report = path("policy.json").string();
  ASSERT_EQ(run({"policy", "--data", data(), "--labels", labels, "--iters", "5", "--episodes", "4", "--out", report}),
            0);
  const json r = read_json(report);
  EXPECT_GE(r["success_rate"].get<double>(), 0.0);
  EXPECT_LE(r["success_rate"].get<double>(), 1.0);
  EXPECT_EQ(r["config"]["iters"], 5);
  const json m = read_json(cli::manifest_path(report));
  EXPECT_EQ(m["command"], "policy");
  EXPECT_EQ(m["inputs"]["labels"]["hash"], cli::file_hash(labels));
}

}  // namespace
}  // namespace infocon
