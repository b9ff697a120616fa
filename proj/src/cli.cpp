#include "infocon/cli.hpp"

#include "infocon/checkpoint.hpp"
#include "infocon/evallab.hpp"
#include "infocon/hash.hpp"
#include "infocon/serialize.hpp"
#include "infocon/trainer.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace infocon::cli {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw synth::DataError(file.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw synth::DataError(file.string() + ": cannot write");
  out << text;
}

json artifact(const fs::path& p) { return {{"path", p.string()}, {"hash", artifact_hash(p)}}; }

class Manifest {
 public:
  Manifest(std::string command, const fs::path& out) : out_(out), start_(Clock::now()) {
    j_["command"] = std::move(command);
    j_["inputs"] = json::object();
    j_["outputs"] = json::object();
  }
  json& operator[](const char* key) { return j_[key]; }
  void input(const char* name, const fs::path& p) { j_["inputs"][name] = artifact(p); }
  void output(const char* name, const fs::path& p) { j_["outputs"][name] = artifact(p); }
  void write() {
    j_["wall_time_s"] = std::chrono::duration<double>(Clock::now() - start_).count();
    write_file(manifest_path(out_), j_.dump(2) + "\n");
  }

 private:
  json j_;
  fs::path out_;
  Clock::time_point start_;
};

synth::Dataset load_normalized(const fs::path& dir) { return synth::normalize_dataset(synth::load_dataset(dir)); }

LabelSet baseline(const synth::Dataset& d, const std::string& name) {
  if (name == "last") return baseline_last_state(d);
  const auto colon = name.find(':');
  if (colon == std::string::npos) throw UsageError("unknown baseline '" + name + "' (expected last, uniform:k or lindp:k)");
  const std::string kind = name.substr(0, colon);
  int k = 0;
  try {
    std::size_t used = 0;
    k = std::stoi(name.substr(colon + 1), &used);
    if (used != name.size() - colon - 1) throw std::invalid_argument(name);
  } catch (const std::exception&) {
    throw UsageError("baseline '" + name + "': k must be an integer");
  }
  if (k < 1) throw UsageError("baseline '" + name + "': k must be >= 1");
  for (const auto& t : d.trajectories)
    if (k > t.length())
      throw UsageError("baseline '" + name + "': k exceeds a trajectory length of " + std::to_string(t.length()));
  if (kind == "uniform") return baseline_uniform(d, k);
  if (kind == "lindp") return baseline_linear_dp(d, k);
  throw UsageError("unknown baseline '" + name + "' (expected last, uniform:k or lindp:k)");
}

json policy_config_json(const PolicyConfig& c) {
  return {{"model_dim", c.model_dim},       {"num_layers", c.num_layers},     {"num_heads", c.num_heads},
          {"window_len", c.window_len},     {"max_len", c.max_len},           {"iters", c.iters},
          {"batch_size", c.batch_size},     {"base_lr", c.base_lr},           {"warmup_iters", c.warmup_iters},
          {"weight_decay", c.weight_decay}, {"key_weight", c.key_weight},     {"seed", c.seed}};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

fs::path manifest_path(const fs::path& out) {
  fs::path p = out;
  if (p.filename().empty()) p = p.parent_path();
  return p.string() + ".manifest.json";
}

std::string file_hash(const fs::path& file) { return fnv1a_hex(read_file(file)); }

std::string artifact_hash(const fs::path& p) {
  if (fs::is_directory(p)) return synth::dataset_id(p);
  return file_hash(p);
}

void cmd_gen_data(const GenDataArgs& a) {
  if (a.n < 1) throw UsageError("gen-data: --n must be >= 1");
  Manifest m("gen-data", a.out);
  synth::SyntheticTaskSpec spec = synth::SyntheticTaskSpec::standard();
  if (a.spec) {
    std::ifstream in(*a.spec);
    if (!in) throw synth::DataError(a.spec->string() + ": cannot open");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw synth::DataError(a.spec->string() + ": corrupt JSON: " + e.what());
    }
    spec = synth::spec_from_json(j, *a.spec);
    m.input("spec", *a.spec);
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw synth::DataError(std::string("invalid spec: ") + e.what());
  }
  const synth::Dataset d = synth::generate_dataset(spec, a.n, a.seed);
  if (fs::exists(a.out)) {
    // Stale trajectory files from a larger earlier run would be ignored by
    // load_dataset but would change the directory hash.
    for (const auto& e : fs::directory_iterator(a.out))
      if (e.path().filename().string().rfind("traj_", 0) == 0) fs::remove(e.path());
  }
  synth::save_dataset(d, a.out);
  m["seed"] = a.seed;
  m["config"] = {{"n", a.n}, {"spec", synth::spec_to_json(spec)}};
  m.output("dataset", a.out);
  m.write();
}

void cmd_train(const TrainArgs& a) {
  Manifest m("train", a.out);
  TrainConfig cfg = load_config(a.config);
  if (a.ablate) cfg.ablation = *a.ablate;
  cfg.validate();
  const synth::Dataset d = load_normalized(a.data);
  m.input("data", a.data);
  m.input("config", a.config);

  InfoConModel model(cfg, d.state_dim(), d.action_dim());
  Trainer trainer(model, d);
  trainer.pretrain();
  trainer.train();
  round_to_float(model);

  CheckpointMeta meta;
  meta.config = cfg;
  meta.iteration = trainer.iterations_done();
  meta.state_dim = d.state_dim();
  meta.action_dim = d.action_dim();
  meta.dataset_id = synth::dataset_id(a.data);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_checkpoint(model, meta, a.out);
  const fs::path csv = a.out.string() + ".loss.csv";
  trainer.write_loss_csv(csv);

  m["seed"] = cfg.seed;
  m["config"] = config_to_json(cfg);
  m["ablation"] = to_string(cfg.ablation);
  m["iterations"] = meta.iteration;
  m.output("checkpoint", a.out);
  m.output("sidecar", sidecar_path(a.out));
  m.output("loss_curve", csv);
  m.write();
}

void cmd_label(const LabelArgs& a) {
  Manifest m("label", a.out);
  const synth::Dataset d = load_normalized(a.data);
  m.input("data", a.data);
  LabelSet labels;
  if (a.gt) {
    if (a.ckpt) throw UsageError("label: --gt and --ckpt are exclusive");
    labels = ground_truth_labels(d);
  } else {
    if (!a.ckpt) throw UsageError("label: --ckpt is required unless --gt is given");
    CheckpointMeta meta;
    const auto model = load_model(*a.ckpt, &meta);
    labels = label_dataset(*model, d, file_hash(*a.ckpt));
    m.input("checkpoint", *a.ckpt);
    m["seed"] = meta.config.seed;
    m["config"] = config_to_json(meta.config);
  }
  labels.dataset_id = synth::dataset_id(a.data);
  save_labels(labels, a.out);
  m.output("labels", a.out);
  m.write();
}

void cmd_eval(const EvalArgs& a) {
  Manifest m("eval", a.out);
  const synth::Dataset d = synth::load_dataset(a.data);
  const LabelSet labels = load_labels(a.labels);
  validate_labels(labels, d);
  m.input("data", a.data);
  m.input("labels", a.labels);

  json report;
  const std::string data_id = synth::dataset_id(a.data);
  json warnings = json::array();
  if (labels.dataset_id.empty())
    warnings.push_back("labels carry no dataset_id");
  else if (labels.dataset_id != data_id)
    warnings.push_back("labels were produced on dataset " + labels.dataset_id + ", evaluating on " + data_id);
  report["model_id"] = labels.model_id;
  report["labels_dataset_id"] = labels.dataset_id;
  report["dataset_id"] = data_id;
  report["warnings"] = warnings;
  report["his"] = his_report_to_json(his_report(labels, d));

  double keys = 0;
  int max_id = -1;
  bool have_ids = true;
  for (const auto& t : labels.trajectories) {
    keys += t.key_times.size();
    if (t.concept_ids.empty()) have_ids = false;
    for (int c : t.concept_ids) max_id = std::max(max_id, c);
  }
  report["mean_keys_per_trajectory"] = keys / labels.trajectories.size();
  report["activation_rates"] = have_ids ? json(activation_rates(labels, max_id + 1)) : json::array();

  json blocks = json::array();
  for (const auto& name : a.baselines) {
    const LabelSet b = baseline(d, name);
    blocks.push_back({{"name", name}, {"his", his_report_to_json(his_report(b, d))}});
  }
  report["baselines"] = blocks;
  write_file(a.out, report.dump(1) + "\n");

  m["config"] = {{"baselines", a.baselines}};
  m["warnings"] = warnings;
  m.output("report", a.out);
  m.write();
}

void cmd_policy(const PolicyArgs& a) {
  if (a.episodes < 1) throw UsageError("policy: --episodes must be >= 1");
  Manifest m("policy", a.out);
  const synth::Dataset d = load_normalized(a.data);
  const LabelSet labels = load_labels(a.labels);
  m.input("data", a.data);
  m.input("labels", a.labels);
  PolicyTrainLog log;
  const auto policy = train_guided_policy(d, labels, a.policy, &log);
  const double rate = evaluate_guided_policy(*policy, d, a.episodes, a.eval_seed);
  const json report = {{"model_id", labels.model_id},
                       {"success_rate", rate},
                       {"episodes", a.episodes},
                       {"eval_seed", a.eval_seed},
                       {"config", policy_config_json(a.policy)},
                       {"first_action_loss", log.first_action_loss},
                       {"last_action_loss", log.last_action_loss},
                       {"last_key_loss", log.last_key_loss}};
  write_file(a.out, report.dump(1) + "\n");
  m["seed"] = a.policy.seed;
  m["config"] = report["config"];
  m.output("report", a.out);
  m.write();
}

std::string plot_svg(const synth::Dataset& raw, const TrajectoryLabels& labels, int traj) {
  if (traj < 0 || traj >= static_cast<int>(raw.trajectories.size()))
    throw UsageError("plot: trajectory index " + std::to_string(traj) + " outside [0, " +
                     std::to_string(raw.trajectories.size()) + ")");
  const synth::Dataset d = synth::denormalize_dataset(raw);
  const auto& t = d.trajectories[traj];
  const int T = t.length();
  const int P = d.spec.num_phases;
  Eigen::Vector2d lo = t.states.row(0).head<2>().transpose(), hi = lo;
  auto grow = [&](const Eigen::Vector2d& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  };
  for (int s = 0; s < T; ++s) grow(t.states.row(s).head<2>().transpose());
  for (int k = 0; k < P; ++k) grow(t.states.row(0).segment<2>(2 + 2 * k).transpose());
  const double size = 480, pad = 30;
  const double span = std::max((hi - lo).maxCoeff(), 1e-9);
  auto px = [&](const Eigen::Vector2d& p) {
    return Eigen::Vector2d(pad + (p(0) - lo(0)) / span * (size - 2 * pad),
                           size - pad - (p(1) - lo(1)) / span * (size - 2 * pad));
  };
  auto pt = [&](const Eigen::Vector2d& p) { return fmt(px(p)(0)) + "," + fmt(px(p)(1)); };
  auto pos = [&](int s) { return Eigen::Vector2d(t.states(s, 0), t.states(s, 1)); };
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 40
    << "\" viewBox=\"0 0 " << size << " " << size + 40 << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"10\" y=\"" << size + 25 << "\" font-family=\"sans-serif\" font-size=\"13\">trajectory " << traj
    << ", T=" << T << ", " << labels.key_times.size() << " keys (circles), " << t.gt_key_times.size()
    << " ground-truth keys (squares)</text>\n";
  for (int k = 0; k < P; ++k) {
    const Eigen::Vector2d xy = px(t.states.row(0).segment<2>(2 + 2 * k).transpose());
    o << "<text x=\"" << fmt(xy(0)) << "\" y=\"" << fmt(xy(1))
      << "\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\" dominant-baseline=\"central\" "
         "fill=\"#444\">&#x2605;</text>\n";
  }
  o << "<g stroke-width=\"2\" fill=\"none\">\n";
  for (int s = 0; s + 1 < T; ++s) {
    const char* colour = labels.concept_ids.empty()
                             ? "#555555"
                             : kPalette[labels.concept_ids[s] % (sizeof(kPalette) / sizeof(kPalette[0]))];
    o << "<polyline points=\"" << pt(pos(s)) << " " << pt(pos(s + 1)) << "\" stroke=\"" << colour << "\"/>\n";
  }
  o << "</g>\n<g fill=\"none\" stroke=\"black\" stroke-width=\"1.5\">\n";
  for (int g : t.gt_key_times) {
    const Eigen::Vector2d xy = px(pos(g));
    o << "<rect x=\"" << fmt(xy(0) - 6) << "\" y=\"" << fmt(xy(1) - 6)
      << "\" width=\"12\" height=\"12\"/>\n";
  }
  o << "</g>\n<g fill=\"black\">\n";
  for (int k : labels.key_times) {
    const Eigen::Vector2d xy = px(pos(k));
    o << "<circle cx=\"" << fmt(xy(0)) << "\" cy=\"" << fmt(xy(1)) << "\" r=\"3.5\"/>\n";
  }
  o << "</g>\n<desc>" << xml_escape("trajectory " + std::to_string(traj)) << "</desc>\n</svg>\n";
  return o.str();
}

void cmd_plot(const PlotArgs& a) {
  Manifest m("plot", a.out);
  const synth::Dataset d = synth::load_dataset(a.data);
  const LabelSet labels = load_labels(a.labels);
  validate_labels(labels, d);
  if (a.traj < 0 || a.traj >= static_cast<int>(d.trajectories.size()))
    throw UsageError("plot: --traj " + std::to_string(a.traj) + " outside [0, " +
                     std::to_string(d.trajectories.size()) + ")");
  write_file(a.out, plot_svg(d, labels.trajectories[a.traj], a.traj));
  m.input("data", a.data);
  m.input("labels", a.labels);
  m["config"] = {{"traj", a.traj}};
  m.output("svg", a.out);
  m.write();
}

int run(int argc, const char* const* argv) {
  CLI::App app{"InfoCon: self-supervised manipulation concept discovery on synthetic trajectories"};
  app.require_subcommand(1);

  GenDataArgs gen;
  std::string gen_spec;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  g->add_option("--spec", gen_spec, "Task spec JSON (default: standard 3-phase task)");
  g->add_option("--n", gen.n, "Number of trajectories")->required();
  g->add_option("--seed", gen.seed, "Generation seed")->required();
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  std::string ablate;
  auto* t = app.add_subcommand("train", "Pretrain and train a model");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--config", train.config, "TrainConfig JSON")->required();
  t->add_option("--out", train.out, "Checkpoint file")->required();
  t->add_option("--ablate", ablate, "Drop loss terms")->check(CLI::IsMember({"gen_only", "dis_only"}));

  LabelArgs label;
  std::string label_ckpt;
  auto* l = app.add_subcommand("label", "Label key states with a checkpoint, or copy the ground truth");
  l->add_option("--data", label.data, "Dataset directory")->required();
  l->add_option("--ckpt", label_ckpt, "Checkpoint file");
  l->add_flag("--gt", label.gt, "Emit the ground-truth labels instead");
  l->add_option("--out", label.out, "labels.json")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "HIS, activation rates and baseline comparison");
  e->add_option("--data", eval.data, "Dataset directory")->required();
  e->add_option("--labels", eval.labels, "labels.json")->required();
  e->add_option("--baseline", eval.baselines, "last | uniform:k | lindp:k (repeatable)");
  e->add_option("--out", eval.out, "Report JSON")->required();

  PolicyArgs pol;
  auto* p = app.add_subcommand("policy", "Train a key-state guided policy and report rollout success");
  p->add_option("--data", pol.data, "Dataset directory")->required();
  p->add_option("--labels", pol.labels, "labels.json")->required();
  p->add_option("--out", pol.out, "Report JSON")->required();
  p->add_option("--iters", pol.policy.iters, "Training iterations")->capture_default_str();
  p->add_option("--key-weight", pol.policy.key_weight, "Weight of the key-state head; 0 trains the unguided twin")
      ->capture_default_str();
  p->add_option("--seed", pol.policy.seed, "Training seed")->capture_default_str();
  p->add_option("--episodes", pol.episodes, "Rollouts")->capture_default_str();
  p->add_option("--eval-seed", pol.eval_seed, "Rollout seed")->capture_default_str();

  PlotArgs plot;
  auto* pl = app.add_subcommand("plot", "Write an SVG of one labelled trajectory");
  pl->add_option("--data", plot.data, "Dataset directory")->required();
  pl->add_option("--labels", plot.labels, "labels.json")->required();
  pl->add_option("--traj", plot.traj, "Trajectory index")->required();
  pl->add_option("--out", plot.out, "SVG file")->required();

  std::string preset = "desk";
  fs::path preset_out;
  auto* dc = app.add_subcommand("default-config", "Write a complete TrainConfig JSON");
  dc->add_option("--preset", preset, "desk | paper | tiny")->check(CLI::IsMember({"desk", "paper", "tiny"}));
  dc->add_option("--out", preset_out, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) {
      if (!gen_spec.empty()) gen.spec = gen_spec;
      cmd_gen_data(gen);
    } else if (t->parsed()) {
      if (!ablate.empty()) train.ablate = parse_ablation(ablate);
      cmd_train(train);
    } else if (l->parsed()) {
      if (!label_ckpt.empty()) label.ckpt = label_ckpt;
      cmd_label(label);
    } else if (e->parsed()) {
      cmd_eval(eval);
    } else if (p->parsed()) {
      cmd_policy(pol);
    } else if (pl->parsed()) {
      cmd_plot(plot);
    } else if (dc->parsed()) {
      Manifest m("default-config", preset_out);
      const TrainConfig c = preset == "paper" ? TrainConfig::paper_scale()
                            : preset == "tiny" ? TrainConfig::tiny()
                                               : TrainConfig::desk_scale();
      save_config(c, preset_out);
      m["config"] = {{"preset", preset}};
      m.output("config", preset_out);
      m.write();
    }
    return kOk;
  } catch (const TrainingDiverged& err) {
    std::cerr << "error: training diverged: " << err.what() << "\n";
    return kDiverged;
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const synth::DataError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  } catch (const CheckpointError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
}

}  // namespace infocon::cli
