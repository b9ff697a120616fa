#include "infocon/serialize.hpp"

#include <fstream>
#include <set>

namespace infocon {

using nlohmann::json;

json config_to_json(const TrainConfig& c) {
  return {
      {"encoder",
       {{"hidden_dim", c.encoder.hidden_dim},
        {"num_layers", c.encoder.num_layers},
        {"num_heads", c.encoder.num_heads},
        {"window_len", c.encoder.window_len},
        {"time_coef", c.encoder.time_coef},
        {"max_len", c.encoder.max_len}}},
      {"codebook", {{"num_concepts", c.codebook.num_concepts}, {"tau", c.codebook.tau}, {"c_ema", c.codebook.c_ema}}},
      {"hypernet",
       {{"num_hidden_layers", c.hypernet.num_hidden_layers},
        {"hidden_width", c.hypernet.hidden_width},
        {"probe_dim", c.hypernet.probe_dim},
        {"hn_width", c.hypernet.hn_width},
        {"tau", c.hypernet.tau}}},
      {"decoder_layers", c.decoder_layers},
      {"genhead_layers", c.genhead_layers},
      {"policy_layers", c.policy_layers},
      {"lambda", c.lambda},
      {"lambda_rec", c.lambda_rec},
      {"gen_defer_fraction", c.gen_defer_fraction},
      {"ablation", to_string(c.ablation)},
      {"detach_compat_grad", c.detach_compat_grad},
      {"square_rec", c.square_rec},
      {"entropy_full_k", c.entropy_full_k},
      {"pretrain_iters", c.pretrain_iters},
      {"total_iters", c.total_iters},
      {"base_lr", c.base_lr},
      {"warmup_iters", c.warmup_iters},
      {"weight_decay", c.weight_decay},
      {"grad_clip", c.grad_clip},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
  };
}

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where("") + "expected an object");
  }

  const json& at(const char* key) {
    if (!j_.contains(key)) throw ConfigError(where(key) + "missing");
    seen_.insert(key);
    return j_.at(key);
  }
  int integer(const char* key) {
    const json& v = at(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + "expected an integer");
    return v.get<int>();
  }
  std::uint64_t uint(const char* key) {
    const json& v = at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw ConfigError(where(key) + "expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  double real(const char* key) {
    const json& v = at(key);
    if (!v.is_number()) throw ConfigError(where(key) + "expected a number");
    return v.get<double>();
  }
  bool boolean(const char* key) {
    const json& v = at(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + "expected true or false");
    return v.get<bool>();
  }
  std::string text(const char* key) {
    const json& v = at(key);
    if (!v.is_string()) throw ConfigError(where(key) + "expected a string");
    return v.get<std::string>();
  }
  Reader child(const char* key) { return Reader(at(key), path_.empty() ? key : path_ + "." + key); }
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + "unknown field");
  }

 private:
  std::string where(const std::string& key) const {
    std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return "config field '" + p + "': ";
  }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  Reader r(j, "");
  {
    Reader e = r.child("encoder");
    c.encoder.hidden_dim = e.integer("hidden_dim");
    c.encoder.num_layers = e.integer("num_layers");
    c.encoder.num_heads = e.integer("num_heads");
    c.encoder.window_len = e.integer("window_len");
    c.encoder.time_coef = e.real("time_coef");
    c.encoder.max_len = e.integer("max_len");
    e.finish();
  }
  {
    Reader cb = r.child("codebook");
    c.codebook.num_concepts = cb.integer("num_concepts");
    c.codebook.tau = cb.real("tau");
    c.codebook.c_ema = cb.real("c_ema");
    cb.finish();
  }
  {
    Reader h = r.child("hypernet");
    c.hypernet.num_hidden_layers = h.integer("num_hidden_layers");
    c.hypernet.hidden_width = h.integer("hidden_width");
    c.hypernet.probe_dim = h.integer("probe_dim");
    c.hypernet.hn_width = h.integer("hn_width");
    c.hypernet.tau = h.real("tau");
    h.finish();
  }
  c.decoder_layers = r.integer("decoder_layers");
  c.genhead_layers = r.integer("genhead_layers");
  c.policy_layers = r.integer("policy_layers");
  c.lambda = r.real("lambda");
  c.lambda_rec = r.real("lambda_rec");
  c.gen_defer_fraction = r.real("gen_defer_fraction");
  try {
    c.ablation = parse_ablation(r.text("ablation"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config field 'ablation': ") + e.what());
  }
  c.detach_compat_grad = r.boolean("detach_compat_grad");
  c.square_rec = r.boolean("square_rec");
  c.entropy_full_k = r.boolean("entropy_full_k");
  c.pretrain_iters = r.integer("pretrain_iters");
  c.total_iters = r.integer("total_iters");
  c.base_lr = r.real("base_lr");
  c.warmup_iters = r.integer("warmup_iters");
  c.weight_decay = r.real("weight_decay");
  c.grad_clip = r.real("grad_clip");
  c.batch_size = r.integer("batch_size");
  c.seed = r.uint("seed");
  r.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

TrainConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": invalid JSON: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

void save_config(const TrainConfig& c, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError(file.string() + ": cannot write");
  out << config_to_json(c).dump(2) << "\n";
}

}  // namespace infocon
