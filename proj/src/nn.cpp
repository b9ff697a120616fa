#include "infocon/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace infocon::nn {

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  // Fill in row-major order so layouts do not depend on Eigen storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

Param& ParamStore::add(const std::string& name, Matrix init, bool decay) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = params_.size();
  Param& p = params_.emplace_back();
  p.name = name;
  p.value = std::move(init);
  p.decay = decay;
  p.zero_grad();
  return p;
}

Param& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second];
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Param*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Param*> out;
  for (auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) out.push_back(&p);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, double gain)
    : in_(in), out_(out) {
  weight_ = &store.add(name + ".weight", random_normal(in, out, gain / std::sqrt(static_cast<double>(in)), rng));
  bias_ = &store.add(name + ".bias", Matrix::Zero(1, out), false);
}

Var Linear::operator()(Tape& tape, const Var& x) const {
  if (x.cols() != in_) throw std::invalid_argument("Linear: expected " + std::to_string(in_) + " input columns");
  return ad::add_row(ad::matmul(x, tape.param(*weight_)), tape.param(*bias_));
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim) {
  gain_ = &store.add(name + ".gain", Matrix::Ones(1, dim), false);
  bias_ = &store.add(name + ".bias", Matrix::Zero(1, dim), false);
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const {
  return ad::layer_norm(x, tape.param(*gain_), tape.param(*bias_));
}

CausalTransformer::CausalTransformer(ParamStore& store, const std::string& prefix, const TransformerConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.model_dim % cfg.num_heads != 0) throw std::invalid_argument(prefix + ": model_dim must be divisible by num_heads");
  if (cfg.num_layers < 1 || cfg.max_len < 1) throw std::invalid_argument(prefix + ": bad transformer shape");
  const int d = cfg.model_dim;
  const double resid_gain = 1.0 / std::sqrt(2.0 * cfg.num_layers);
  input_ = Linear(store, prefix + ".input", cfg.input_dim, d, rng);
  pos_ = &store.add(prefix + ".pos", random_normal(cfg.max_len, d, 0.02, rng), false);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    Block b;
    b.ln1 = LayerNorm(store, p + ".ln1", d);
    b.qkv = Linear(store, p + ".qkv", d, 3 * d, rng);
    b.proj = Linear(store, p + ".proj", d, d, rng, resid_gain);
    b.ln2 = LayerNorm(store, p + ".ln2", d);
    b.fc1 = Linear(store, p + ".fc1", d, cfg.mlp_ratio * d, rng);
    b.fc2 = Linear(store, p + ".fc2", cfg.mlp_ratio * d, d, rng, resid_gain);
    blocks_.push_back(b);
  }
  ln_f_ = LayerNorm(store, prefix + ".ln_f", d);
  head_ = Linear(store, prefix + ".head", d, cfg.output_dim, rng);
}

Var CausalTransformer::features(Tape& tape, const Var& input, const ad::SeqLayout& layout,
                                const std::vector<int>& positions) const {
  if (static_cast<Eigen::Index>(positions.size()) != input.rows())
    throw std::invalid_argument("CausalTransformer: one position per row required");
  for (int p : positions) {
    if (p < 0 || p >= cfg_.max_len)
      throw std::out_of_range("time index " + std::to_string(p) + " exceeds positional capacity " +
                              std::to_string(cfg_.max_len) + "; raise max_len or encode in windows");
  }
  Var x = input_(tape, input) + ad::gather_rows(tape.param(*pos_), positions);
  for (const Block& b : blocks_) {
    Var a = ad::causal_attention(b.qkv(tape, b.ln1(tape, x)), layout, cfg_.num_heads);
    x = x + b.proj(tape, a);
    Var m = b.fc2(tape, ad::gelu(b.fc1(tape, b.ln2(tape, x))));
    x = x + m;
  }
  return ln_f_(tape, x);
}

Var CausalTransformer::operator()(Tape& tape, const Var& input, const ad::SeqLayout& layout,
                                  const std::vector<int>& positions) const {
  return head_(tape, features(tape, input, layout, positions));
}

}  // namespace infocon::nn
