#pragma once

// Parameter storage and the small set of layers shared by every network in
// the project: affine maps, layer norm and a pre-norm causal transformer.

#include "infocon/autodiff.hpp"

#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace infocon::nn {

using ad::Matrix;
using ad::Param;
using ad::Tape;
using ad::Var;
using Rng = std::mt19937_64;

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

// Named, insertion-ordered parameter collection. Addresses are stable.
class ParamStore {
 public:
  Param& add(const std::string& name, Matrix init, bool decay = true);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  std::vector<Param*> with_prefix(const std::string& prefix);
  void zero_grad();
  std::size_t num_scalars() const;

 private:
  std::deque<Param> params_;
  std::map<std::string, std::size_t> index_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, double gain = 1.0);
  Var operator()(Tape& tape, const Var& x) const;
  int in() const { return in_; }
  int out() const { return out_; }

 private:
  Param* weight_ = nullptr;  // in x out
  Param* bias_ = nullptr;    // 1 x out
  int in_ = 0;
  int out_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int dim);
  Var operator()(Tape& tape, const Var& x) const;

 private:
  Param* gain_ = nullptr;
  Param* bias_ = nullptr;
};

struct TransformerConfig {
  int input_dim = 1;
  int model_dim = 32;
  int output_dim = 1;
  int num_layers = 1;
  int num_heads = 2;
  int max_len = 256;
  int mlp_ratio = 2;
};

// Token-wise input projection, learned absolute position table, pre-norm
// causal self-attention blocks, final norm and output projection.
class CausalTransformer {
 public:
  CausalTransformer() = default;
  CausalTransformer(ParamStore& store, const std::string& prefix, const TransformerConfig& cfg, Rng& rng);

  // `positions[i]` is the absolute time index of row i. Throws
  // std::out_of_range when a position exceeds the configured capacity.
  Var operator()(Tape& tape, const Var& input, const ad::SeqLayout& layout, const std::vector<int>& positions) const;
  // Hidden features before the output projection.
  Var features(Tape& tape, const Var& input, const ad::SeqLayout& layout, const std::vector<int>& positions) const;
  const TransformerConfig& config() const { return cfg_; }

 private:
  struct Block {
    LayerNorm ln1, ln2;
    Linear qkv, proj, fc1, fc2;
  };
  TransformerConfig cfg_;
  Linear input_;
  Param* pos_ = nullptr;
  std::vector<Block> blocks_;
  LayerNorm ln_f_;
  Linear head_;
};

}  // namespace infocon::nn
