#pragma once

// Causal state encoder producing unit latents, the spherical time-step
// embedding, and the reconstruction decoder used as a regulariser.

#include "infocon/autodiff.hpp"
#include "infocon/batch.hpp"
#include "infocon/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace infocon {

struct EncoderConfig {
  int hidden_dim = 32;  // M
  int num_layers = 2;
  int num_heads = 4;
  int window_len = 60;  // W
  double time_coef = 0.2;  // A
  int max_len = 256;    // positional capacity
};

// Angle of the time embedding for 0-based step t of a length-T trajectory.
// Spans [-pi/(2+2A), pi/(2+2A)]; t = T-1 maps to the upper end.
template <typename Scalar = double>
Scalar time_embed_angle(int t, int T, Scalar A) {
  if (T <= 0) throw std::invalid_argument("time_embed: trajectory length must be positive");
  if (t < 0 || t >= T) throw std::out_of_range("time_embed: step outside [0, T)");
  const Scalar t1 = static_cast<Scalar>(t + 1);
  return (Scalar(2) * t1 / static_cast<Scalar>(T) - Scalar(1)) * std::numbers::pi_v<Scalar> / (Scalar(2) + Scalar(2) * A);
}

// [sin(theta), cos(theta) * z]. Unit z gives a unit result.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> time_embed(const Eigen::MatrixBase<Derived>& z, int t, int T,
                                                                        typename Derived::Scalar A) {
  using Scalar = typename Derived::Scalar;
  const Scalar theta = time_embed_angle<Scalar>(t, T, A);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(z.size() + 1);
  out(0) = std::sin(theta);
  out.tail(z.size()) = std::cos(theta) * z.derived().reshaped();
  return out;
}

// Row-wise embedding on the tape; t and T per row.
ad::Var time_embed(const ad::Var& raw_z, const std::vector<int>& t, const std::vector<int>& T, double A);

struct LatentSequence {
  Matrix z;      // T x (M+1)
  Matrix raw_z;  // T x M
};

class StateEncoder {
 public:
  StateEncoder() = default;
  StateEncoder(nn::ParamStore& store, const EncoderConfig& cfg, int state_dim, int action_dim, nn::Rng& rng);

  struct Output {
    ad::Var raw_z;  // N x M, unit rows
    ad::Var z;      // N x (M+1), unit rows
  };
  // Token t sees s_t and a_{t-1}; attention is causal, so z_t depends only on
  // s_t and earlier (state, action) pairs.
  Output operator()(ad::Tape& tape, const Batch& batch) const;
  // Forward with frozen parameters on a whole normalised trajectory.
  LatentSequence encode(const synth::Trajectory& traj) const;

  const EncoderConfig& config() const { return cfg_; }
  int latent_dim() const { return cfg_.hidden_dim + 1; }

 private:
  EncoderConfig cfg_;
  nn::CausalTransformer net_;
};

// Causal map from the sequence of selected concept vectors back to states.
class StateDecoder {
 public:
  StateDecoder() = default;
  StateDecoder(nn::ParamStore& store, const EncoderConfig& cfg, int concept_dim, int state_dim, nn::Rng& rng,
               int num_layers);
  ad::Var operator()(ad::Tape& tape, const ad::Var& concepts, const Batch& batch) const;
  // Frozen-parameter reconstruction of a single sequence of concept vectors.
  Matrix reconstruct(const Matrix& concepts) const;

  int concept_dim() const { return concept_dim_; }
  int state_dim() const { return state_dim_; }

 private:
  nn::CausalTransformer net_;
  int concept_dim_ = 0;
  int state_dim_ = 0;
};

}  // namespace infocon
