#pragma once

// Every hyperparameter of concept discovery in one place.
//
//   field                   paper scale   desk scale
//   encoder.hidden_dim M    128           32
//   encoder.num_layers      4             2
//   decoder_layers          4             1
//   genhead_layers          2             1
//   policy_layers           1             1
//   codebook.num_concepts   10            6
//   codebook.tau            0.1           0.1
//   codebook.c_ema          0.9           0.9
//   encoder.time_coef A     0.2           0.2
//   hypernet H / W_c        1 / 128       1 / 16
//   lambda / lambda_rec     0.001 / 0.1   0.001 / 0.1
//   window_len W            60            60
//   batch_size              256           16
//   base_lr                 1e-4          2e-3
//   warmup_iters            1000          100
//   weight_decay            1e-3          1e-3
//   pretrain_iters          10000         300
//   total_iters             1.6e6         1500
//   gen_defer_fraction      0.5           0.5

#include "infocon/codebook.hpp"
#include "infocon/encoder.hpp"
#include "infocon/heads.hpp"

#include <cstdint>
#include <string>

namespace infocon {

enum class Ablation { kAll, kGenOnly, kDisOnly };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& s);

struct TrainConfig {
  EncoderConfig encoder;
  CodebookConfig codebook;
  HyperNetConfig hypernet;
  int decoder_layers = 1;
  int genhead_layers = 1;
  int policy_layers = 1;

  double lambda = 0.001;
  double lambda_rec = 0.1;
  double gen_defer_fraction = 0.5;
  Ablation ablation = Ablation::kAll;
  bool detach_compat_grad = false;
  bool square_rec = false;
  bool entropy_full_k = false;

  int pretrain_iters = 300;
  int total_iters = 1500;
  double base_lr = 2e-3;
  int warmup_iters = 100;
  double weight_decay = 1e-3;
  double grad_clip = 1.0;  // global-norm clip; 0 disables
  int batch_size = 16;
  std::uint64_t seed = 0;

  int window_len() const { return encoder.window_len; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  static TrainConfig paper_scale();
  static TrainConfig desk_scale();
  // M=8, K=3, W=12, H=1, W_c=8: the shape used for gradient checks.
  static TrainConfig tiny();
};

}  // namespace infocon
