#include "infocon/config.hpp"

#include <stdexcept>

namespace infocon {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::kAll: return "all";
    case Ablation::kGenOnly: return "gen_only";
    case Ablation::kDisOnly: return "dis_only";
  }
  return "all";
}

Ablation parse_ablation(const std::string& s) {
  if (s == "all") return Ablation::kAll;
  if (s == "gen_only") return Ablation::kGenOnly;
  if (s == "dis_only") return Ablation::kDisOnly;
  throw std::invalid_argument("unknown ablation '" + s + "' (expected all, gen_only or dis_only)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  require(encoder.hidden_dim > 0, "encoder.hidden_dim must be positive");
  require(encoder.num_heads > 0 && encoder.hidden_dim % encoder.num_heads == 0,
          "encoder.hidden_dim must be divisible by encoder.num_heads");
  require(encoder.num_layers > 0, "encoder.num_layers must be positive");
  require(encoder.window_len > 0, "encoder.window_len must be positive");
  require(encoder.time_coef > 0, "encoder.time_coef must be positive");
  require(encoder.max_len >= encoder.window_len, "encoder.max_len must be >= window_len");
  require(codebook.num_concepts >= 1, "codebook.num_concepts must be >= 1");
  require(codebook.tau > 0, "codebook.tau must be positive");
  require(codebook.c_ema > 0 && codebook.c_ema < 1, "codebook.c_ema must lie in (0, 1)");
  hypernet.validate();
  require(hypernet.tau == codebook.tau, "hypernet.tau must equal codebook.tau");
  require(decoder_layers > 0 && genhead_layers > 0 && policy_layers > 0, "head layer counts must be positive");
  require(lambda >= 0, "lambda must be >= 0");
  require(lambda_rec >= 0, "lambda_rec must be >= 0");
  require(gen_defer_fraction >= 0 && gen_defer_fraction <= 1, "gen_defer_fraction must lie in [0, 1]");
  require(pretrain_iters >= 0 && total_iters >= 0, "iteration counts must be >= 0");
  require(base_lr > 0, "base_lr must be positive");
  require(warmup_iters >= 0, "warmup_iters must be >= 0");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(grad_clip >= 0, "grad_clip must be >= 0");
  require(batch_size > 0, "batch_size must be positive");
}

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.encoder.hidden_dim = 128;
  c.encoder.num_layers = 4;
  c.encoder.num_heads = 8;
  c.encoder.window_len = 60;
  c.encoder.time_coef = 0.2;
  c.codebook.num_concepts = 10;
  c.hypernet.hidden_width = 128;
  c.hypernet.probe_dim = 128;
  c.hypernet.hn_width = 128;
  c.decoder_layers = 4;
  c.genhead_layers = 2;
  c.policy_layers = 1;
  c.batch_size = 256;
  c.base_lr = 1e-4;
  c.warmup_iters = 1000;
  c.pretrain_iters = 10000;
  c.total_iters = 1600000;
  c.grad_clip = 0.0;
  return c;
}

TrainConfig TrainConfig::desk_scale() { return TrainConfig{}; }

TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.encoder.hidden_dim = 8;
  c.encoder.num_layers = 1;
  c.encoder.num_heads = 2;
  c.encoder.window_len = 12;
  c.encoder.max_len = 16;
  c.codebook.num_concepts = 3;
  c.hypernet.num_hidden_layers = 1;
  c.hypernet.hidden_width = 8;
  c.hypernet.probe_dim = 8;
  c.hypernet.hn_width = 8;
  c.batch_size = 2;
  c.pretrain_iters = 0;
  c.total_iters = 10;
  c.warmup_iters = 2;
  return c;
}

}  // namespace infocon
