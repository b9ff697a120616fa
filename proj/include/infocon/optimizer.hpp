#pragma once

#include "infocon/autodiff.hpp"

#include <vector>

namespace infocon {

// Linear warm-up from 0.1 * base to base over `warmup` iterations, then cosine
// decay to 0.1 * base at iteration total - 1.
class WarmupCosine {
 public:
  WarmupCosine(double base_lr, int warmup, int total);
  double operator()(int iteration) const;

 private:
  double base_;
  int warmup_;
  int total_;
};

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;
};

// Adam with decoupled weight decay. Moments are kept in single precision.
// Parameters with decay == false (biases, norm gains) are not decayed.
class AdamW {
 public:
  AdamW(std::vector<ad::Param*> params, AdamWOptions opt);
  void step(double lr);
  int steps() const { return t_; }
  const std::vector<ad::Param*>& params() const { return params_; }

 private:
  std::vector<ad::Param*> params_;
  std::vector<Eigen::MatrixXf> m_, v_;
  AdamWOptions opt_;
  int t_ = 0;
};

// Global L2 norm of all gradients.
double grad_norm(const std::vector<ad::Param*>& params);
// Rescales gradients so that the global norm is at most max_norm. Returns the
// norm before clipping.
double clip_grad_norm(const std::vector<ad::Param*>& params, double max_norm);

}  // namespace infocon
