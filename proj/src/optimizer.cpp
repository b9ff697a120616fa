#include "infocon/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace infocon {

WarmupCosine::WarmupCosine(double base_lr, int warmup, int total) : base_(base_lr), warmup_(warmup), total_(total) {
  if (!(base_lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (warmup < 0 || total < 0) throw std::invalid_argument("schedule lengths must be nonnegative");
}

double WarmupCosine::operator()(int it) const {
  const double lo = 0.1 * base_;
  const int last = total_ - 1;
  const int warm = std::min(warmup_, std::max(last, 0));
  if (it < warm) return lo + (base_ - lo) * static_cast<double>(it) / warm;
  if (last <= warm) return it >= last && last > 0 ? lo : base_;
  if (it >= last) return lo;
  const double frac = static_cast<double>(it - warm) / (last - warm);
  return lo + (base_ - lo) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

AdamW::AdamW(std::vector<ad::Param*> params, AdamWOptions opt) : params_(std::move(params)), opt_(opt) {
  for (auto* p : params_) {
    m_.push_back(Eigen::MatrixXf::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Eigen::MatrixXf::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, t_);
  const double c2 = 1.0 - std::pow(opt_.beta2, t_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Param& p = *params_[i];
    if (p.grad.size() != p.value.size()) continue;
    Eigen::MatrixXf& m = m_[i];
    Eigen::MatrixXf& v = v_[i];
    m = (opt_.beta1 * m.cast<double>() + (1.0 - opt_.beta1) * p.grad).cast<float>();
    v = (opt_.beta2 * v.cast<double>() + (1.0 - opt_.beta2) * p.grad.cwiseProduct(p.grad)).cast<float>();
    if (p.decay && opt_.weight_decay > 0) p.value *= (1.0 - lr * opt_.weight_decay);
    const auto mhat = m.cast<double>().array() / c1;
    const auto vhat = v.cast<double>().array() / c2;
    p.value.array() -= lr * mhat / (vhat.sqrt() + opt_.eps);
  }
}

double grad_norm(const std::vector<ad::Param*>& params) {
  double s = 0.0;
  for (const auto* p : params) s += p->grad.squaredNorm();
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<ad::Param*>& params, double max_norm) {
  const double n = grad_norm(params);
  if (max_norm > 0 && n > max_norm) {
    const double f = max_norm / n;
    for (auto* p : params) p->grad *= f;
  }
  return n;
}

}  // namespace infocon
