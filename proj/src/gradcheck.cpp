#include "infocon/gradcheck.hpp"

#include <map>

namespace infocon {

Matrix numeric_gradient(const std::function<double()>& f, Matrix& x, double step) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + step;
    const double up = f();
    x.data()[i] = orig - step;
    const double down = f();
    x.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double denom = std::max(analytic.norm(), numeric.norm());
  if (denom == 0.0) return 0.0;
  return (analytic - numeric).norm() / denom;
}

std::vector<GroupCheck> check_loss_gradients(InfoConModel& model, const Batch& batch, const LossWeights& weights,
                                             double step) {
  LossInputs in;
  in.batch = &batch;
  in.weights = weights;
  {
    ad::Tape tape(false);
    const Matrix z = model.encoder(tape, batch).z.value();
    in.hard = argmax_rows(concept_probs(model, z));
  }
  in.key_states.resize(batch.rows(), batch.states.cols());
  for (int s = 0; s < batch.num_sequences(); ++s) {
    const int off = batch.offset(s);
    const int len = batch.length(s);
    const auto targets = key_state_targets(std::vector<int>(in.hard.begin() + off, in.hard.begin() + off + len));
    for (int r = 0; r < len; ++r) in.key_states.row(off + r) = batch.states.row(off + targets[r]);
  }

  SmoothSurrogate sur;
  {
    ad::Tape tape(true);
    LossTerms terms = compute_losses(tape, model, in);
    sur = make_surrogate(model, terms.probs, in.hard);
    model.zero_grad();
    tape.backward(terms.total);
  }
  in.surrogate = &sur;

  auto loss = [&]() {
    ad::Tape tape(false);
    return compute_losses(tape, model, in).total.scalar();
  };

  auto group_of = [](const std::string& name) { return name.substr(0, name.find('.')); };
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> acc;
  std::vector<std::string> order;
  for (auto* p : model.trainable()) {
    const std::string g = group_of(p->name) == "codebook" ? p->name : group_of(p->name);
    if (!acc.count(g)) order.push_back(g);
    const Matrix analytic = p->grad.size() ? p->grad : Matrix::Zero(p->value.rows(), p->value.cols());
    const Matrix numeric = numeric_gradient(loss, p->value, step);
    auto& [a, n] = acc[g];
    a.insert(a.end(), analytic.data(), analytic.data() + analytic.size());
    n.insert(n.end(), numeric.data(), numeric.data() + numeric.size());
  }
  std::vector<GroupCheck> out;
  for (const auto& g : order) {
    const auto& [a, n] = acc[g];
    const Eigen::Map<const Matrix> am(a.data(), static_cast<Eigen::Index>(a.size()), 1);
    const Eigen::Map<const Matrix> nm(n.data(), static_cast<Eigen::Index>(n.size()), 1);
    out.push_back({g, relative_error(am, nm), am.norm(), a.size()});
  }
  return out;
}

}  // namespace infocon
