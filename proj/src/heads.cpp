#include "infocon/heads.hpp"

#include <stdexcept>

namespace infocon {

namespace {
constexpr double kNormEps = 1e-12;
}

void HyperNetConfig::validate() const {
  if (num_hidden_layers < 1) throw std::invalid_argument("hypernet: need at least one generated hidden layer");
  if (hidden_width < 1 || hn_width < 1) throw std::invalid_argument("hypernet: widths must be positive");
  if (probe_dim != hidden_width) throw std::invalid_argument("hypernet: probe_dim must equal hidden_width");
  if (!(tau > 0)) throw std::invalid_argument("hypernet: tau must be positive");
}

HyperNet::HyperNet(nn::ParamStore& store, const HyperNetConfig& cfg, int state_dim, nn::Rng& rng)
    : cfg_(cfg), state_dim_(state_dim) {
  cfg.validate();
  max_input_ = cfg.num_hidden_layers > 1 ? std::max(state_dim, cfg.hidden_width) : state_dim;
  for (int i = 0; i < cfg.num_hidden_layers; ++i)
    hn_w_.emplace_back(store, "hypernet.hn_w" + std::to_string(i), cfg.segment_len(), cfg.hn_width, rng);
  hn_p_ = nn::Linear(store, "hypernet.hn_p", cfg.hn_width, cfg.hidden_width * max_input_ + cfg.hidden_width, rng);
}

HyperNet::Generated HyperNet::generate(ad::Tape& tape, const ad::Var& p_rows) const {
  if (p_rows.cols() != cfg_.param_dim())
    throw std::invalid_argument("hypernet: parameter vector has length " + std::to_string(p_rows.cols()) + ", expected " +
                                std::to_string(cfg_.param_dim()));
  const int seg = cfg_.segment_len();
  const int wc = cfg_.hidden_width;
  Generated g;
  for (int i = 0; i < cfg_.num_hidden_layers; ++i) {
    ad::Var mid = ad::tanh(hn_w_[i](tape, ad::slice_cols(p_rows, i * seg, seg)));
    ad::Var flat = hn_p_(tape, mid);
    g.weights.push_back(ad::slice_cols(flat, 0, static_cast<Eigen::Index>(wc) * layer_input(i)));
    g.biases.push_back(ad::slice_cols(flat, static_cast<Eigen::Index>(wc) * max_input_, wc));
  }
  g.probe = ad::slice_cols(p_rows, cfg_.num_hidden_layers * seg, seg);
  return g;
}

HyperNet::Generated HyperNet::gather(const Generated& g, const std::vector<int>& rows) {
  Generated out;
  for (const auto& w : g.weights) out.weights.push_back(ad::gather_rows(w, rows));
  for (const auto& b : g.biases) out.biases.push_back(ad::gather_rows(b, rows));
  out.probe = ad::gather_rows(g.probe, rows);
  return out;
}

HyperNet::Eval HyperNet::evaluate(const Generated& g, const ad::Var& s, bool with_grad) const {
  if (s.cols() != state_dim_) throw std::invalid_argument("hypernet: state dimension mismatch");
  if (g.probe.rows() != s.rows()) throw std::invalid_argument("hypernet: one parameter row per state required");
  const int wc = cfg_.hidden_width;
  std::vector<ad::Var> hidden;
  ad::Var h = s;
  for (int i = 0; i < cfg_.num_hidden_layers; ++i) {
    h = ad::tanh(ad::batched_matvec(g.weights[i], h, wc, layer_input(i), false) + g.biases[i]);
    hidden.push_back(h);
  }
  ad::Var hn = ad::row_norm(h, kNormEps);
  ad::Var qn = ad::row_norm(g.probe, kNormEps);
  ad::Var hq = ad::hadamard(hn, qn);
  ad::Var cos = ad::div_col(ad::row_dot(h, g.probe), hq);
  Eval out;
  out.score = ad::sigmoid(ad::scale(cos, 1.0 / cfg_.tau));
  if (!with_grad) return out;

  // dC/ds written out as ordinary ops so it stays differentiable in p and s.
  ad::Var slope = ad::scale(ad::hadamard(out.score, ad::add_scalar(-out.score, 1.0)), 1.0 / cfg_.tau);
  ad::Var dcos = ad::div_col(g.probe, hq) - ad::mul_col(h, ad::div_col(cos, ad::hadamard(hn, hn)));
  ad::Var delta = ad::mul_col(dcos, slope);
  for (int i = cfg_.num_hidden_layers - 1; i >= 0; --i) {
    ad::Var dpre = ad::hadamard(delta, ad::add_scalar(-ad::square(hidden[i]), 1.0));
    delta = ad::batched_matvec(g.weights[i], dpre, wc, layer_input(i), true);
  }
  out.grad = delta;
  return out;
}

double HyperNet::compat_score(const Vector& p, const Vector& s) const {
  ad::Tape tape(false);
  auto g = generate(tape, tape.constant(p.transpose()));
  return evaluate(g, tape.constant(s.transpose()), false).score.scalar();
}

Vector HyperNet::compat_grad(const Vector& p, const Vector& s) const {
  ad::Tape tape(false);
  auto g = generate(tape, tape.constant(p.transpose()));
  return evaluate(g, tape.constant(s.transpose()), true).grad.value().row(0).transpose();
}

KeyStatePredictor::KeyStatePredictor(nn::ParamStore& store, const HeadConfig& cfg, int model_dim, int max_len,
                                     int state_dim, int concept_dim, int action_dim, nn::Rng& rng) {
  nn::TransformerConfig tc;
  tc.input_dim = state_dim + concept_dim + action_dim;
  tc.model_dim = model_dim;
  tc.output_dim = state_dim;
  tc.num_layers = cfg.num_layers;
  tc.num_heads = cfg.num_heads;
  tc.max_len = max_len;
  net_ = nn::CausalTransformer(store, "genhead", tc, rng);
}

ad::Var KeyStatePredictor::operator()(ad::Tape& tape, const Batch& batch, const ad::Var& alpha_eff) const {
  ad::Var tokens = ad::concat_cols({tape.constant(batch.states), alpha_eff, tape.constant(batch.prev_actions)});
  return net_(tape, tokens, batch.layout, batch.positions);
}

ConceptPolicy::ConceptPolicy(nn::ParamStore& store, const HeadConfig& cfg, int model_dim, int max_len, int state_dim,
                             int action_dim, nn::Rng& rng) {
  nn::TransformerConfig tc;
  tc.input_dim = 2 * state_dim + action_dim;
  tc.model_dim = model_dim;
  tc.output_dim = action_dim;
  tc.num_layers = cfg.num_layers;
  tc.num_heads = cfg.num_heads;
  tc.max_len = max_len;
  net_ = nn::CausalTransformer(store, "policy", tc, rng);
}

ad::Var ConceptPolicy::operator()(ad::Tape& tape, const Batch& batch, const ad::Var& compat_grad) const {
  ad::Var tokens = ad::concat_cols({tape.constant(batch.states), compat_grad, tape.constant(batch.prev_actions)});
  return net_(tape, tokens, batch.layout, batch.positions);
}

}  // namespace infocon
