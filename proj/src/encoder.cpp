#include "infocon/encoder.hpp"

namespace infocon {

ad::Var time_embed(const ad::Var& raw_z, const std::vector<int>& t, const std::vector<int>& T, double A) {
  const auto n = raw_z.rows();
  if (static_cast<Eigen::Index>(t.size()) != n || static_cast<Eigen::Index>(T.size()) != n)
    throw std::invalid_argument("time_embed: one (t, T) pair per row required");
  Matrix sin_col(n, 1), cos_col(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double theta = time_embed_angle(t[i], T[i], A);
    sin_col(i, 0) = std::sin(theta);
    cos_col(i, 0) = std::cos(theta);
  }
  ad::Tape& tape = *raw_z.tape();
  return ad::concat_cols({tape.constant(std::move(sin_col)), ad::mul_col(raw_z, tape.constant(std::move(cos_col)))});
}

StateEncoder::StateEncoder(nn::ParamStore& store, const EncoderConfig& cfg, int state_dim, int action_dim, nn::Rng& rng)
    : cfg_(cfg) {
  if (!(cfg.time_coef > 0)) throw std::invalid_argument("encoder: time coefficient A must be positive");
  nn::TransformerConfig tc;
  tc.input_dim = state_dim + action_dim;
  tc.model_dim = cfg.hidden_dim;
  tc.output_dim = cfg.hidden_dim;
  tc.num_layers = cfg.num_layers;
  tc.num_heads = cfg.num_heads;
  tc.max_len = cfg.max_len;
  net_ = nn::CausalTransformer(store, "encoder", tc, rng);
}

StateEncoder::Output StateEncoder::operator()(ad::Tape& tape, const Batch& batch) const {
  Matrix tokens(batch.rows(), batch.states.cols() + batch.prev_actions.cols());
  tokens << batch.states, batch.prev_actions;
  ad::Var h = net_(tape, tape.constant(std::move(tokens)), batch.layout, batch.positions);
  Output out;
  out.raw_z = ad::row_normalize(h);
  out.z = time_embed(out.raw_z, batch.positions, batch.full_length, cfg_.time_coef);
  return out;
}

LatentSequence StateEncoder::encode(const synth::Trajectory& traj) const {
  ad::Tape tape(false);
  const Batch b = make_full_batch(traj);
  Output o = (*this)(tape, b);
  return {o.z.value(), o.raw_z.value()};
}

StateDecoder::StateDecoder(nn::ParamStore& store, const EncoderConfig& cfg, int concept_dim, int state_dim, nn::Rng& rng,
                           int num_layers)
    : concept_dim_(concept_dim), state_dim_(state_dim) {
  nn::TransformerConfig tc;
  tc.input_dim = concept_dim;
  tc.model_dim = cfg.hidden_dim;
  tc.output_dim = state_dim;
  tc.num_layers = num_layers;
  tc.num_heads = cfg.num_heads;
  tc.max_len = cfg.max_len;
  net_ = nn::CausalTransformer(store, "decoder", tc, rng);
}

ad::Var StateDecoder::operator()(ad::Tape& tape, const ad::Var& concepts, const Batch& batch) const {
  if (concepts.cols() != concept_dim_) throw std::invalid_argument("decoder: concept dimension mismatch");
  return net_(tape, concepts, batch.layout, batch.positions);
}

Matrix StateDecoder::reconstruct(const Matrix& concepts) const {
  if (concepts.rows() < 1) throw std::invalid_argument("decoder: empty concept sequence");
  if (concepts.cols() != concept_dim_) throw std::invalid_argument("decoder: concept dimension mismatch");
  ad::Tape tape(false);
  const int n = static_cast<int>(concepts.rows());
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[i] = i;
  return net_(tape, tape.constant(concepts), ad::SeqLayout::single(n), pos).value();
}

}  // namespace infocon
