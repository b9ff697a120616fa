#include "infocon/model.hpp"
#include "infocon/synthdata.hpp"

namespace infocon {

InfoConModel::InfoConModel(const TrainConfig& cfg, int state_dim, int action_dim)
    : cfg_(cfg), state_dim_(state_dim), action_dim_(action_dim) {
  cfg.validate();
  nn::Rng rng(synth::mix_seed(cfg.seed, 0x1f0c0de));
  const int latent = cfg.encoder.hidden_dim + 1;
  encoder = StateEncoder(store, cfg.encoder, state_dim, action_dim, rng);
  decoder = StateDecoder(store, cfg.encoder, latent, state_dim, rng, cfg.decoder_layers);
  genhead = KeyStatePredictor(store, {cfg.genhead_layers, cfg.encoder.num_heads}, cfg.encoder.hidden_dim,
                              cfg.encoder.max_len, state_dim, latent, action_dim, rng);
  hypernet = HyperNet(store, cfg.hypernet, state_dim, rng);
  policy = ConceptPolicy(store, {cfg.policy_layers, cfg.encoder.num_heads}, cfg.encoder.hidden_dim, cfg.encoder.max_len,
                         state_dim, action_dim, rng);
  codebook = Codebook::random(cfg.codebook, latent, cfg.hypernet.param_dim(), rng);
}

std::vector<ad::Param*> InfoConModel::trainable() {
  auto out = store.all();
  out.push_back(&codebook.alpha);
  out.push_back(&codebook.p);
  return out;
}

void InfoConModel::zero_grad() {
  store.zero_grad();
  codebook.alpha.zero_grad();
  codebook.p.zero_grad();
}

Matrix concept_probs(const InfoConModel& model, const Matrix& z) {
  ad::Tape tape(false);
  return assign_probs(tape.constant(z), model.codebook.alpha.value, model.codebook.tau).value();
}

std::vector<int> concept_ids(const InfoConModel& model, const synth::Trajectory& traj) {
  return argmax_rows(concept_probs(model, model.encoder.encode(traj).z));
}

}  // namespace infocon
