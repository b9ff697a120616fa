#pragma once

#include "infocon/codebook.hpp"
#include "infocon/config.hpp"
#include "infocon/encoder.hpp"
#include "infocon/heads.hpp"
#include "infocon/nn.hpp"

#include <vector>

namespace infocon {

// Every network and the codebook of one concept-discovery run. Layers keep
// pointers into `store`, so the model is neither copyable nor movable.
class InfoConModel {
 public:
  InfoConModel(const TrainConfig& cfg, int state_dim, int action_dim);
  InfoConModel(const InfoConModel&) = delete;
  InfoConModel& operator=(const InfoConModel&) = delete;

  // Gradient-trained parameters: the store followed by codebook.p.
  std::vector<ad::Param*> trainable();
  void zero_grad();

  const TrainConfig& config() const { return cfg_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  int latent_dim() const { return encoder.latent_dim(); }

  nn::ParamStore store;
  Codebook codebook;
  StateEncoder encoder;
  StateDecoder decoder;
  KeyStatePredictor genhead;
  HyperNet hypernet;
  ConceptPolicy policy;

 private:
  TrainConfig cfg_;
  int state_dim_;
  int action_dim_;
};

// Concept index of every state of a whole (normalised) trajectory, using the
// current prototypes. Thread-safe for a model that is not being trained.
std::vector<int> concept_ids(const InfoConModel& model, const synth::Trajectory& traj);
Matrix concept_probs(const InfoConModel& model, const Matrix& z);

}  // namespace infocon
