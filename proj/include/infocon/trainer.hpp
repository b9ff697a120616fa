#pragma once

#include "infocon/losses.hpp"
#include "infocon/model.hpp"
#include "infocon/optimizer.hpp"
#include "infocon/synthdata.hpp"

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace infocon {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IterationLog {
  std::string phase;  // "pretrain" or "train"
  int iteration = 0;
  double lr = 0;
  double total = 0, gen = 0, dis_a = 0, dis_c = 0, ent = 0, rec = 0;
  double grad_norm = 0;
  int active = 0;  // distinct concepts in the batch
};

// Runs pretraining and the main phase on a normalised dataset. The loop is
// single-threaded and a pure function of the configuration seed.
class Trainer {
 public:
  Trainer(InfoConModel& model, const synth::Dataset& data);

  void pretrain();
  void train();

  // Weighted objective on whole trajectories `ids`, without any update.
  double evaluate(const std::vector<int>& ids, const LossWeights& weights);
  // Distinct concepts over the whole dataset under the current prototypes.
  int dataset_active_concepts() const;

  const std::vector<IterationLog>& log() const { return log_; }
  void write_loss_csv(const std::filesystem::path& file) const;
  int iterations_done() const { return done_; }

  std::function<void(const IterationLog&)> on_iteration;

 private:
  struct Sampled {
    Batch batch;
    std::vector<int> hard;
    Matrix key_states;
  };
  Sampled sample(bool need_keys);
  Matrix key_states_for(const Batch& b, const std::vector<int>& hard) const;
  IterationLog step(const Sampled& s, const LossWeights& w, AdamW& opt, double lr);

  InfoConModel& model_;
  const synth::Dataset& data_;
  nn::Rng rng_;
  std::vector<IterationLog> log_;
  int done_ = 0;
};

}  // namespace infocon
