#pragma once

// Binary checkpoint: "INFC1" followed by records
//   u32 name_len | name | u32 ndims | u64 dims[ndims] | f32 LE data, row-major
// plus a JSON sidecar <ckpt>.config.json with the configuration and counters.

#include "infocon/config.hpp"
#include "infocon/model.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

namespace infocon {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  TrainConfig config;
  int iteration = 0;
  int state_dim = 0;
  int action_dim = 0;
  std::string dataset_id;
};

// Named arrays: every store parameter, codebook.alpha and codebook.p.
std::map<std::string, Matrix> checkpoint_arrays(const InfoConModel& model);

void save_checkpoint(const InfoConModel& model, const CheckpointMeta& meta, const std::filesystem::path& file);
std::map<std::string, Matrix> read_checkpoint_arrays(const std::filesystem::path& file);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& file);
std::filesystem::path sidecar_path(const std::filesystem::path& file);

// Builds the model described by the sidecar and loads every array. Values are
// the single-precision stored values widened to double.
std::unique_ptr<InfoConModel> load_model(const std::filesystem::path& file, CheckpointMeta* meta = nullptr);

// Rounds every parameter to single precision, so a model in memory matches
// the one reloaded from its checkpoint.
void round_to_float(InfoConModel& model);

}  // namespace infocon
