#pragma once

// JSON forms of the task spec and the training configuration.

#include "infocon/config.hpp"
#include "infocon/synthdata.hpp"

#include "json.hpp"

#include <filesystem>

namespace infocon {

namespace synth {
nlohmann::json spec_to_json(const SyntheticTaskSpec& s);
// Throws DataError naming `file` and the offending field.
SyntheticTaskSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& file);
}  // namespace synth

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json config_to_json(const TrainConfig& c);
// Every field must be present; unknown fields are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

TrainConfig load_config(const std::filesystem::path& file);
void save_config(const TrainConfig& c, const std::filesystem::path& file);

}  // namespace infocon
