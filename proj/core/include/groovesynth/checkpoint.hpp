#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/autograd.hpp"

namespace groovesynth {

// Archive layout: "GSCK", u32 version, u64 manifest size, manifest JSON, then
// little-endian float32 arrays (column-major) listed in manifest["tensors"].
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

  const Eigen::MatrixXd* find(const std::string& name) const;

  void put_parameters(const std::string& prefix, const nn::ParameterSet& params);
  void get_parameters(const std::string& prefix, nn::ParameterSet& params) const;
  void put_optimizer(const std::string& prefix, nn::Adam& adam);
  void get_optimizer(const std::string& prefix, nn::Adam& adam) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// MissingCheckpoint when the file is absent, FormatError when it is corrupt.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string rng_state(const std::mt19937_64& rng);
void restore_rng(std::mt19937_64& rng, const std::string& state);

}  // namespace groovesynth
