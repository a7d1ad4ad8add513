#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "groovesynth/losses.hpp"

namespace groovesynth {

struct TrainConfig {
  std::string stage = "bps";  // bps | rps | traj
  std::string preset = "desk";
  int epochs = 500;
  int batch_size = 8;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  std::uint64_t seed = 0;

  double fps = 10.0;
  int window = 70;
  int seed_length = 20;
  int beat_cap = 20;
  int segment_length = 25;
  int segment_slide = 5;
  LossWeights weights;

  bool disable_bps = false;
  bool disable_rtc = false;
  bool fixed_reference_rtc = false;
  double teacher_forcing_ratio = 0.0;
  bool freeze_generator = false;  // discriminator-only updates

  std::string data;
  std::string out;
  std::string bps_checkpoint;
  std::string rps_checkpoint;
  std::string resume;
  int checkpoint_every = 0;  // epochs; 0 saves only at the end
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainConfig, stage, preset, epochs, batch_size, lr, beta1, beta2, seed, fps, window,
                                   seed_length, beat_cap, segment_length, segment_slide, weights, disable_bps,
                                   disable_rtc, fixed_reference_rtc, teacher_forcing_ratio, freeze_generator, data,
                                   out, bps_checkpoint, rps_checkpoint, resume, checkpoint_every)

// Stage defaults: bps 500 epochs at 1e-4, rps 250 epochs, traj 700 epochs at
// 1e-5 with betas (0.8, 0.99). Batch 8 throughout.
TrainConfig default_config(const std::string& stage);

// Defaults for `stage`, then the JSON file (if any), then `key=value`
// overrides with dotted keys. Values parse as JSON when they can, otherwise
// as strings. Unknown keys and bad values raise ConfigError.
TrainConfig load_config(const std::string& stage, const std::filesystem::path& file,
                        const std::vector<std::string>& overrides);
void apply_override(nlohmann::json& doc, const std::string& assignment);
void validate(const TrainConfig& cfg);

}  // namespace groovesynth
