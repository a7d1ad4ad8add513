#include "groovesynth/config.hpp"

#include <fstream>

#include "groovesynth/errors.hpp"

namespace groovesynth {

namespace {

void merge_known(nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  require(patch.is_object(), ErrorKind::ConfigError, where + " must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    require(base.contains(it.key()), ErrorKind::ConfigError, "unknown config key " + key);
    if (base[it.key()].is_object())
      merge_known(base[it.key()], it.value(), key);
    else
      base[it.key()] = it.value();
  }
}

}  // namespace

TrainConfig default_config(const std::string& stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  if (stage == "bps") {
    cfg.epochs = 500;
  } else if (stage == "rps") {
    cfg.epochs = 250;
  } else if (stage == "traj") {
    cfg.epochs = 700;
    cfg.lr = 1e-5;
    cfg.beta1 = 0.8;
    cfg.beta2 = 0.99;
  } else {
    fail(ErrorKind::ConfigError, "unknown stage " + stage);
  }
  return cfg;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::ConfigError, "expected key=value, got " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    require(node->is_object() && node->contains(part), ErrorKind::ConfigError, "unknown config key " + key);
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  require(!node->is_object(), ErrorKind::ConfigError, key + " is a section, not a value");
  if (node->is_string() && !value.is_string()) value = text;
  if (node->is_number() && !value.is_number())
    fail(ErrorKind::ConfigError, key + " expects a number, got " + text);
  if (node->is_boolean() && !value.is_boolean())
    fail(ErrorKind::ConfigError, key + " expects true or false, got " + text);
  *node = value;
}

void validate(const TrainConfig& cfg) {
  require(cfg.stage == "bps" || cfg.stage == "rps" || cfg.stage == "traj", ErrorKind::ConfigError,
          "unknown stage " + cfg.stage);
  require(cfg.preset == "desk" || cfg.preset == "full", ErrorKind::ConfigError,
          "preset must be desk or full, got " + cfg.preset);
  require(cfg.epochs >= 0 && cfg.batch_size >= 1, ErrorKind::ConfigError, "epochs >= 0 and batch_size >= 1");
  require(cfg.lr > 0 && cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 && cfg.beta2 < 1, ErrorKind::ConfigError,
          "bad optimizer settings");
  require(cfg.fps > 0 && cfg.window >= 2 && cfg.seed_length >= 1 && cfg.seed_length < cfg.window,
          ErrorKind::ConfigError, "need 1 <= seed_length < window");
  require(cfg.beat_cap >= 1, ErrorKind::ConfigError, "beat_cap must be positive");
  require(cfg.segment_length >= 1 && cfg.segment_slide >= 1 && cfg.segment_length <= cfg.window,
          ErrorKind::ConfigError, "bad segment plan");
  require(cfg.teacher_forcing_ratio >= 0 && cfg.teacher_forcing_ratio <= 1, ErrorKind::ConfigError,
          "teacher_forcing_ratio must be in [0, 1]");
  const LossWeights& w = cfg.weights;
  for (double v : {w.pose, w.velocity, w.leg_angle, w.leg_velocity, w.pose_motion, w.leg_motion, w.generator,
                   w.contrastive})
    require(v >= 0, ErrorKind::ConfigError, "loss weights must be non-negative");
  require(w.smooth_l1_beta > 0, ErrorKind::ConfigError, "smooth_l1_beta must be positive");
}

TrainConfig load_config(const std::string& stage, const std::filesystem::path& file,
                        const std::vector<std::string>& overrides) {
  nlohmann::json doc = default_config(stage);
  if (!file.empty()) {
    std::ifstream in(file);
    require(static_cast<bool>(in), ErrorKind::ConfigError, "cannot read config " + file.string());
    nlohmann::json patch = nlohmann::json::parse(in, nullptr, false);
    require(!patch.is_discarded(), ErrorKind::ConfigError, file.string() + " is not valid JSON");
    merge_known(doc, patch, "");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  TrainConfig cfg;
  try {
    cfg = doc.get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigError, std::string("bad config value: ") + e.what());
  }
  require(cfg.stage == stage, ErrorKind::ConfigError, "config stage " + cfg.stage + " does not match " + stage);
  validate(cfg);
  return cfg;
}

}  // namespace groovesynth
