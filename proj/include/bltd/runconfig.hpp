#pragma once

#include <map>
#include <optional>
#include <string>

#include "bltd/model.hpp"
#include "bltd/training.hpp"

namespace bltd {

// Flat `key = value` configuration with '#' comments. Every key is validated
// against the schema before any work starts; unknown keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int patch_order = 2;
  double patch_smoothing = 0.1;
  int patch_max = 8;
  double patch_target_avg = 4.0;           // used when no explicit threshold
  std::optional<double> patch_threshold;   // overrides calibration

  static RunConfig defaults();
  // Parse and validate a config file, then apply `overrides` (highest
  // precedence). Throws std::runtime_error with a descriptive message.
  static RunConfig load(const std::string& path,
                        const std::map<std::string, std::string>& overrides = {});
  static RunConfig from_pairs(const std::map<std::string, std::string>& pairs);
};

}  // namespace bltd
