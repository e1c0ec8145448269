#pragma once

#include <string>

#include "vamamba/network.hpp"
#include "vamamba/training.hpp"

namespace vamamba {

/// Flat `key = value` configuration covering the model, the training run
/// and output options. `#` starts a comment; unknown keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  CheckpointDtype checkpoint_dtype = CheckpointDtype::f64;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);

}  // namespace vamamba
