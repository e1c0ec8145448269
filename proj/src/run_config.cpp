#include "vamamba/run_config.hpp"

#include <fstream>
#include <sstream>

namespace vamamba {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (model.set(key, value) || train.set(key, value)) return;
  if (key == "checkpoint.dtype") {
    if (value == "f64") checkpoint_dtype = CheckpointDtype::f64;
    else if (value == "f32") checkpoint_dtype = CheckpointDtype::f32;
    else throw ConfigError("checkpoint.dtype: expected f64 or f32, got '" + value + "'");
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (train.crop % model.patch_size != 0) {
    throw ConfigError("train.crop " + std::to_string(train.crop) + " is not divisible by model.patch_size " +
                      std::to_string(model.patch_size));
  }
  if (train.crop / model.patch_size > model.vit.max_grid) {
    throw ConfigError("patch grid of a train.crop patch exceeds model.vit_max_grid");
  }
}

std::string RunConfig::to_text() const {
  return model.to_text() + train.to_text() +
         "checkpoint.dtype=" + (checkpoint_dtype == CheckpointDtype::f32 ? "f32" : "f64") + "\n";
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::size_t number = 0;
  for (std::string line; std::getline(in, line);) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path);
}

}  // namespace vamamba
