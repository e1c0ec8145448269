#pragma once

#include <optional>
#include <string>

#include "vamamba/run_config.hpp"

namespace vamamba::cli {

enum Exit : int { ok = 0, config_error = 2, io_error = 3, numeric_error = 4, tolerance_breach = 5 };

/// Flags shared by the subcommands; unset values leave the config alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::string path_mode;
  std::string k_paths;
};

RunConfig resolve_config(const Overrides& o);
void print_config(const RunConfig& cfg);

int cmd_train(const Overrides& o, const std::string& out_dir);
int cmd_restore(const std::string& checkpoint, const std::string& input, const std::string& output);
int cmd_gradcheck(const Overrides& o);
int cmd_plan_path(const Overrides& o, const std::string& checkpoint, const std::string& input,
                  const std::string& svg_out, std::size_t block);
int cmd_bench_scan(const Overrides& o, bool k_only);
int cmd_init(const Overrides& o, const std::string& out, bool identity);
int cmd_report(const std::string& checkpoint, const std::string& input);

}  // namespace vamamba::cli
