#pragma once

#include <string>
#include <vector>

#include "vamamba/run_config.hpp"

namespace vamamba {

struct BenchRow {
  std::string label;
  PathMode path_mode = PathMode::adaptive;
  KPaths k_paths = KPaths::two;
  double final_loss = 0.0;  // held-out hybrid loss
  double psnr = 0.0;        // held-out restored PSNR
  double noisy_psnr = 0.0;
  double seconds = 0.0;
  bool aborted = false;
};

/// Trains a fresh model (seeded from cfg.train.seed) and evaluates it on the
/// held-out set.
BenchRow bench_run(const RunConfig& cfg, const std::string& label);

/// One run per path mode at the configured k, then one per k configuration
/// with the adaptive path.
std::vector<BenchRow> bench_scan(const RunConfig& cfg);
/// Only the k configurations {1f, 1b, 2} with the configured path mode.
std::vector<BenchRow> bench_k_paths(const RunConfig& cfg);

std::string format_bench_table(const std::vector<BenchRow>& rows);

struct KPathsVerdict {
  bool holds = false;
  std::string report;
};
/// Checks that k=2's held-out loss is not above either single-direction run.
KPathsVerdict check_k_paths_trend(const std::vector<BenchRow>& rows);

}  // namespace vamamba
