#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vamamba/gradcheck.hpp"
#include "vamamba/network.hpp"

namespace vamamba {

struct GradientSuiteOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Coordinates sampled per tensor in the two network-sized blocks.
  std::size_t network_coords = 8;
  std::uint64_t seed = 3;
  ModelConfig model;  // used by the full-network block
};

struct GradientBlockResult {
  std::string block;
  GradcheckResult check;
  double seconds = 0.0;
  bool passed = false;
};

/// Finite-difference checks of: lora, fusion, selective_scan, assm, ramb,
/// network+loss (1×3×8×8).
std::vector<GradientBlockResult> run_gradient_suite(const GradientSuiteOptions& options);

/// Fixed-width table, one line per block.
std::string format_gradient_report(const std::vector<GradientBlockResult>& results);

}  // namespace vamamba
