#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vamamba/tensor.hpp"

namespace vamamba {

struct GradcheckOptions {
  double step = 1e-5;
  /// Coordinates probed per tensor; 0 probes every coordinate. Sampled
  /// coordinates are chosen deterministically from `seed`.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 7;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t coords_checked = 0;
  /// Name/index of the worst coordinate, for diagnostics.
  std::string worst;
};

/// Compares the tape gradient of the scalar `f` against central differences
///   |analytic − (f(θ+h) − f(θ−h)) / 2h| / max(1, |analytic|)
/// over the listed leaf tensors. `f` is evaluated once under a fresh tape and
/// then repeatedly without recording; it must be deterministic.
GradcheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  std::vector<Tensor> params,
                                  const GradcheckOptions& options = {},
                                  const std::vector<std::string>& names = {});

/// Shorthand returning only the maximum relative error.
double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double step);

}  // namespace vamamba
