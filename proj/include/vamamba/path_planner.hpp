#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vamamba {

/// Visiting order over a g×g patch grid. `backward` is always the exact
/// reverse of `forward`.
struct ScanPath {
  std::vector<std::size_t> forward;
  std::vector<std::size_t> backward;
  std::size_t grid = 1;

  static ScanPath from_forward(std::vector<std::size_t> forward, std::size_t grid);
  std::size_t size() const { return forward.size(); }
};

/// 4-neighbourhood of patch k (up, down, left, right), clipped to the grid,
/// in ascending index order.
std::vector<std::size_t> neighbors(std::size_t k, std::size_t grid);

/// Greedy walk: start at the global argmax, step to the best unvisited
/// 4-neighbour, and jump to the best unvisited patch when boxed in. Ties go to
/// the lowest patch index.
ScanPath plan_path(std::span<const double> probs, std::size_t grid);

struct PathViolation {
  enum class Kind { length, permutation, reverse, start, greedy };
  Kind kind;
  std::size_t position;
  std::string message;
};

/// Independent re-simulation of the planner; empty result means valid.
std::vector<PathViolation> validate_path(const ScanPath& path, std::span<const double> probs);

/// Fixed orders for the scan-strategy baselines.
std::vector<std::size_t> raster_order(std::size_t grid);
std::vector<std::size_t> snake_order(std::size_t grid);
std::vector<std::size_t> column_order(std::size_t grid);

/// "k0 k1 … k_{n−1}\n"
std::string path_to_text(std::span<const std::size_t> order);
std::vector<std::size_t> path_from_text(const std::string& text);

struct SvgStyle {
  double cell = 48.0;
  bool shade_scores = true;
};

/// Grid of patches, polyline through patch centres in visiting order and the
/// order number at each centre. Byte-for-byte deterministic.
std::string path_to_svg(const ScanPath& path, std::span<const double> probs,
                        const SvgStyle& style = {});

}  // namespace vamamba
