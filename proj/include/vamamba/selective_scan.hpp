#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vamamba/nn.hpp"
#include "vamamba/path_planner.hpp"
#include "vamamba/score_map.hpp"

namespace vamamba {

/// Selective state-space parameters for one scan direction.
///   Δ_t = softplus(proj_dt(x_t)), A = −exp(A_log),
///   h_t = exp(Δ_t·A)⊙h_{t−1} + Δ_t·B(x_t)·x_t,  y_t = C(x_t)·h_t + D·x_t
struct SSMParams {
  Tensor A_log;    // [C×d_state]
  Tensor D_skip;   // [C]
  Linear proj_B;   // C→d_state, no bias
  Linear proj_C;   // C→d_state, no bias
  Linear proj_dt;  // C→C

  static SSMParams init(Rng& rng, std::size_t channels, std::size_t d_state);
  std::size_t channels() const { return D_skip.numel(); }
  std::size_t d_state() const { return A_log.size(1); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Discretized recurrence with explicit coefficients:
///   x, delta [S×L×C]; A [C×d]; B, C [S×L×d]; D [C] → y [S×L×C].
/// With `segment` > 0 the state resets to zero every `segment` tokens.
Tensor scan_recurrence(const Tensor& x, const Tensor& delta, const Tensor& A, const Tensor& B,
                       const Tensor& C, const Tensor& D, std::size_t segment = 0);

/// Runs the selective scan over seq [L×C] or a batch [S×L×C].
Tensor selective_scan_1d(const Tensor& seq, const SSMParams& p, std::size_t segment = 0);

enum class ScanDirection { forward, backward };

struct ScanSequence {
  Tensor tokens;  // [L×C] in path order
  ScanPath origin;
  ScanDirection direction = ScanDirection::forward;
};

/// tokens[i] = patch_tokens[path.direction[i]].
ScanSequence gather_along_path(const Tensor& patch_tokens, const ScanPath& path,
                               ScanDirection direction);
/// Puts sequence tokens back at their patch positions.
Tensor scatter_from_path(const ScanSequence& seq);

/// Which directional scans run and get averaged.
enum class KPaths { forward_only, backward_only, two, four };
std::size_t slot_count(KPaths k);
KPaths parse_k_paths(const std::string& text);
std::string to_string(KPaths k);

enum class ScanStrategy { raster, snake, bidirectional, local };
ScanStrategy parse_scan_strategy(const std::string& text);
std::string to_string(ScanStrategy s);

/// Pixel visiting orders for one image. Entries are positions in the patch
/// layout (patch·p² + row·p + col). `first` is the primary order, `second`
/// the complementary one; segment > 0 resets the scan state at every
/// segment boundary.
struct ScanRoute {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
  std::size_t segment = 0;
};

/// Patch order from `path.forward`, raster inside each patch; second order is
/// the exact reverse of the first.
ScanRoute route_from_path(const ScanPath& path, std::size_t patch_size);
ScanRoute route_for_strategy(ScanStrategy strategy, std::size_t grid, std::size_t patch_size);

/// Core of every 2-D scan: patches [B×n×(C·p²)] → same layout, scanned along
/// each image's route with `slots` (one parameter set per directional scan),
/// averaged across the active scans.
Tensor scan_patches(const Tensor& patches, std::span<const ScanRoute> routes,
                    std::span<const SSMParams> slots, KPaths k, std::size_t patch_size);

/// GPS-SS2D with externally supplied paths (one per image).
Tensor gps_ss2d(const Tensor& x, std::span<const ScanPath> paths,
                std::span<const SSMParams> slots, KPaths k, std::size_t patch_size);
/// GPS-SS2D planning each image's path from its score map.
Tensor gps_ss2d(const Tensor& x, std::span<const ScoreMap> maps, std::span<const SSMParams> slots,
                KPaths k, std::size_t patch_size);
Tensor fixed_path_ss2d(const Tensor& x, ScanStrategy strategy, std::span<const SSMParams> slots,
                       KPaths k, std::size_t patch_size);

enum class PathMode { adaptive, raster, snake, bidirectional, local };
PathMode parse_path_mode(const std::string& text);
std::string to_string(PathMode m);

struct GpsConfig {
  std::size_t channels = 16;
  std::size_t d_state = 8;
  std::size_t patch_size = 4;
  KPaths k_paths = KPaths::two;
  PathMode path_mode = PathMode::adaptive;
  bool score_modulation = true;
  ViTConfig vit;
};

/// The scoring + planning + scanning unit used inside ASSM.
class GpsSs2d {
 public:
  static GpsSs2d init(Rng& rng, const GpsConfig& cfg);

  /// x [B×C×H×W] → [B×C×H×W].
  Tensor forward(const Tensor& x);

  /// While frozen, the first forward records each image's route and later
  /// forwards replay it, so the discrete planner cannot change between
  /// finite-difference evaluations.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  const std::vector<ScoreMap>& last_scores() const { return last_scores_; }
  const std::vector<ScanPath>& last_paths() const { return last_paths_; }

  void collect(const std::string& prefix, ParamList& out) const;

  GpsConfig cfg;
  ViTParams vit;
  std::vector<SSMParams> slots;

 private:
  bool frozen_ = false;
  std::optional<std::vector<ScanRoute>> frozen_routes_;
  std::vector<ScoreMap> last_scores_;
  std::vector<ScanPath> last_paths_;
};

}  // namespace vamamba
