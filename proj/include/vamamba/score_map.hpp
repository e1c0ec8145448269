#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vamamba/nn.hpp"

namespace vamamba {

struct ViTConfig {
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t patch_size = 4;
  /// Side of the learned positional table; grids up to max_grid×max_grid.
  std::size_t max_grid = 16;
  bool pos_embed = true;
  double mlp_ratio = 2.0;

  void validate() const;
};

struct ViTLayer {
  LayerNormParams ln1;
  AttentionParams attn;
  LayerNormParams ln2;
  MlpParams mlp;
};

/// Patch scorer: linear patch embedding, learned positions, `depth` pre-norm
/// transformer layers, and a scalar head per patch token (no CLS token).
struct ViTParams {
  Linear embed;
  Tensor pos;  // [max_grid²×D]
  std::vector<ViTLayer> layers;
  LayerNormParams norm;
  Linear head;  // D→1, zero-initialized

  static ViTParams init(Rng& rng, std::size_t channels, const ViTConfig& cfg);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Per-image patch importance: raw scores S and softmax probabilities P on a
/// g×g grid, row-major (patch k = row·g + col).
struct ScoreMap {
  std::size_t grid = 1;
  std::size_t patch_size = 1;
  std::vector<double> scores;
  std::vector<double> probs;

  std::size_t patches() const { return grid * grid; }
  /// One grid row per line, space-separated decimals.
  std::string to_text(bool raw_scores = false) const;
  static ScoreMap uniform(std::size_t grid, std::size_t patch_size);
};

struct ScoreBatch {
  Tensor raw;    // [B×n]
  Tensor probs;  // [B×n]
  std::vector<ScoreMap> maps;
};

/// x [B×C×H×W] → [B×n×(C·p²)]; each patch flattened as (c, row, col).
Tensor partition_patches(const Tensor& x, std::size_t patch_size);
/// Inverse of partition_patches.
Tensor scatter_patches(const Tensor& patches, const Shape& image_shape, std::size_t patch_size);

/// Scores already-partitioned patches laid out on a g×g grid.
ScoreBatch score_patches(const Tensor& patches, std::size_t grid, const ViTParams& params,
                         const ViTConfig& cfg);
ScoreBatch compute_scores(const Tensor& x, const ViTParams& params, const ViTConfig& cfg);

/// Scales patch k of each image by n·P_k when enabled (the identity for
/// uniform P); a pass-through otherwise.
Tensor modulate_by_scores(const Tensor& patches, const Tensor& probs, bool enabled);

}  // namespace vamamba
