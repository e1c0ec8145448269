#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "vamamba/nn.hpp"
#include "vamamba/qclam.hpp"
#include "vamamba/selective_scan.hpp"

namespace vamamba {

struct ModelConfig {
  std::size_t channels = 16;
  std::size_t groups = 2;
  std::size_t blocks_per_group = 2;
  std::size_t lora_rank = 4;
  std::size_t cache_capacity = 5;
  std::size_t patch_size = 4;
  std::size_t d_state = 8;
  ViTConfig vit;
  bool score_modulation = true;
  PathMode path_mode = PathMode::adaptive;
  KPaths k_paths = KPaths::two;
  double gamma_min = 0.5;
  double mlp_ratio = 2.0;
  /// false selects the non-residual block reading (stage outputs replace x).
  bool residual_blocks = true;

  void validate() const;
  /// Applies one "model." key; returns false for keys it does not own.
  bool set(const std::string& key, const std::string& value);
  /// "key=value" lines in a fixed order, all keys prefixed "model.".
  std::string to_text() const;
};

struct AssmState {
  Linear in_proj;
  ConvParams dwconv;
  Qclam qclam;
  GpsSs2d gps;
  LayerNormParams ln_scan;
  LayerNormParams ln_gate;
  Linear out_proj;
};

struct BlockState {
  Tensor alpha;  // [1]
  Tensor beta;   // [1]
  LayerNormParams ln1;
  LayerNormParams ln2;
  AssmState assm;
  MlpParams mlp;
};

struct GroupState {
  std::vector<BlockState> blocks;
  ConvParams conv;
};

/// Filled by Model::forward when supplied.
struct ForwardProbe {
  std::vector<std::size_t> group_order;
  std::vector<Tensor> group_outputs;
  /// Per block (flattened group-major), per image.
  std::vector<std::vector<ScoreMap>> scores;
  std::vector<std::vector<ScanPath>> paths;
};

/// x [B×C×H×W]: OutProj(LN(GPS(QCLAM(SiLU(DWConv(Linear x))))) ⊙ LN(SiLU x)).
Tensor assm_forward(const Tensor& x, AssmState& s);
/// Residual reading: s1 = x + α·ASSM(LN x); out = s1 + β·MLP(LN s1).
Tensor ramb_forward(const Tensor& x, BlockState& b);
/// Literal reading: s1 = α·ASSM(LN x); out = β·MLP(LN s1).
Tensor ramb_forward_literal(const Tensor& x, BlockState& b);
/// Blocks, 3×3 conv, group residual.
Tensor ramg_forward(const Tensor& x, GroupState& g, bool residual_blocks = true,
                    ForwardProbe* probe = nullptr);

class Model {
 public:
  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  /// i_lq [B×3×H×W] → i_hq = i_lq + f_rec(F_d + F_s).
  Tensor forward(const Tensor& i_lq, ForwardProbe* probe = nullptr);

  /// Parameters in a stable, name-sorted-by-construction order.
  ParamList parameters() const;
  std::size_t parameter_count() const;

  /// α = β = 0 and zero reconstruction conv: the identity map.
  void make_identity();
  /// Pins discrete choices (cache lookups, scan routes) for finite differences.
  void set_frozen(bool frozen);
  void reset_caches();
  std::vector<const FeatureCache*> caches() const;

  ModelConfig cfg;
  ConvParams shallow;  // 3→C
  std::vector<GroupState> groups;
  ConvParams body;     // C→C
  ConvParams rec;      // C→3
};

/// Binary checkpoint:
///   "VAMB" | u32 version | u32 config length | config text |
///   u32 tensor count | per tensor: u32 name length, name, u8 dtype (0 f64,
///   1 f32), u32 ndim, u64 dims…, little-endian values.
enum class CheckpointDtype : std::uint8_t { f64 = 0, f32 = 1 };
void save_checkpoint(const std::string& path, const Model& model,
                     CheckpointDtype dtype = CheckpointDtype::f64);
Model load_checkpoint(const std::string& path);
std::string checkpoint_bytes(const Model& model, CheckpointDtype dtype = CheckpointDtype::f64);
Model checkpoint_from_bytes(const std::string& bytes);

}  // namespace vamamba
