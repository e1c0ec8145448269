#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vamamba/ops.hpp"
#include "vamamba/random.hpp"
#include "vamamba/tensor.hpp"

namespace vamamba {

/// Named learnable tensors, in a stable registration order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct Linear {
  Tensor weight;  // [in×out]
  Tensor bias;    // [out], empty tensor (numel 1, unused) when has_bias is false
  bool has_bias = true;

  static Linear init(Rng& rng, std::size_t in, std::size_t out, bool bias = true);
  static Linear zeros(std::size_t in, std::size_t out, bool bias = true);
  std::size_t in_features() const { return weight.size(0); }
  std::size_t out_features() const { return weight.size(1); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Applies `p` along the last dimension of x [...×in].
Tensor linear(const Tensor& x, const Linear& p);

struct ConvParams {
  Tensor weight;  // [C_out×C_in×k×k], depthwise: [C×1×k×k]
  Tensor bias;    // [C_out]
  std::size_t kernel = 3;
  bool depthwise = false;

  static ConvParams init(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t kernel = 3);
  static ConvParams init_depthwise(Rng& rng, std::size_t channels, std::size_t kernel = 3);
  static ConvParams zeros(std::size_t c_in, std::size_t c_out, std::size_t kernel = 3);
  std::size_t in_channels() const { return depthwise ? weight.size(0) : weight.size(1); }
  std::size_t out_channels() const { return weight.size(0); }
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Same-padded (pad = (k−1)/2), stride-1 convolution on B×C×H×W.
Tensor conv2d(const Tensor& x, const ConvParams& p);

struct LayerNormParams {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  double epsilon = 1e-5;

  static LayerNormParams init(std::size_t channels, double epsilon = 1e-5);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Normalizes over the last dimension.
Tensor layernorm(const Tensor& x, const LayerNormParams& p);

/// B×C×H×W ↔ B×H×W×C.
Tensor to_channels_last(const Tensor& x);
Tensor to_channels_first(const Tensor& x);

/// LayerNorm over the channel axis of a B×C×H×W tensor (transposes around a
/// channel-last normalization).
Tensor layernorm_channels(const Tensor& x, const LayerNormParams& p);

struct MlpParams {
  Linear fc1;
  Linear fc2;

  static MlpParams init(Rng& rng, std::size_t channels, double hidden_ratio = 2.0);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// linear(C→⌈ratio·C⌉) → SiLU → linear(→C) on the last dimension.
Tensor mlp(const Tensor& x, const MlpParams& p);

struct AttentionParams {
  Linear qkv;   // D→3D
  Linear proj;  // D→D
  std::size_t heads = 1;

  static AttentionParams init(Rng& rng, std::size_t dim, std::size_t heads);
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Scaled dot-product multi-head self-attention on tokens [B×T×D]. When
/// `attention` is non-null it receives the softmax weights [B·heads×T×T].
Tensor mhsa(const Tensor& tokens, const AttentionParams& p, Tensor* attention = nullptr);

/// 2-D DFT of each H×W plane of x [B×C×H×W]; result [B×C×H×W×2] holds the
/// real and imaginary parts of the unnormalized forward transform.
Tensor dft2d(const Tensor& x);

}  // namespace vamamba
