#include "vamamba/score_map.hpp"

#include <cstdio>

namespace vamamba {

void ViTConfig::validate() const {
  if (embed_dim == 0 || depth == 0 || heads == 0 || patch_size == 0 || max_grid == 0) {
    throw ConfigError("vit: embed_dim, depth, heads, patch_size and max_grid must be positive");
  }
  if (embed_dim % heads != 0) {
    throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (!(mlp_ratio > 0.0)) throw ConfigError("vit: mlp_ratio must be positive");
}

ViTParams ViTParams::init(Rng& rng, std::size_t channels, const ViTConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.embed_dim;
  const std::size_t patch_dim = channels * cfg.patch_size * cfg.patch_size;
  ViTParams p;
  p.embed = Linear::init(rng, patch_dim, D);
  const std::size_t slots = cfg.max_grid * cfg.max_grid;
  std::vector<double> pos(slots * D);
  for (double& v : pos) v = rng.normal(0.0, 0.02);
  p.pos = Tensor::parameter({slots, D}, std::move(pos));
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    ViTLayer layer;
    layer.ln1 = LayerNormParams::init(D);
    layer.attn = AttentionParams::init(rng, D, cfg.heads);
    layer.ln2 = LayerNormParams::init(D);
    layer.mlp = MlpParams::init(rng, D, cfg.mlp_ratio);
    p.layers.push_back(std::move(layer));
  }
  p.norm = LayerNormParams::init(D);
  p.head = Linear::zeros(D, 1);
  return p;
}

void ViTParams::collect(const std::string& prefix, ParamList& out) const {
  embed.collect(prefix + ".embed", out);
  out.emplace_back(prefix + ".pos", pos);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lp = prefix + ".layer" + std::to_string(l);
    layers[l].ln1.collect(lp + ".ln1", out);
    layers[l].attn.collect(lp + ".attn", out);
    layers[l].ln2.collect(lp + ".ln2", out);
    layers[l].mlp.collect(lp + ".mlp", out);
  }
  norm.collect(prefix + ".norm", out);
  head.collect(prefix + ".head", out);
}

std::string ScoreMap::to_text(bool raw_scores) const {
  const auto& values = raw_scores ? scores : probs;
  std::string text;
  char buf[32];
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      std::snprintf(buf, sizeof buf, "%.9f", values[r * grid + c]);
      if (c) text += ' ';
      text += buf;
    }
    text += '\n';
  }
  return text;
}

ScoreMap ScoreMap::uniform(std::size_t grid, std::size_t patch_size) {
  ScoreMap m;
  m.grid = grid;
  m.patch_size = patch_size;
  m.scores.assign(grid * grid, 0.0);
  m.probs.assign(grid * grid, 1.0 / static_cast<double>(grid * grid));
  return m;
}

namespace {

void check_divisible(std::size_t H, std::size_t W, std::size_t p) {
  if (p == 0 || H % p != 0 || W % p != 0) {
    throw ShapeError("image " + std::to_string(H) + "x" + std::to_string(W) +
                     " is not divisible by patch size " + std::to_string(p));
  }
}

// Flat source index in B×C×H×W for each element of the B×n×(C·p²) layout.
std::vector<std::size_t> partition_index(std::size_t B, std::size_t C, std::size_t H,
                                         std::size_t W, std::size_t p) {
  const std::size_t gw = W / p, n = (H / p) * gw;
  std::vector<std::size_t> index;
  index.reserve(B * C * H * W);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row0 = (k / gw) * p, col0 = (k % gw) * p;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            index.push_back(((b * C + c) * H + row0 + y) * W + col0 + x);
    }
  return index;
}

}  // namespace

Tensor partition_patches(const Tensor& x, std::size_t patch_size) {
  if (x.dim() != 4) throw ShapeError("partition_patches expects B×C×H×W, got " + shape_str(x.shape()));
  const std::size_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  check_divisible(H, W, patch_size);
  const std::size_t n = (H / patch_size) * (W / patch_size);
  return gather(x, partition_index(B, C, H, W, patch_size), {B, n, C * patch_size * patch_size});
}

Tensor scatter_patches(const Tensor& patches, const Shape& image_shape, std::size_t patch_size) {
  if (image_shape.size() != 4) throw ShapeError("scatter_patches needs a B×C×H×W target shape");
  const std::size_t B = image_shape[0], C = image_shape[1], H = image_shape[2], W = image_shape[3];
  check_divisible(H, W, patch_size);
  if (patches.numel() != B * C * H * W) {
    throw ShapeError("scatter_patches: " + shape_str(patches.shape()) + " does not fill " +
                     shape_str(image_shape));
  }
  const auto forward = partition_index(B, C, H, W, patch_size);
  std::vector<std::size_t> inverse(forward.size());
  for (std::size_t i = 0; i < forward.size(); ++i) inverse[forward[i]] = i;
  return gather(patches, std::move(inverse), image_shape);
}

ScoreBatch score_patches(const Tensor& patches, std::size_t grid, const ViTParams& params,
                         const ViTConfig& cfg) {
  if (patches.dim() != 3 || patches.size(1) != grid * grid) {
    throw ShapeError("score_patches expects B×" + std::to_string(grid * grid) + "×D, got " +
                     shape_str(patches.shape()));
  }
  const std::size_t B = patches.size(0), n = grid * grid, D = cfg.embed_dim;
  Tensor tokens = linear(patches, params.embed);
  if (cfg.pos_embed) {
    if (grid > cfg.max_grid) {
      throw ShapeError("patch grid " + std::to_string(grid) + " exceeds positional table side " +
                       std::to_string(cfg.max_grid));
    }
    std::vector<std::size_t> rows;
    rows.reserve(n * D);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t slot = (k / grid) * cfg.max_grid + k % grid;
      for (std::size_t d = 0; d < D; ++d) rows.push_back(slot * D + d);
    }
    tokens = add(tokens, gather(params.pos, std::move(rows), {n, D}));
  }
  for (const auto& layer : params.layers) {
    tokens = add(tokens, mhsa(layernorm(tokens, layer.ln1), layer.attn));
    tokens = add(tokens, mlp(layernorm(tokens, layer.ln2), layer.mlp));
  }
  Tensor raw = reshape(linear(layernorm(tokens, params.norm), params.head), {B, n});
  Tensor probs = softmax(raw);

  ScoreBatch out{raw, probs, {}};
  for (std::size_t b = 0; b < B; ++b) {
    ScoreMap m;
    m.grid = grid;
    m.patch_size = cfg.patch_size;
    m.scores.assign(raw.data().begin() + b * n, raw.data().begin() + (b + 1) * n);
    m.probs.assign(probs.data().begin() + b * n, probs.data().begin() + (b + 1) * n);
    out.maps.push_back(std::move(m));
  }
  return out;
}

ScoreBatch compute_scores(const Tensor& x, const ViTParams& params, const ViTConfig& cfg) {
  Tensor patches = partition_patches(x, cfg.patch_size);
  const std::size_t gh = x.size(2) / cfg.patch_size, gw = x.size(3) / cfg.patch_size;
  if (gh != gw) {
    throw ShapeError("score map needs a square patch grid, got " + std::to_string(gh) + "x" +
                     std::to_string(gw));
  }
  return score_patches(patches, gh, params, cfg);
}

Tensor modulate_by_scores(const Tensor& patches, const Tensor& probs, bool enabled) {
  if (!enabled) return patches;
  if (patches.dim() != 3 || probs.dim() != 2 || probs.size(0) != patches.size(0) ||
      probs.size(1) != patches.size(1)) {
    throw ShapeError("modulate_by_scores: probs " + shape_str(probs.shape()) +
                     " do not match patches " + shape_str(patches.shape()));
  }
  const std::size_t n = patches.size(1);
  Tensor gate = scale(reshape(probs, {probs.size(0), n, 1}), static_cast<double>(n));
  return mul(patches, gate);
}

}  // namespace vamamba
