#include "vamamba/network.hpp"

#include "vamamba/config_text.hpp"

namespace vamamba {

void ModelConfig::validate() const {
  if (channels == 0 || groups == 0 || blocks_per_group == 0 || cache_capacity == 0 ||
      patch_size == 0 || d_state == 0) {
    throw ConfigError("model: channels, groups, blocks_per_group, cache_capacity, patch_size and "
                      "d_state must be positive");
  }
  if (lora_rank == 0 || lora_rank >= channels) {
    throw ConfigError("model.lora_rank must satisfy 0 < r < channels (r=" +
                      std::to_string(lora_rank) + ", channels=" + std::to_string(channels) + ")");
  }
  if (!(gamma_min >= 0.0 && gamma_min <= 1.0)) throw ConfigError("model.gamma_min must lie in [0,1]");
  if (!(mlp_ratio > 0.0)) throw ConfigError("model.mlp_ratio must be positive");
  ViTConfig v = vit;
  v.patch_size = patch_size;
  v.validate();
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
  using namespace config_text;
  if (key == "model.channels") channels = parse_size(key, value);
  else if (key == "model.groups") groups = parse_size(key, value);
  else if (key == "model.blocks_per_group") blocks_per_group = parse_size(key, value);
  else if (key == "model.lora_rank") lora_rank = parse_size(key, value);
  else if (key == "model.cache_capacity") cache_capacity = parse_size(key, value);
  else if (key == "model.patch_size") patch_size = parse_size(key, value);
  else if (key == "model.d_state") d_state = parse_size(key, value);
  else if (key == "model.vit_embed_dim") vit.embed_dim = parse_size(key, value);
  else if (key == "model.vit_depth") vit.depth = parse_size(key, value);
  else if (key == "model.vit_heads") vit.heads = parse_size(key, value);
  else if (key == "model.vit_max_grid") vit.max_grid = parse_size(key, value);
  else if (key == "model.vit_pos_embed") vit.pos_embed = parse_bool(key, value);
  else if (key == "model.vit_mlp_ratio") vit.mlp_ratio = parse_real(key, value);
  else if (key == "model.score_modulation") score_modulation = parse_bool(key, value);
  else if (key == "model.path_mode") path_mode = parse_path_mode(value);
  else if (key == "model.k_paths") k_paths = parse_k_paths(value);
  else if (key == "model.gamma_min") gamma_min = parse_real(key, value);
  else if (key == "model.mlp_ratio") mlp_ratio = parse_real(key, value);
  else if (key == "model.residual_blocks") residual_blocks = parse_bool(key, value);
  else return false;
  return true;
}

std::string ModelConfig::to_text() const {
  using namespace config_text;
  std::string t;
  auto line = [&](const char* key, const std::string& v) { t += std::string("model.") + key + "=" + v + "\n"; };
  line("channels", std::to_string(channels));
  line("groups", std::to_string(groups));
  line("blocks_per_group", std::to_string(blocks_per_group));
  line("lora_rank", std::to_string(lora_rank));
  line("cache_capacity", std::to_string(cache_capacity));
  line("patch_size", std::to_string(patch_size));
  line("d_state", std::to_string(d_state));
  line("vit_embed_dim", std::to_string(vit.embed_dim));
  line("vit_depth", std::to_string(vit.depth));
  line("vit_heads", std::to_string(vit.heads));
  line("vit_max_grid", std::to_string(vit.max_grid));
  line("vit_pos_embed", format_bool(vit.pos_embed));
  line("vit_mlp_ratio", format_real(vit.mlp_ratio));
  line("score_modulation", format_bool(score_modulation));
  line("path_mode", to_string(path_mode));
  line("k_paths", to_string(k_paths));
  line("gamma_min", format_real(gamma_min));
  line("mlp_ratio", format_real(mlp_ratio));
  line("residual_blocks", format_bool(residual_blocks));
  return t;
}

Tensor assm_forward(const Tensor& x, AssmState& s) {
  Tensor xl = to_channels_last(x);
  Tensor h = to_channels_first(linear(xl, s.in_proj));
  h = silu(conv2d(h, s.dwconv));
  h = s.gps.forward(s.qclam.forward(h));
  Tensor branch1 = layernorm(to_channels_last(h), s.ln_scan);
  Tensor branch2 = layernorm(silu(xl), s.ln_gate);
  return to_channels_first(linear(mul(branch1, branch2), s.out_proj));
}

Tensor ramb_forward(const Tensor& x, BlockState& b) {
  Tensor stage1 = add(x, mul(assm_forward(layernorm_channels(x, b.ln1), b.assm), b.alpha));
  Tensor m = to_channels_first(mlp(layernorm(to_channels_last(stage1), b.ln2), b.mlp));
  return add(stage1, mul(m, b.beta));
}

Tensor ramb_forward_literal(const Tensor& x, BlockState& b) {
  Tensor stage1 = mul(assm_forward(layernorm_channels(x, b.ln1), b.assm), b.alpha);
  Tensor m = to_channels_first(mlp(layernorm(to_channels_last(stage1), b.ln2), b.mlp));
  return mul(m, b.beta);
}

Tensor ramg_forward(const Tensor& x, GroupState& g, bool residual_blocks, ForwardProbe* probe) {
  Tensor y = x;
  for (auto& block : g.blocks) {
    y = residual_blocks ? ramb_forward(y, block) : ramb_forward_literal(y, block);
    if (probe) {
      probe->scores.push_back(block.assm.gps.last_scores());
      probe->paths.push_back(block.assm.gps.last_paths());
    }
  }
  return add(x, conv2d(y, g.conv));
}

namespace {

BlockState init_block(Rng& rng, const ModelConfig& cfg) {
  const std::size_t C = cfg.channels;
  BlockState b;
  b.alpha = Tensor::parameter({1}, {1.0});
  b.beta = Tensor::parameter({1}, {1.0});
  b.ln1 = LayerNormParams::init(C);
  b.ln2 = LayerNormParams::init(C);
  b.assm.in_proj = Linear::init(rng, C, C);
  b.assm.dwconv = ConvParams::init_depthwise(rng, C, 3);
  b.assm.qclam = Qclam::init(rng, {C, cfg.lora_rank, cfg.cache_capacity, cfg.gamma_min});
  GpsConfig g;
  g.channels = C;
  g.d_state = cfg.d_state;
  g.patch_size = cfg.patch_size;
  g.k_paths = cfg.k_paths;
  g.path_mode = cfg.path_mode;
  g.score_modulation = cfg.score_modulation;
  g.vit = cfg.vit;
  b.assm.gps = GpsSs2d::init(rng, g);
  b.assm.ln_scan = LayerNormParams::init(C);
  b.assm.ln_gate = LayerNormParams::init(C);
  b.assm.out_proj = Linear::init(rng, C, C);
  b.mlp = MlpParams::init(rng, C, cfg.mlp_ratio);
  return b;
}

}  // namespace

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.cfg = cfg;
  m.cfg.vit.patch_size = cfg.patch_size;
  m.shallow = ConvParams::init(rng, 3, cfg.channels, 3);
  for (std::size_t k = 0; k < cfg.groups; ++k) {
    GroupState g;
    for (std::size_t i = 0; i < cfg.blocks_per_group; ++i) g.blocks.push_back(init_block(rng, m.cfg));
    g.conv = ConvParams::init(rng, cfg.channels, cfg.channels, 3);
    m.groups.push_back(std::move(g));
  }
  m.body = ConvParams::init(rng, cfg.channels, cfg.channels, 3);
  m.rec = ConvParams::init(rng, cfg.channels, 3, 3);
  return m;
}

Tensor Model::forward(const Tensor& i_lq, ForwardProbe* probe) {
  if (i_lq.dim() != 4 || i_lq.size(1) != 3) {
    throw ShapeError("model input must be B×3×H×W, got " + shape_str(i_lq.shape()));
  }
  const std::size_t p = cfg.patch_size;
  if (i_lq.size(2) % p || i_lq.size(3) % p) {
    throw ShapeError("image " + std::to_string(i_lq.size(2)) + "x" + std::to_string(i_lq.size(3)) +
                     " is not divisible by patch size " + std::to_string(p));
  }
  Tensor f_s = conv2d(i_lq, shallow);
  Tensor f = f_s;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    f = ramg_forward(f, groups[k], cfg.residual_blocks, probe);
    if (probe) {
      probe->group_order.push_back(k);
      probe->group_outputs.push_back(f.detach());
    }
  }
  Tensor f_d = conv2d(f, body);
  return add(i_lq, conv2d(add(f_d, f_s), rec));
}

ParamList Model::parameters() const {
  ParamList out;
  shallow.collect("shallow", out);
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const std::string gp = "group" + std::to_string(k);
    for (std::size_t i = 0; i < groups[k].blocks.size(); ++i) {
      const BlockState& b = groups[k].blocks[i];
      const std::string bp = gp + ".block" + std::to_string(i);
      out.emplace_back(bp + ".alpha", b.alpha);
      out.emplace_back(bp + ".beta", b.beta);
      b.ln1.collect(bp + ".ln1", out);
      b.ln2.collect(bp + ".ln2", out);
      b.assm.in_proj.collect(bp + ".assm.in_proj", out);
      b.assm.dwconv.collect(bp + ".assm.dwconv", out);
      b.assm.qclam.collect(bp + ".assm.qclam", out);
      b.assm.gps.collect(bp + ".assm.gps", out);
      b.assm.ln_scan.collect(bp + ".assm.ln_scan", out);
      b.assm.ln_gate.collect(bp + ".assm.ln_gate", out);
      b.assm.out_proj.collect(bp + ".assm.out_proj", out);
      b.mlp.collect(bp + ".mlp", out);
    }
    groups[k].conv.collect(gp + ".conv", out);
  }
  body.collect("body", out);
  rec.collect("rec", out);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

void Model::make_identity() {
  for (auto& g : groups) {
    for (auto& b : g.blocks) {
      b.alpha.mutable_data()[0] = 0.0;
      b.beta.mutable_data()[0] = 0.0;
    }
  }
  for (double& v : rec.weight.mutable_data()) v = 0.0;
  for (double& v : rec.bias.mutable_data()) v = 0.0;
}

void Model::set_frozen(bool frozen) {
  for (auto& g : groups) {
    for (auto& b : g.blocks) {
      b.assm.qclam.set_frozen(frozen);
      b.assm.gps.set_frozen(frozen);
    }
  }
}

void Model::reset_caches() {
  for (auto& g : groups)
    for (auto& b : g.blocks) b.assm.qclam.reset_cache();
}

std::vector<const FeatureCache*> Model::caches() const {
  std::vector<const FeatureCache*> out;
  for (const auto& g : groups)
    for (const auto& b : g.blocks) out.push_back(&b.assm.qclam.cache);
  return out;
}

}  // namespace vamamba
