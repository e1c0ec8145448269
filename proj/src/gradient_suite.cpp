#include "vamamba/gradient_suite.hpp"

#include <chrono>
#include <cstdio>

#include "vamamba/training.hpp"

namespace vamamba {

namespace {

Tensor random_leaf(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::parameter(std::move(shape), rng.uniform_vector(n, lo, hi));
}

Tensor random_const(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), rng.uniform_vector(n, lo, hi));
}

// Moves every parameter off its structured initialization (zero heads, zero
// LoRA up-projection, unit scales) so every path carries gradient.
void jitter(const ParamList& params, Rng& rng, double amplitude) {
  for (const auto& [name, t] : params) {
    Tensor p = t;
    for (double& v : p.mutable_data()) v += rng.uniform(-amplitude, amplitude);
  }
}

// Weighted sum keeps every output coordinate in play with distinct weights.
Tensor probe_sum(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

struct Checked {
  std::vector<Tensor> tensors;
  std::vector<std::string> names;

  void add(const std::string& name, const Tensor& t) {
    tensors.push_back(t);
    names.push_back(name);
  }
  void add(const ParamList& params) {
    for (const auto& [name, t] : params) add(name, t);
  }
};

ModelConfig tiny_config() {
  ModelConfig c;
  c.channels = 4;
  c.groups = 1;
  c.blocks_per_group = 1;
  c.lora_rank = 2;
  c.d_state = 2;
  c.patch_size = 2;
  c.vit.embed_dim = 8;
  c.vit.depth = 1;
  c.vit.heads = 2;
  c.vit.max_grid = 4;
  return c;
}

ParamList block_params(const Model& m) {
  ParamList all = m.parameters(), out;
  for (auto& p : all)
    if (p.first.rfind("group0.block0.", 0) == 0) out.push_back(p);
  return out;
}

}  // namespace

std::vector<GradientBlockResult> run_gradient_suite(const GradientSuiteOptions& options) {
  std::vector<GradientBlockResult> results;
  auto run = [&](const std::string& block, const std::function<Tensor()>& f, const Checked& c,
                 std::size_t max_coords) {
    GradcheckOptions go;
    go.step = options.step;
    go.max_coords_per_tensor = max_coords;
    go.seed = options.seed;
    const auto t0 = std::chrono::steady_clock::now();
    GradientBlockResult r;
    r.block = block;
    r.check = finite_diff_check(f, c.tensors, go, c.names);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.passed = r.check.max_relative_error < options.tolerance;
    results.push_back(std::move(r));
  };

  Rng rng(options.seed);

  {
    LoRAAdapter a = LoRAAdapter::random(rng, 8, 2, 0.5);
    Tensor x = random_leaf(rng, {2, 5, 8});
    Tensor w = random_const(rng, {2, 5, 8});
    Checked c;
    c.add("x", x);
    c.add("W_down", a.W_down);
    c.add("W_up", a.W_up);
    run("lora", [&] { return probe_sum(lora_forward(x, a), w); }, c, 0);
  }

  {
    // The partner sits near x so γ stays strictly inside (γ_min, 1).
    Tensor x = random_leaf(rng, {2, 3, 4});
    std::vector<double> near(x.numel());
    for (std::size_t i = 0; i < near.size(); ++i) near[i] = x.at(i) + rng.uniform(-0.6, 0.6);
    Tensor best({2, 3, 4}, std::move(near));
    Tensor w = random_const(rng, {2, 3, 4});
    Checked c;
    c.add("x", x);
    run("fusion", [&] { return probe_sum(fuse_tracked(x, best, 0.5), w); }, c, 0);
  }

  {
    SSMParams p = SSMParams::init(rng, 3, 2);
    ParamList params;
    p.collect("ssm", params);
    jitter(params, rng, 0.2);
    Tensor seq = random_leaf(rng, {2, 6, 3});
    Tensor w = random_const(rng, {2, 6, 3});
    Checked c;
    c.add("seq", seq);
    c.add(params);
    run("selective_scan", [&] { return probe_sum(selective_scan_1d(seq, p), w); }, c, 0);
  }

  for (const char* block : {"assm", "ramb"}) {
    Model m = Model::init(tiny_config(), options.seed + 1);
    jitter(m.parameters(), rng, 0.3);
    BlockState& b = m.groups[0].blocks[0];
    Tensor x = random_leaf(rng, {2, 4, 4, 4});
    Tensor w = random_const(rng, {2, 4, 4, 4});
    const bool is_assm = std::string(block) == "assm";
    {
      NoGradScope warm;
      Tensor other = random_const(rng, {2, 4, 4, 4});
      if (is_assm) assm_forward(other, b.assm);
      else ramb_forward(other, b);
    }
    m.set_frozen(true);
    Checked c;
    c.add("x", x);
    c.add(block_params(m));
    if (is_assm) {
      run(block, [&] { return probe_sum(assm_forward(x, b.assm), w); }, c, 0);
    } else {
      run(block, [&] { return probe_sum(ramb_forward(x, b), w); }, c, 0);
    }
  }

  {
    Model m = Model::init(options.model, options.seed + 2);
    jitter(m.parameters(), rng, 0.05);
    Tensor x = random_leaf(rng, {1, 3, 8, 8}, 0.0, 1.0);
    Tensor gt = random_const(rng, {1, 3, 8, 8}, 0.0, 1.0);
    {
      NoGradScope warm;
      m.forward(random_const(rng, {1, 3, 8, 8}, 0.0, 1.0));
    }
    m.set_frozen(true);
    Checked c;
    c.add("input", x);
    c.add(m.parameters());
    run("network+loss", [&] { return hybrid_loss(m.forward(x), gt, 0.05); }, c,
        options.network_coords);
  }
  return results;
}

std::string format_gradient_report(const std::vector<GradientBlockResult>& results) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s %14s %8s %9s  %s\n", "block", "max_rel_err", "coords",
                "seconds", "status");
  out += buf;
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-16s %14.3e %8zu %9.2f  %s (worst %s)\n", r.block.c_str(),
                  r.check.max_relative_error, r.check.coords_checked, r.seconds,
                  r.passed ? "ok" : "FAIL", r.check.worst.c_str());
    out += buf;
  }
  return out;
}

}  // namespace vamamba
