#include "vamamba/selective_scan.hpp"

#include <algorithm>
#include <cmath>

namespace vamamba {

SSMParams SSMParams::init(Rng& rng, std::size_t channels, std::size_t d_state) {
  if (channels == 0 || d_state == 0) throw ConfigError("SSM channels and d_state must be positive");
  SSMParams p;
  std::vector<double> a_log(channels * d_state);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t j = 0; j < d_state; ++j)
      a_log[c * d_state + j] = std::log(static_cast<double>(j + 1));
  p.A_log = Tensor::parameter({channels, d_state}, std::move(a_log));
  p.D_skip = Tensor::parameter({channels}, std::vector<double>(channels, 1.0));
  p.proj_B = Linear::init(rng, channels, d_state, false);
  p.proj_C = Linear::init(rng, channels, d_state, false);
  p.proj_dt = Linear::init(rng, channels, channels, true);
  // Δ starts log-uniform in [1e-3, 1e-1]: bias = softplus⁻¹(Δ).
  auto bias = p.proj_dt.bias.mutable_data();
  for (double& b : bias) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    b = dt + std::log(-std::expm1(-dt));
  }
  return p;
}

void SSMParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".A_log", A_log);
  out.emplace_back(prefix + ".D", D_skip);
  proj_B.collect(prefix + ".proj_B", out);
  proj_C.collect(prefix + ".proj_C", out);
  proj_dt.collect(prefix + ".proj_dt", out);
}

Tensor scan_recurrence(const Tensor& x, const Tensor& delta, const Tensor& A, const Tensor& B,
                       const Tensor& C, const Tensor& D, std::size_t segment) {
  if (x.dim() != 3) throw ShapeError("scan_recurrence expects x [S×L×C], got " + shape_str(x.shape()));
  const std::size_t S = x.size(0), L = x.size(1), Ch = x.size(2);
  if (A.dim() != 2 || A.size(0) != Ch) {
    throw ShapeError("scan_recurrence: A " + shape_str(A.shape()) + " does not match C=" +
                     std::to_string(Ch));
  }
  const std::size_t d = A.size(1);
  if (delta.shape() != x.shape() || B.shape() != Shape{S, L, d} || C.shape() != Shape{S, L, d} ||
      D.shape() != Shape{Ch}) {
    throw ShapeError("scan_recurrence: inconsistent coefficient shapes");
  }
  check_finite(A.data(), "scan_recurrence(A)");
  check_finite(D.data(), "scan_recurrence(D)");

  const double* xd = x.data().data();
  const double* dd = delta.data().data();
  const double* ad = A.data().data();
  const double* bd = B.data().data();
  const double* cd = C.data().data();
  const double* Dd = D.data().data();

  std::vector<double> y(S * L * Ch);
  std::vector<double> hist(S * L * Ch * d);  // h_t for the backward pass
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t c = 0; c < Ch; ++c) {
      std::vector<double> h(d, 0.0);
      for (std::size_t t = 0; t < L; ++t) {
        if (segment && t % segment == 0) std::fill(h.begin(), h.end(), 0.0);
        const std::size_t tc = (s * L + t) * Ch + c;
        const std::size_t td = (s * L + t) * d;
        const double dt = dd[tc], xv = xd[tc];
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          h[j] = std::exp(dt * ad[c * d + j]) * h[j] + dt * bd[td + j] * xv;
          acc += cd[td + j] * h[j];
        }
        std::copy(h.begin(), h.end(), hist.begin() + static_cast<std::ptrdiff_t>(tc * d));
        y[tc] = acc + Dd[c] * xv;
      }
    }
  }

  return record_op(
      "scan_recurrence", x.shape(), std::move(y), {x, delta, A, B, C, D},
      [=, hist = std::move(hist)](std::span<const double> g, std::span<const double>) {
        auto gx = grad_sink(x);
        auto gdelta = grad_sink(delta);
        auto gA = grad_sink(A);
        auto gB = grad_sink(B);
        auto gC = grad_sink(C);
        auto gD = grad_sink(D);
        const double* xd = x.data().data();
        const double* dd = delta.data().data();
        const double* ad = A.data().data();
        const double* bd = B.data().data();
        const double* cd = C.data().data();
        const double* Dd = D.data().data();
        std::vector<double> gh(d);
        for (std::size_t s = 0; s < S; ++s) {
          for (std::size_t c = 0; c < Ch; ++c) {
            std::fill(gh.begin(), gh.end(), 0.0);
            for (std::size_t t = L; t-- > 0;) {
              const std::size_t tc = (s * L + t) * Ch + c;
              const std::size_t td = (s * L + t) * d;
              const double gy = g[tc], dt = dd[tc], xv = xd[tc];
              const bool fresh = t == 0 || (segment && t % segment == 0);
              double gdt = 0.0, gxv = gy * Dd[c];
              if (!gD.empty()) gD[c] += gy * xv;
              for (std::size_t j = 0; j < d; ++j) {
                const double h = hist[tc * d + j];
                const double h_prev = fresh ? 0.0 : hist[((s * L + t - 1) * Ch + c) * d + j];
                const double a = std::exp(dt * ad[c * d + j]);
                gh[j] += gy * cd[td + j];
                if (!gC.empty()) gC[td + j] += gy * h;
                const double ga = gh[j] * h_prev;
                gdt += ga * a * ad[c * d + j] + gh[j] * bd[td + j] * xv;
                if (!gA.empty()) gA[c * d + j] += ga * a * dt;
                if (!gB.empty()) gB[td + j] += gh[j] * dt * xv;
                gxv += gh[j] * dt * bd[td + j];
                gh[j] = fresh ? 0.0 : gh[j] * a;
              }
              if (!gdelta.empty()) gdelta[tc] += gdt;
              if (!gx.empty()) gx[tc] += gxv;
            }
          }
        }
      });
}

Tensor selective_scan_1d(const Tensor& seq, const SSMParams& p, std::size_t segment) {
  if (seq.dim() == 2) {
    Tensor y = selective_scan_1d(reshape(seq, {1, seq.size(0), seq.size(1)}), p, segment);
    return reshape(y, seq.shape());
  }
  if (seq.dim() != 3 || seq.size(2) != p.channels()) {
    throw ShapeError("selective_scan_1d expects [L×" + std::to_string(p.channels()) +
                     "] or [S×L×C], got " + shape_str(seq.shape()));
  }
  Tensor delta = softplus(linear(seq, p.proj_dt));
  Tensor Bm = linear(seq, p.proj_B);
  Tensor Cm = linear(seq, p.proj_C);
  Tensor A = neg(exp(p.A_log));
  return scan_recurrence(seq, delta, A, Bm, Cm, p.D_skip, segment);
}

ScanSequence gather_along_path(const Tensor& patch_tokens, const ScanPath& path,
                               ScanDirection direction) {
  if (patch_tokens.dim() != 2 || patch_tokens.size(0) != path.size()) {
    throw ShapeError("gather_along_path: " + shape_str(patch_tokens.shape()) +
                     " does not match path of length " + std::to_string(path.size()));
  }
  const auto& order = direction == ScanDirection::forward ? path.forward : path.backward;
  const std::size_t width = patch_tokens.size(1);
  std::vector<std::size_t> index;
  index.reserve(patch_tokens.numel());
  for (std::size_t k : order)
    for (std::size_t c = 0; c < width; ++c) index.push_back(k * width + c);
  return {gather(patch_tokens, std::move(index), patch_tokens.shape()), path, direction};
}

Tensor scatter_from_path(const ScanSequence& seq) {
  const auto& order =
      seq.direction == ScanDirection::forward ? seq.origin.forward : seq.origin.backward;
  const std::size_t width = seq.tokens.size(1);
  std::vector<std::size_t> index(seq.tokens.numel());
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t c = 0; c < width; ++c) index[order[i] * width + c] = i * width + c;
  return gather(seq.tokens, std::move(index), seq.tokens.shape());
}

std::size_t slot_count(KPaths k) {
  switch (k) {
    case KPaths::forward_only:
    case KPaths::backward_only: return 1;
    case KPaths::two: return 2;
    case KPaths::four: return 4;
  }
  return 0;
}

KPaths parse_k_paths(const std::string& text) {
  if (text == "1f") return KPaths::forward_only;
  if (text == "1b") return KPaths::backward_only;
  if (text == "2") return KPaths::two;
  if (text == "4") return KPaths::four;
  throw ConfigError("unknown k_paths '" + text + "' (expected 1f, 1b, 2 or 4)");
}

std::string to_string(KPaths k) {
  switch (k) {
    case KPaths::forward_only: return "1f";
    case KPaths::backward_only: return "1b";
    case KPaths::two: return "2";
    case KPaths::four: return "4";
  }
  return "?";
}

ScanStrategy parse_scan_strategy(const std::string& text) {
  if (text == "raster") return ScanStrategy::raster;
  if (text == "snake") return ScanStrategy::snake;
  if (text == "bidirectional") return ScanStrategy::bidirectional;
  if (text == "local") return ScanStrategy::local;
  throw ConfigError("unknown scan strategy '" + text + "'");
}

std::string to_string(ScanStrategy s) {
  switch (s) {
    case ScanStrategy::raster: return "raster";
    case ScanStrategy::snake: return "snake";
    case ScanStrategy::bidirectional: return "bidirectional";
    case ScanStrategy::local: return "local";
  }
  return "?";
}

PathMode parse_path_mode(const std::string& text) {
  if (text == "adaptive") return PathMode::adaptive;
  if (text == "raster") return PathMode::raster;
  if (text == "snake") return PathMode::snake;
  if (text == "bidirectional") return PathMode::bidirectional;
  if (text == "local") return PathMode::local;
  throw ConfigError("unknown path_mode '" + text +
                    "' (expected adaptive, raster, snake, bidirectional or local)");
}

std::string to_string(PathMode m) {
  switch (m) {
    case PathMode::adaptive: return "adaptive";
    case PathMode::raster: return "raster";
    case PathMode::snake: return "snake";
    case PathMode::bidirectional: return "bidirectional";
    case PathMode::local: return "local";
  }
  return "?";
}

namespace {

std::vector<std::size_t> pixels_in_order(std::span<const std::size_t> patch_order,
                                         std::size_t patch_size, bool column_major_inside) {
  const std::size_t pp = patch_size * patch_size;
  std::vector<std::size_t> out;
  out.reserve(patch_order.size() * pp);
  for (std::size_t k : patch_order) {
    for (std::size_t i = 0; i < pp; ++i) {
      const std::size_t inner =
          column_major_inside ? (i % patch_size) * patch_size + i / patch_size : i;
      out.push_back(k * pp + inner);
    }
  }
  return out;
}

}  // namespace

ScanRoute route_from_path(const ScanPath& path, std::size_t patch_size) {
  ScanRoute r;
  r.first = pixels_in_order(path.forward, patch_size, false);
  r.second.assign(r.first.rbegin(), r.first.rend());
  return r;
}

ScanRoute route_for_strategy(ScanStrategy strategy, std::size_t grid, std::size_t patch_size) {
  switch (strategy) {
    case ScanStrategy::raster:
      return route_from_path(ScanPath::from_forward(raster_order(grid), grid), patch_size);
    case ScanStrategy::snake:
      return route_from_path(ScanPath::from_forward(snake_order(grid), grid), patch_size);
    case ScanStrategy::bidirectional: {
      // Row-wise and column-wise sweeps, as in two-axis cross scanning.
      ScanRoute r;
      r.first = pixels_in_order(raster_order(grid), patch_size, false);
      r.second = pixels_in_order(column_order(grid), patch_size, true);
      return r;
    }
    case ScanStrategy::local: {
      ScanRoute r = route_from_path(ScanPath::from_forward(raster_order(grid), grid), patch_size);
      r.segment = patch_size * patch_size;
      return r;
    }
  }
  throw ConfigError("unknown scan strategy");
}

Tensor scan_patches(const Tensor& patches, std::span<const ScanRoute> routes,
                    std::span<const SSMParams> slots, KPaths k, std::size_t patch_size) {
  if (patches.dim() != 3) throw ShapeError("scan_patches expects B×n×(C·p²), got " + shape_str(patches.shape()));
  const std::size_t B = patches.size(0), n = patches.size(1);
  const std::size_t pp = patch_size * patch_size;
  if (pp == 0 || patches.size(2) % pp != 0) throw ShapeError("scan_patches: patch size mismatch");
  const std::size_t C = patches.size(2) / pp;
  const std::size_t L = n * pp;
  if (routes.size() != B) throw ShapeError("scan_patches: one route per image required");
  const std::size_t active = slot_count(k);
  if (slots.size() < active) {
    throw ShapeError("scan_patches: " + std::to_string(active) + " parameter slots required, got " +
                     std::to_string(slots.size()));
  }
  for (const auto& r : routes) {
    if (r.first.size() != L || r.second.size() != L) {
      throw ShapeError("scan_patches: route length does not match " + std::to_string(L) + " tokens");
    }
  }
  const std::size_t segment = routes.front().segment;

  Tensor merged;
  for (std::size_t s = 0; s < active; ++s) {
    const bool use_second = k == KPaths::backward_only || (k != KPaths::forward_only && s % 2 == 1);
    std::vector<std::size_t> to_seq(B * L * C);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& order = use_second ? routes[b].second : routes[b].first;
      for (std::size_t t = 0; t < L; ++t) {
        const std::size_t q = order[t];
        const std::size_t base = (b * n + q / pp) * C * pp + q % pp;
        for (std::size_t c = 0; c < C; ++c) to_seq[(b * L + t) * C + c] = base + c * pp;
      }
    }
    std::vector<std::size_t> back(to_seq.size());
    for (std::size_t i = 0; i < to_seq.size(); ++i) back[to_seq[i]] = i;

    Tensor seq = gather(patches, std::move(to_seq), {B, L, C});
    Tensor y = selective_scan_1d(seq, slots[s], segment);
    Tensor out = gather(y, std::move(back), patches.shape());
    merged = s == 0 ? out : add(merged, out);
  }
  return active == 1 ? merged : scale(merged, 1.0 / static_cast<double>(active));
}

namespace {

std::size_t square_grid(const Tensor& x, std::size_t patch_size) {
  if (x.dim() != 4) throw ShapeError("expected B×C×H×W, got " + shape_str(x.shape()));
  if (patch_size == 0 || x.size(2) % patch_size || x.size(3) % patch_size) {
    throw ShapeError("image " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                     " is not divisible by patch size " + std::to_string(patch_size));
  }
  if (x.size(2) != x.size(3)) {
    throw ShapeError("scan needs a square patch grid, got " + std::to_string(x.size(2)) + "x" +
                     std::to_string(x.size(3)));
  }
  return x.size(2) / patch_size;
}

}  // namespace

Tensor gps_ss2d(const Tensor& x, std::span<const ScanPath> paths,
                std::span<const SSMParams> slots, KPaths k, std::size_t patch_size) {
  const std::size_t g = square_grid(x, patch_size);
  if (paths.size() != x.size(0)) throw ShapeError("gps_ss2d: one path per image required");
  std::vector<ScanRoute> routes;
  for (const auto& p : paths) {
    if (p.grid != g) throw ShapeError("gps_ss2d: path grid does not match feature grid");
    routes.push_back(route_from_path(p, patch_size));
  }
  Tensor y = scan_patches(partition_patches(x, patch_size), routes, slots, k, patch_size);
  return scatter_patches(y, x.shape(), patch_size);
}

Tensor gps_ss2d(const Tensor& x, std::span<const ScoreMap> maps, std::span<const SSMParams> slots,
                KPaths k, std::size_t patch_size) {
  std::vector<ScanPath> paths;
  for (const auto& m : maps) paths.push_back(plan_path(m.probs, m.grid));
  return gps_ss2d(x, std::span<const ScanPath>(paths), slots, k, patch_size);
}

Tensor fixed_path_ss2d(const Tensor& x, ScanStrategy strategy, std::span<const SSMParams> slots,
                       KPaths k, std::size_t patch_size) {
  const std::size_t g = square_grid(x, patch_size);
  std::vector<ScanRoute> routes(x.size(0), route_for_strategy(strategy, g, patch_size));
  Tensor y = scan_patches(partition_patches(x, patch_size), routes, slots, k, patch_size);
  return scatter_patches(y, x.shape(), patch_size);
}

GpsSs2d GpsSs2d::init(Rng& rng, const GpsConfig& cfg) {
  GpsSs2d m;
  m.cfg = cfg;
  m.cfg.vit.patch_size = cfg.patch_size;
  m.vit = ViTParams::init(rng, cfg.channels, m.cfg.vit);
  for (std::size_t s = 0; s < slot_count(cfg.k_paths); ++s) {
    m.slots.push_back(SSMParams::init(rng, cfg.channels, cfg.d_state));
  }
  return m;
}

void GpsSs2d::set_frozen(bool frozen) {
  frozen_ = frozen;
  if (!frozen) frozen_routes_.reset();
}

Tensor GpsSs2d::forward(const Tensor& x) {
  const std::size_t g = square_grid(x, cfg.patch_size);
  const std::size_t B = x.size(0);
  Tensor patches = partition_patches(x, cfg.patch_size);

  const bool adaptive = cfg.path_mode == PathMode::adaptive;
  last_scores_.clear();
  if (adaptive || cfg.score_modulation) {
    ScoreBatch scores = score_patches(patches, g, vit, cfg.vit);
    patches = modulate_by_scores(patches, scores.probs, cfg.score_modulation);
    last_scores_ = std::move(scores.maps);
  }

  std::vector<ScanRoute> routes;
  if (frozen_ && frozen_routes_ && frozen_routes_->size() == B &&
      frozen_routes_->front().first.size() == g * g * cfg.patch_size * cfg.patch_size) {
    routes = *frozen_routes_;
  } else {
    last_paths_.clear();
    for (std::size_t b = 0; b < B; ++b) {
      if (adaptive) {
        last_paths_.push_back(plan_path(last_scores_[b].probs, g));
        routes.push_back(route_from_path(last_paths_.back(), cfg.patch_size));
      } else {
        const auto strategy = static_cast<ScanStrategy>(static_cast<int>(cfg.path_mode) - 1);
        routes.push_back(route_for_strategy(strategy, g, cfg.patch_size));
      }
    }
    if (frozen_) frozen_routes_ = routes;
  }

  Tensor y = scan_patches(patches, routes, slots, cfg.k_paths, cfg.patch_size);
  return scatter_patches(y, x.shape(), cfg.patch_size);
}

void GpsSs2d::collect(const std::string& prefix, ParamList& out) const {
  vit.collect(prefix + ".vit", out);
  for (std::size_t s = 0; s < slots.size(); ++s) slots[s].collect(prefix + ".ssm" + std::to_string(s), out);
}

}  // namespace vamamba
