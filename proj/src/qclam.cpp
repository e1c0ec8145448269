#include "vamamba/qclam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace vamamba {

LoRAAdapter LoRAAdapter::init(Rng& rng, std::size_t channels, std::size_t rank) {
  if (rank == 0 || rank >= channels) {
    throw ConfigError("lora rank must satisfy 0 < r < C (r=" + std::to_string(rank) +
                      ", C=" + std::to_string(channels) + ")");
  }
  LoRAAdapter a;
  a.rank = rank;
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  a.W_down = Tensor::parameter({channels, rank}, rng.uniform_vector(channels * rank, -bound, bound));
  a.W_up = Tensor::parameter({rank, channels}, std::vector<double>(rank * channels, 0.0));
  return a;
}

LoRAAdapter LoRAAdapter::random(Rng& rng, std::size_t channels, std::size_t rank,
                                double amplitude) {
  if (rank == 0 || rank > channels) throw ConfigError("lora rank out of range");
  LoRAAdapter a;
  a.rank = rank;
  a.W_down = Tensor::parameter({channels, rank},
                               rng.uniform_vector(channels * rank, -amplitude, amplitude));
  a.W_up = Tensor::parameter({rank, channels},
                             rng.uniform_vector(rank * channels, -amplitude, amplitude));
  return a;
}

std::vector<double> LoRAAdapter::delta_weight() const {
  const std::size_t C = channels(), r = rank;
  const auto d = W_down.data();
  const auto u = W_up.data();
  std::vector<double> out(C * C, 0.0);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t j = 0; j < C; ++j) out[i * C + j] += d[i * r + k] * u[k * C + j];
  return out;
}

void LoRAAdapter::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".W_down", W_down);
  out.emplace_back(prefix + ".W_up", W_up);
}

Tensor lora_forward(const Tensor& x, const LoRAAdapter& a) {
  const std::size_t C = a.channels();
  if (x.dim() == 0 || x.shape().back() != C) {
    throw ShapeError("lora_forward: channel dim of " + shape_str(x.shape()) + " does not match C=" +
                     std::to_string(C));
  }
  Tensor flat = reshape(x, {x.numel() / C, C});
  Tensor update = matmul(matmul(flat, a.W_down), a.W_up);
  return reshape(add(flat, update), x.shape());
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: size mismatch");
  std::vector<double> ab(a.size()), aa(a.size()), bb(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab[i] = a[i] * b[i];
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
  }
  const double na = std::sqrt(pairwise_sum(aa)), nb = std::sqrt(pairwise_sum(bb));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(pairwise_sum(ab) / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("cosine_similarity: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  return cosine_similarity(a.data(), b.data());
}

FeatureCache::FeatureCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("cache capacity must be positive");
}

std::uint64_t FeatureCache::enqueue(const Tensor& feature) {
  if (entries_.size() == capacity_) {
    entries_.pop_front();
    ++stats_.evictions;
  }
  entries_.push_back({feature.detach(), next_sequence_});
  return next_sequence_++;
}

void FeatureCache::clear() { entries_.clear(); }

void FeatureCache::record_query(std::optional<double> best_similarity) {
  ++stats_.queries;
  if (!best_similarity) {
    ++stats_.misses;
    return;
  }
  ++stats_.hits;
  const double s = std::clamp(*best_similarity, -1.0, 1.0);
  const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>((s + 1.0) * 5.0));
  ++stats_.histogram[bin];
}

std::string FeatureCache::stats_text(const std::string& prefix) const {
  std::string text;
  auto line = [&](const std::string& key, const std::string& value) {
    text += prefix + "." + key + "=" + value + "\n";
  };
  line("capacity", std::to_string(capacity_));
  line("length", std::to_string(entries_.size()));
  line("queries", std::to_string(stats_.queries));
  line("hits", std::to_string(stats_.hits));
  line("misses", std::to_string(stats_.misses));
  line("evictions", std::to_string(stats_.evictions));
  std::string hist;
  for (std::size_t i = 0; i < stats_.histogram.size(); ++i) {
    if (i) hist += ',';
    hist += std::to_string(stats_.histogram[i]);
  }
  line("similarity_histogram", hist);
  return text;
}

CacheQuery query_cache(const Tensor& x_adapted, const FeatureCache& cache) {
  CacheQuery q;
  for (std::size_t i = 0; i < cache.size(); ++i) {
    const Tensor& entry = cache.at(i);
    if (entry.shape() != x_adapted.shape()) continue;
    const double s = cosine_similarity(x_adapted.data(), entry.data());
    if (!q.index || s >= q.similarity) {
      q.similarity = s;
      q.index = i;
      q.best = entry;
    }
  }
  return q;
}

double fusion_gamma(double similarity, double gamma_min) {
  return std::clamp(0.5 * (1.0 + similarity), gamma_min, 1.0);
}

FusionResult fuse(const Tensor& x_adapted, const std::optional<Tensor>& best, double similarity,
                  double gamma_min) {
  FusionResult r;
  if (!best) {
    r.output = x_adapted;
    return r;
  }
  if (best->shape() != x_adapted.shape()) {
    throw ShapeError("fuse: " + shape_str(x_adapted.shape()) + " vs cached " +
                     shape_str(best->shape()));
  }
  r.gamma = fusion_gamma(similarity, gamma_min);
  r.best_similarity = similarity;
  const auto xd = x_adapted.data();
  const auto bd = best->data();
  std::vector<double> out(xd.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::lerp(bd[j], xd[j], r.gamma);
  const double gamma = r.gamma;
  r.output = record_op("fuse_fixed", x_adapted.shape(), std::move(out), {x_adapted},
                       [x_adapted, gamma](std::span<const double> g, std::span<const double>) {
                         auto gx = grad_sink(x_adapted);
                         for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += gamma * g[j];
                       });
  return r;
}

namespace {

// Fuses consecutive equal chunks of x with their own (optional) constant
// partner, differentiating through γ(cos(x_chunk, best_chunk)).
Tensor fuse_chunks(const Tensor& x, std::vector<std::optional<Tensor>> bests, double gamma_min) {
  const std::size_t items = bests.size();
  const std::size_t len = x.numel() / items;
  const auto xd = x.data();
  std::vector<double> out(xd.begin(), xd.end());
  std::vector<double> gammas(items, 1.0), sims(items, 0.0);
  for (std::size_t i = 0; i < items; ++i) {
    if (!bests[i]) continue;
    if (bests[i]->numel() != len) throw ShapeError("fuse: cached entry size mismatch");
    const auto b = bests[i]->data();
    const auto xi = xd.subspan(i * len, len);
    sims[i] = cosine_similarity(xi, b);
    gammas[i] = fusion_gamma(sims[i], gamma_min);
    // lerp keeps the result inside [min, max] of its endpoints.
    for (std::size_t j = 0; j < len; ++j) out[i * len + j] = std::lerp(b[j], xi[j], gammas[i]);
  }
  return record_op(
      "fuse", x.shape(), std::move(out), {x},
      [x, bests = std::move(bests), gammas, sims, len, gamma_min](std::span<const double> g,
                                                                 std::span<const double>) {
        auto gx = grad_sink(x);
        if (gx.empty()) return;
        const auto xd = x.data();
        for (std::size_t i = 0; i < bests.size(); ++i) {
          const std::size_t o = i * len;
          if (!bests[i]) {
            for (std::size_t j = 0; j < len; ++j) gx[o + j] += g[o + j];
            continue;
          }
          const auto b = bests[i]->data();
          const double gamma = gammas[i];
          for (std::size_t j = 0; j < len; ++j) gx[o + j] += gamma * g[o + j];
          const double raw = 0.5 * (1.0 + sims[i]);
          if (!(raw > gamma_min && raw < 1.0)) continue;
          std::vector<double> gd(len), xx(len), bb(len);
          for (std::size_t j = 0; j < len; ++j) {
            gd[j] = g[o + j] * (xd[o + j] - b[j]);
            xx[j] = xd[o + j] * xd[o + j];
            bb[j] = b[j] * b[j];
          }
          const double nx = std::sqrt(pairwise_sum(xx)), nb = std::sqrt(pairwise_sum(bb));
          if (nx == 0.0 || nb == 0.0) continue;
          const double gs = 0.5 * pairwise_sum(gd);
          for (std::size_t j = 0; j < len; ++j) {
            gx[o + j] += gs * (b[j] / (nx * nb) - sims[i] * xd[o + j] / (nx * nx));
          }
        }
      });
}

}  // namespace

Tensor fuse_tracked(const Tensor& x_adapted, const std::optional<Tensor>& best, double gamma_min) {
  if (best && best->shape() != x_adapted.shape()) {
    throw ShapeError("fuse: " + shape_str(x_adapted.shape()) + " vs cached " +
                     shape_str(best->shape()));
  }
  std::vector<std::optional<Tensor>> bests{best ? std::optional<Tensor>(best->detach()) : std::nullopt};
  return fuse_chunks(x_adapted, std::move(bests), gamma_min);
}

Tensor qclam_forward(const Tensor& x, const LoRAAdapter& a, FeatureCache& cache, double gamma_min) {
  Tensor adapted = lora_forward(x, a);
  CacheQuery q = query_cache(adapted, cache);
  cache.record_query(q.index ? std::optional<double>(q.similarity) : std::nullopt);
  Tensor fused = fuse_tracked(adapted, q.best, gamma_min);
  cache.enqueue(fused);
  return fused;
}

Qclam Qclam::init(Rng& rng, const QclamConfig& cfg) {
  Qclam q;
  q.cfg = cfg;
  q.adapter = LoRAAdapter::init(rng, cfg.channels, cfg.rank);
  q.cache = FeatureCache(cfg.capacity);
  return q;
}

void Qclam::set_frozen(bool frozen) {
  frozen_ = frozen;
  if (!frozen) replay_.reset();
}

Tensor Qclam::forward(const Tensor& x) {
  if (x.dim() != 4 || x.size(1) != cfg.channels) {
    throw ShapeError("qclam expects B×" + std::to_string(cfg.channels) + "×H×W, got " +
                     shape_str(x.shape()));
  }
  const std::size_t B = x.size(0);
  const Shape item_shape{x.size(1), x.size(2), x.size(3)};
  // A resolution change invalidates everything cached so far.
  if (!cache.empty() && cache.at(0).shape() != item_shape) cache.clear();

  Tensor adapted = to_channels_first(lora_forward(to_channels_last(x), adapter));
  const std::size_t len = adapted.numel() / B;
  const auto ad = adapted.data();

  const bool replaying = frozen_ && replay_ && replay_->size() == B;
  std::vector<std::optional<Tensor>> bests(B);
  last_.assign(B, FusionResult{});
  for (std::size_t b = 0; b < B; ++b) {
    Tensor item(item_shape, std::vector<double>(ad.begin() + b * len, ad.begin() + (b + 1) * len));
    if (replaying) {
      bests[b] = (*replay_)[b];
    } else {
      CacheQuery q = query_cache(item, cache);
      if (!frozen_) cache.record_query(q.index ? std::optional<double>(q.similarity) : std::nullopt);
      bests[b] = q.best;
      last_[b].best_index = q.index;
    }
    FusionResult& r = last_[b];
    if (bests[b]) {
      r.best_similarity = cosine_similarity(item.data(), bests[b]->data());
      r.gamma = fusion_gamma(r.best_similarity, cfg.gamma_min);
      std::vector<double> fused(len);
      const auto bd = bests[b]->data();
      for (std::size_t j = 0; j < len; ++j) fused[j] = std::lerp(bd[j], item.at(j), r.gamma);
      r.output = Tensor(item_shape, std::move(fused));
    } else {
      r.output = item;
    }
    if (!frozen_) cache.enqueue(r.output);
  }
  if (frozen_ && !replaying) replay_ = bests;
  return fuse_chunks(adapted, std::move(bests), cfg.gamma_min);
}

void Qclam::collect(const std::string& prefix, ParamList& out) const {
  adapter.collect(prefix + ".lora", out);
}

}  // namespace vamamba
