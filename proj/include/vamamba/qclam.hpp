#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "vamamba/nn.hpp"

namespace vamamba {

/// Low-rank residual update x ↦ x + (x·W_down)·W_up on the channel axis.
struct LoRAAdapter {
  Tensor W_down;  // [C×r]
  Tensor W_up;    // [r×C]
  std::size_t rank = 1;

  /// W_down random, W_up zero: starts as the identity map.
  static LoRAAdapter init(Rng& rng, std::size_t channels, std::size_t rank);
  /// Both factors random (tests, structure checks).
  static LoRAAdapter random(Rng& rng, std::size_t channels, std::size_t rank, double amplitude = 1.0);
  std::size_t channels() const { return W_down.size(0); }
  /// Explicit ΔW = W_down·W_up [C×C], row-major. Diagnostics only.
  std::vector<double> delta_weight() const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// x [...×C] → x + (x·W_down)·W_up. ΔW is never formed.
Tensor lora_forward(const Tensor& x, const LoRAAdapter& a);

/// Flattened cosine similarity; 0 when either input has zero norm.
double cosine_similarity(const Tensor& a, const Tensor& b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct CacheEntry {
  Tensor value;           // detached
  std::uint64_t sequence;  // insertion counter, for FIFO audits
};

/// Bounded FIFO of detached feature tensors (oldest first).
class FeatureCache {
 public:
  explicit FeatureCache(std::size_t capacity = 5);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<CacheEntry>& entries() const { return entries_; }
  const Tensor& at(std::size_t i) const { return entries_.at(i).value; }

  /// Appends a detached copy, evicting the oldest entry when full. Returns
  /// the sequence number given to the new entry.
  std::uint64_t enqueue(const Tensor& feature);
  void clear();

  struct Stats {
    std::uint64_t queries = 0;
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::uint64_t evictions = 0;
    /// Best-match similarities in ten equal bins over [−1, 1].
    std::array<std::uint64_t, 10> histogram{};
  };
  const Stats& stats() const { return stats_; }
  void record_query(std::optional<double> best_similarity);
  /// "prefix.key=value" lines.
  std::string stats_text(const std::string& prefix) const;

 private:
  std::size_t capacity_;
  std::deque<CacheEntry> entries_;
  std::uint64_t next_sequence_ = 0;
  Stats stats_;
};

struct CacheQuery {
  std::optional<Tensor> best;
  double similarity = 0.0;
  std::optional<std::size_t> index;  // position in the queue, 0 = oldest
};

/// Most similar same-shaped entry; ties go to the newest.
CacheQuery query_cache(const Tensor& x_adapted, const FeatureCache& cache);

struct FusionResult {
  Tensor output;
  double gamma = 1.0;
  std::optional<std::size_t> best_index;
  double best_similarity = 0.0;
};

double fusion_gamma(double similarity, double gamma_min = 0.5);

/// γ·x + (1−γ)·best with γ = fusion_gamma(s) held fixed.
FusionResult fuse(const Tensor& x_adapted, const std::optional<Tensor>& best, double similarity,
                  double gamma_min = 0.5);

/// Same mixture, but s = cos(x, best) is computed inside the op so the
/// gradient also flows through γ. `best` is treated as a constant.
Tensor fuse_tracked(const Tensor& x_adapted, const std::optional<Tensor>& best,
                    double gamma_min = 0.5);

/// lora → query → fuse → enqueue(detached fused) → fused.
Tensor qclam_forward(const Tensor& x, const LoRAAdapter& a, FeatureCache& cache,
                     double gamma_min = 0.5);

struct QclamConfig {
  std::size_t channels = 16;
  std::size_t rank = 4;
  std::size_t capacity = 5;
  double gamma_min = 0.5;
};

/// Per-block QCLAM on B×C×H×W features. Each image of a batch is treated as
/// one cache item: queried, fused and enqueued in batch order.
class Qclam {
 public:
  static Qclam init(Rng& rng, const QclamConfig& cfg);

  Tensor forward(const Tensor& x);

  /// While frozen the cache is not updated and the first frozen forward's
  /// choice of cached entry per image is replayed.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }
  void reset_cache() { cache.clear(); replay_.reset(); }

  const std::vector<FusionResult>& last_fusions() const { return last_; }
  void collect(const std::string& prefix, ParamList& out) const;

  QclamConfig cfg;
  LoRAAdapter adapter;
  FeatureCache cache{5};

 private:
  bool frozen_ = false;
  std::optional<std::vector<std::optional<Tensor>>> replay_;
  std::vector<FusionResult> last_;
};

}  // namespace vamamba
