#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "vamamba/gradcheck.hpp"
#include "vamamba/qclam.hpp"

using namespace vamamba;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Eigen::VectorXd singular_values(const std::vector<double>& m, std::size_t C) {
  Eigen::MatrixXd M(C, C);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) M(i, j) = m[i * C + j];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues();
}

}  // namespace

TEST_CASE("lora with zero down-projection is the identity") {
  Rng rng(1);
  LoRAAdapter a = LoRAAdapter::random(rng, 6, 2);
  for (double& v : a.W_down.mutable_data()) v = 0.0;
  Tensor x({3, 6}, rng.uniform_vector(18, -1, 1));
  CHECK(vals(lora_forward(x, a)) == vals(x));
  LoRAAdapter fresh = LoRAAdapter::init(rng, 6, 2);
  CHECK(vals(lora_forward(x, fresh)) == vals(x));
}

TEST_CASE("rank-1 basis adapter adds the first channel back onto itself") {
  LoRAAdapter a;
  a.rank = 1;
  a.W_down = Tensor({3, 1}, std::vector<double>{1, 0, 0});
  a.W_up = Tensor({1, 3}, std::vector<double>{1, 0, 0});
  Tensor x({1, 3}, std::vector<double>{0.5, -2, 7});
  CHECK(vals(lora_forward(x, a)) == std::vector<double>{1.0, -2, 7});
}

TEST_CASE("factored application equals the explicit matrix") {
  Rng rng(2);
  for (std::size_t r : {1u, 2u, 4u}) {
    LoRAAdapter a = LoRAAdapter::random(rng, 8, r);
    Tensor x({5, 8}, rng.uniform_vector(40, -1, 1));
    const auto dw = a.delta_weight();
    const auto y = vals(lora_forward(x, a));
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t j = 0; j < 8; ++j) {
        double acc = x.at(n * 8 + j);
        for (std::size_t i = 0; i < 8; ++i) acc += x.at(n * 8 + i) * dw[i * 8 + j];
        CHECK(std::abs(y[n * 8 + j] - acc) < 1e-12);
      }
  }
}

TEST_CASE("delta weight has rank at most r") {
  Rng rng(3);
  for (std::size_t C : {8u, 16u})
    for (std::size_t r : {1u, 2u, 4u}) {
      LoRAAdapter a = LoRAAdapter::random(rng, C, r);
      const auto sv = singular_values(a.delta_weight(), C);
      CHECK(sv(r - 1) > 1e-6);
      for (Eigen::Index i = static_cast<Eigen::Index>(r); i < sv.size(); ++i) CHECK(sv(i) < 1e-9);
    }
}

TEST_CASE("full-rank factors represent any linear perturbation") {
  Rng rng(4);
  const std::size_t C = 4;
  const auto target = rng.uniform_vector(C * C, -1, 1);
  LoRAAdapter a;
  a.rank = C;
  a.W_down = Tensor({C, C}, target);
  std::vector<double> eye(C * C, 0.0);
  for (std::size_t i = 0; i < C; ++i) eye[i * C + i] = 1.0;
  a.W_up = Tensor({C, C}, eye);
  Tensor basis({C, C}, eye);
  const auto y = vals(lora_forward(basis, a));
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) CHECK(y[i * C + j] == eye[i * C + j] + target[i * C + j]);
}

TEST_CASE("lora rejects a channel mismatch and an invalid rank") {
  Rng rng(5);
  LoRAAdapter a = LoRAAdapter::random(rng, 4, 2);
  CHECK_THROWS_AS(lora_forward(Tensor({2, 5}), a), ShapeError);
  CHECK_THROWS_AS(LoRAAdapter::init(rng, 4, 4), ConfigError);
  CHECK_THROWS_AS(LoRAAdapter::init(rng, 4, 0), ConfigError);
}

TEST_CASE("cosine similarity examples") {
  Tensor a({2}, std::vector<double>{3, 4});
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(Tensor({2}, std::vector<double>{1, 0}), Tensor({2}, std::vector<double>{0, 1})) == 0.0);
  CHECK(cosine_similarity(a, Tensor({2}, std::vector<double>{-3, -4})) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine_similarity(a, Tensor({2}, 0.0)) == 0.0);
  CHECK_THROWS_AS(cosine_similarity(a, Tensor({3}, 1.0)), ShapeError);
}

TEST_CASE("cache query: empty, exact match, newest wins ties, shape mismatch skipped") {
  Rng rng(6);
  FeatureCache cache(5);
  Tensor x({2, 2}, rng.uniform_vector(4, -1, 1));
  CacheQuery empty = query_cache(x, cache);
  CHECK_FALSE(empty.best.has_value());
  CHECK(empty.similarity == 0.0);
  CHECK_FALSE(empty.index.has_value());

  Tensor a({2, 2}, rng.uniform_vector(4, -1, 1));
  cache.enqueue(a);
  cache.enqueue(x);
  CacheQuery q = query_cache(x, cache);
  REQUIRE(q.index.has_value());
  CHECK(*q.index == 1);
  CHECK(q.similarity == doctest::Approx(1.0).epsilon(1e-15));

  FeatureCache twins(5);
  twins.enqueue(a);
  twins.enqueue(a);
  CHECK(*query_cache(x, twins).index == 1);

  FeatureCache other(5);
  other.enqueue(Tensor({3}, 1.0));
  CHECK_FALSE(query_cache(x, other).index.has_value());
}

TEST_CASE("fuse examples") {
  Rng rng(7);
  Tensor x({4}, rng.uniform_vector(4, -1, 1)), b({4}, rng.uniform_vector(4, -1, 1));
  FusionResult none = fuse(x, std::nullopt, 0.0);
  CHECK(none.gamma == 1.0);
  CHECK(vals(none.output) == vals(x));
  FusionResult one = fuse(x, b, 1.0);
  CHECK(one.gamma == 1.0);
  CHECK(vals(one.output) == vals(x));
  FusionResult half = fuse(x, b, 0.0);
  CHECK(half.gamma == 0.5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(half.output.at(i) - (x.at(i) + b.at(i)) / 2) < 1e-15);
  CHECK(fusion_gamma(-1.0) == 0.5);
  CHECK(fusion_gamma(0.5) == 0.75);
  CHECK(fusion_gamma(-1.0, 0.0) == 0.0);
  CHECK_THROWS_AS(fuse(x, Tensor({3}, 1.0), 0.2), ShapeError);
}

TEST_CASE("fusion output is a convex combination elementwise") {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    Tensor x({6}, rng.uniform_vector(6, -3, 3)), b({6}, rng.uniform_vector(6, -3, 3));
    const double gmin = rng.uniform(0, 1);
    Tensor y = fuse_tracked(x, b, gmin);
    FusionResult f = fuse(x, b, rng.uniform(-1, 1), gmin);
    for (std::size_t i = 0; i < 6; ++i) {
      const double lo = std::min(x.at(i), b.at(i)), hi = std::max(x.at(i), b.at(i));
      CHECK(y.at(i) >= lo);
      CHECK(y.at(i) <= hi);
      CHECK(f.output.at(i) >= lo);
      CHECK(f.output.at(i) <= hi);
    }
  }
}

TEST_CASE("fusion gradients, including the similarity-dependent weight") {
  Rng rng(9);
  Tensor x = Tensor::parameter({5}, rng.uniform_vector(5, -1, 1));
  // Partner chosen so that γ sits strictly inside (γ_min, 1).
  std::vector<double> bv(x.data().begin(), x.data().end());
  for (double& v : bv) v += rng.uniform(-0.6, 0.6);
  Tensor b({5}, bv);
  const double s = cosine_similarity(x, b);
  REQUIRE(fusion_gamma(s) > 0.5);
  REQUIRE(fusion_gamma(s) < 1.0);
  Tensor w({5}, rng.uniform_vector(5, -1, 1));
  CHECK(finite_diff_check([&] { return sum(mul(fuse_tracked(x, b), w)); }, {x}, 1e-6) < 1e-6);

  // A clamped γ contributes no similarity term.
  Tensor far({5}, 0.0);
  for (std::size_t i = 0; i < 5; ++i) far.mutable_data()[i] = -x.at(i);
  CHECK(finite_diff_check([&] { return sum(mul(fuse_tracked(x, far), w)); }, {x}, 1e-6) < 1e-6);
}

TEST_CASE("qclam_forward: cold start, identical repeat, capacity and order") {
  Rng rng(10);
  LoRAAdapter a = LoRAAdapter::random(rng, 4, 2, 0.3);
  FeatureCache cache(5);
  Tensor x({3, 4}, rng.uniform_vector(12, -1, 1));
  Tensor first = qclam_forward(x, a, cache);
  CHECK(vals(first) == vals(lora_forward(x, a)));
  CHECK(cache.size() == 1);
  Tensor second = qclam_forward(x, a, cache);
  CHECK(vals(second) == vals(first));

  FeatureCache seven(5);
  std::vector<std::vector<double>> outputs;
  for (int i = 0; i < 7; ++i) {
    Tensor xi({3, 4}, rng.uniform_vector(12, -1, 1));
    outputs.push_back(vals(qclam_forward(xi, a, seven)));
    CHECK(seven.size() <= 5);
  }
  REQUIRE(seven.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(vals(seven.at(i)) == outputs[2 + i]);
  CHECK(seven.stats().queries == 7);
  CHECK(seven.stats().misses == 1);
  CHECK(seven.stats().evictions == 2);
}

TEST_CASE("cached entries are detached and untouched by backward") {
  Rng rng(11);
  LoRAAdapter a = LoRAAdapter::random(rng, 4, 2, 0.3);
  FeatureCache cache(3);
  Tensor x = Tensor::parameter({2, 4}, rng.uniform_vector(8, -1, 1));
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(square(qclam_forward(x, a, cache))));
  }
  for (const auto& e : cache.entries()) {
    CHECK_FALSE(e.value.requires_grad());
    CHECK_FALSE(e.value.has_grad());
    CHECK_FALSE(e.value.same_storage(x));
  }
  CHECK(x.has_grad());
}

TEST_CASE("FIFO eviction follows insertion order under random traffic") {
  Rng rng(12);
  for (std::size_t cap : {1u, 2u, 5u, 9u}) {
    FeatureCache cache(cap);
    std::uint64_t expected_next = 0;
    for (int step = 0; step < 2000; ++step) {
      if (rng.index(50) == 0) {
        cache.clear();
        CHECK(cache.empty());
      }
      const std::uint64_t seq = cache.enqueue(Tensor({1}, double(step)));
      CHECK(seq == expected_next++);
      CHECK(cache.size() <= cap);
      const auto& e = cache.entries();
      for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i].sequence == e[i - 1].sequence + 1);
      CHECK(e.back().sequence == seq);
    }
  }
}

TEST_CASE("Qclam module: per-image caching, resolution change, frozen replay") {
  Rng rng(13);
  QclamConfig cfg;
  cfg.channels = 4;
  cfg.rank = 2;
  cfg.capacity = 3;
  Qclam q = Qclam::init(rng, cfg);
  for (double& v : q.adapter.W_up.mutable_data()) v = rng.uniform(-0.3, 0.3);
  Tensor x({2, 4, 2, 2}, rng.uniform_vector(32, -1, 1));
  q.forward(x);
  CHECK(q.cache.size() == 2);
  CHECK(q.cache.at(0).shape() == Shape{4, 2, 2});
  q.forward(x);
  CHECK(q.cache.size() == 3);
  q.forward(Tensor({1, 4, 4, 4}, 0.5));
  CHECK(q.cache.size() == 1);
  CHECK(q.cache.at(0).shape() == Shape{4, 4, 4});

  q.reset_cache();
  q.forward(Tensor({1, 4, 2, 2}, rng.uniform_vector(16, -1, 1)));
  Tensor probe({1, 4, 2, 2}, rng.uniform_vector(16, -1, 1));
  q.set_frozen(true);
  const std::size_t before = q.cache.size();
  const auto y1 = vals(q.forward(probe));
  q.forward(Tensor({1, 4, 2, 2}, rng.uniform_vector(16, -1, 1)));
  const auto y2 = vals(q.forward(probe));
  CHECK(y1 == y2);
  CHECK(q.cache.size() == before);
  q.set_frozen(false);

  Tensor big({3, 4, 2, 2}, 0.0);
  CHECK_THROWS_AS(q.forward(Tensor({1, 3, 2, 2})), ShapeError);
  q.forward(big);
  CHECK(q.cache.size() == 3);
}

TEST_CASE("Qclam module gradients with a frozen cache choice") {
  Rng rng(14);
  QclamConfig cfg;
  cfg.channels = 3;
  cfg.rank = 1;
  Qclam q = Qclam::init(rng, cfg);
  for (double& v : q.adapter.W_up.mutable_data()) v = rng.uniform(-0.5, 0.5);
  q.forward(Tensor({2, 3, 2, 2}, rng.uniform_vector(24, -1, 1)));
  Tensor x = Tensor::parameter({2, 3, 2, 2}, rng.uniform_vector(24, -1, 1));
  q.set_frozen(true);
  q.forward(x);
  q.adapter.W_down.set_requires_grad(true);
  q.adapter.W_up.set_requires_grad(true);
  Tensor w({2, 3, 2, 2}, rng.uniform_vector(24, -1, 1));
  CHECK(finite_diff_check([&] { return sum(mul(q.forward(x), w)); }, {x, q.adapter.W_down, q.adapter.W_up},
                          1e-5) < 1e-6);
}

TEST_CASE("cache statistics text") {
  FeatureCache cache(2);
  cache.record_query(std::nullopt);
  cache.record_query(0.95);
  cache.record_query(-1.0);
  const std::string t = cache.stats_text("block0.cache");
  CHECK(t.find("block0.cache.queries=3") != std::string::npos);
  CHECK(t.find("block0.cache.hits=2") != std::string::npos);
  CHECK(t.find("block0.cache.misses=1") != std::string::npos);
  CHECK(cache.stats().histogram[9] == 1);
  CHECK(cache.stats().histogram[0] == 1);
}
