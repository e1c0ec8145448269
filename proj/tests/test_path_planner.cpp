#include <doctest.h>

#include <algorithm>
#include <set>

#include "vamamba/path_planner.hpp"
#include "vamamba/random.hpp"
#include "oracles.hpp"

using namespace vamamba;

namespace {

using Order = std::vector<std::size_t>;

std::vector<double> random_probs(std::size_t n, Rng& rng, bool ties) {
  std::vector<double> v(n);
  double total = 0;
  for (double& x : v) {
    x = ties ? double(rng.index(3)) + 1.0 : rng.uniform(0.01, 1.0);
    total += x;
  }
  for (double& x : v) x /= total;
  return v;
}

}  // namespace

TEST_CASE("neighbours") {
  CHECK(neighbors(0, 2) == Order{1, 2});
  CHECK(neighbors(4, 3) == Order{1, 3, 5, 7});
  CHECK(neighbors(0, 1).empty());
  CHECK(neighbors(8, 3) == Order{5, 7});
}

TEST_CASE("golden paths") {
  ScanPath u = plan_path(std::vector<double>(4, 0.25), 2);
  CHECK(u.forward == Order{0, 1, 3, 2});
  CHECK(u.backward == Order{2, 3, 1, 0});
  CHECK(plan_path(std::vector<double>{1.0}, 1).forward == Order{0});
  std::vector<double> dec(9);
  for (std::size_t k = 0; k < 9; ++k) dec[k] = double(9 - k) / 45.0;
  CHECK(plan_path(dec, 3).forward == Order{0, 1, 2, 5, 4, 3, 6, 7, 8});
}

TEST_CASE("dead ends jump to the best unvisited patch") {
  std::vector<double> p{8, 9, 4, 7, 6, 5, 1, 3, 2};
  ScanPath s = plan_path(p, 3);
  CHECK(s.forward == Order{1, 0, 3, 4, 5, 2, 7, 8, 6});
  CHECK(s.forward == oracle::greedy_walk(p, 3));
  CHECK(validate_path(s, p).empty());
}

TEST_CASE("random maps match the reference walk and validate") {
  Rng rng(11);
  for (std::size_t g = 1; g <= 8; ++g) {
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = random_probs(g * g, rng, trial % 2 == 0);
      ScanPath s = plan_path(p, g);
      CHECK(s.forward == oracle::greedy_walk(p, g));
      CHECK(validate_path(s, p).empty());
      std::set<std::size_t> uniq(s.forward.begin(), s.forward.end());
      CHECK(uniq.size() == g * g);
      Order rev(s.forward.rbegin(), s.forward.rend());
      CHECK(s.backward == rev);
    }
  }
}

TEST_CASE("validator flags each kind of violation") {
  std::vector<double> p(4, 0.25);
  ScanPath dup = ScanPath::from_forward({0, 1, 1, 2}, 2);
  auto v = validate_path(dup, p);
  REQUIRE_FALSE(v.empty());
  CHECK(std::any_of(v.begin(), v.end(), [](const PathViolation& x) { return x.kind == PathViolation::Kind::permutation; }));

  ScanPath greedy = ScanPath::from_forward({0, 2, 3, 1}, 2);
  auto g = validate_path(greedy, p);
  REQUIRE_FALSE(g.empty());
  CHECK(g.front().kind == PathViolation::Kind::greedy);
  CHECK(g.front().position == 1);

  ScanPath shortp = ScanPath::from_forward({0, 1, 3}, 2);
  CHECK(validate_path(shortp, p).front().kind == PathViolation::Kind::length);

  ScanPath bad_rev = plan_path(p, 2);
  std::swap(bad_rev.backward[0], bad_rev.backward[1]);
  auto r = validate_path(bad_rev, p);
  REQUIRE_FALSE(r.empty());
  CHECK(r.front().kind == PathViolation::Kind::reverse);

  std::vector<double> skew{0.1, 0.2, 0.3, 0.4};
  ScanPath wrong_start = ScanPath::from_forward({0, 1, 3, 2}, 2);
  CHECK(validate_path(wrong_start, skew).front().kind == PathViolation::Kind::start);
}

TEST_CASE("path is invariant to shifts and monotone transforms of the scores") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t g = 1 + rng.index(6);
    const auto p = random_probs(g * g, rng, trial % 3 == 0);
    const Order base = plan_path(p, g).forward;
    std::vector<double> shifted(p), cubed(p);
    for (double& x : shifted) x += 0.125;
    for (double& x : cubed) x = x * x * x + 2.0 * x;
    CHECK(plan_path(shifted, g).forward == base);
    CHECK(plan_path(cubed, g).forward == base);
  }
}

TEST_CASE("fixed orders") {
  CHECK(raster_order(2) == Order{0, 1, 2, 3});
  CHECK(snake_order(2) == Order{0, 1, 3, 2});
  CHECK(snake_order(3) == Order{0, 1, 2, 5, 4, 3, 6, 7, 8});
  CHECK(column_order(2) == Order{0, 2, 1, 3});
}

TEST_CASE("path text round trip and SVG determinism") {
  const Order o{3, 1, 0, 2};
  CHECK(path_to_text(o) == "3 1 0 2\n");
  CHECK(path_from_text(path_to_text(o)) == o);
  CHECK_THROWS(path_from_text("3 x 1\n"));
  std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  ScanPath s = plan_path(p, 2);
  const std::string a = path_to_svg(s, p), b = path_to_svg(s, p);
  CHECK(a == b);
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("polyline") != std::string::npos);
}

TEST_CASE("wrong score count is rejected") {
  CHECK_THROWS(plan_path(std::vector<double>(5, 0.2), 2));
}
