#include <doctest.h>

#include <cmath>
#include <limits>

#include "vamamba/gradcheck.hpp"
#include "vamamba/ops.hpp"
#include "vamamba/parallel.hpp"
#include "vamamba/random.hpp"

using namespace vamamba;

namespace {

Tensor leaf(Shape s, Rng& rng) {
  const std::size_t n = shape_numel(s);
  return Tensor::parameter(std::move(s), rng.uniform_vector(n, -1.0, 1.0));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("tensor construction and shape bookkeeping") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.dim() == 2);
  CHECK(t.size(1) == 3);
  CHECK(shape_numel(t.shape()) == t.data().size());
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS(Tensor({2}, 0.0).item());
}

TEST_CASE("copies share storage, clone does not") {
  Tensor a({2}, std::vector<double>{1, 2});
  Tensor b = a;
  Tensor c = a.clone();
  a.mutable_data()[0] = 9;
  CHECK(b.at(0) == 9);
  CHECK(c.at(0) == 1);
  CHECK(a.same_storage(b));
  CHECK_FALSE(a.same_storage(c));
}

TEST_CASE("elementwise examples") {
  Tensor a({2}, std::vector<double>{1, 2}), b({2}, std::vector<double>{3, 4});
  CHECK(values(add(a, b)) == std::vector<double>{4, 6});
  Rng rng(1);
  Tensor x = leaf({3, 4}, rng);
  CHECK(values(mul(x, ones_like(x))) == values(x));
  Tensor c({3}, std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(add(c, a), ShapeError);
  try {
    add(c, a);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[2]") != std::string::npos);
  }
}

TEST_CASE("broadcasting follows the trailing-dimension rule") {
  CHECK(broadcast_shape({4, 1, 3}, {5, 1}) == Shape{4, 5, 3});
  CHECK(broadcast_shape({3}, {2, 3}) == Shape{2, 3});
  CHECK_THROWS_AS(broadcast_shape({2, 3}, {3, 2}), ShapeError);
  Tensor a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor row({3}, std::vector<double>{10, 20, 30});
  Tensor col({2, 1}, std::vector<double>{100, 200});
  CHECK(values(add(a, row)) == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK(values(add(a, col)) == std::vector<double>{101, 102, 103, 204, 205, 206});
}

TEST_CASE("broadcast addition is associative on integer data") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto ints = [&](Shape s) {
      std::vector<double> v(shape_numel(s));
      for (double& x : v) x = static_cast<double>(static_cast<int>(rng.index(2001)) - 1000);
      return Tensor(std::move(s), std::move(v));
    };
    Tensor a = ints({2, 1, 4}), b = ints({3, 1}), c = ints({4});
    CHECK(values(add(add(a, b), c)) == values(add(a, add(b, c))));
  }
}

TEST_CASE("matmul examples and gradient") {
  Tensor m({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor ones({2, 1}, std::vector<double>{1, 1});
  CHECK(values(matmul(m, ones)) == std::vector<double>{3, 7});
  Rng rng(3);
  Tensor M = leaf({3, 3}, rng);
  Tensor I({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(values(matmul(I, M)) == values(M));
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);

  Tensor A = leaf({4, 3}, rng), B = leaf({3, 5}, rng);
  CHECK(finite_diff_check([&] { return sum(matmul(A, B)); }, {A, B}, 1e-5) < 1e-6);
}

TEST_CASE("matmul matches a naive triple loop") {
  Rng rng(4);
  Tensor A = leaf({7, 5}, rng), B = leaf({5, 6}, rng);
  Tensor C = matmul(A, B);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 5; ++k) acc += A.at(i * 5 + k) * B.at(k * 6 + j);
      CHECK(C.at(i * 6 + j) == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::parameter({3}, {1, 2, 3});
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor root = sum(mul(x, x));
    tape.backward(root);
  }
  CHECK(values(Tensor({3}, std::vector<double>(x.grad().begin(), x.grad().end()))) ==
        std::vector<double>{2, 4, 6});

  // Repeated backward accumulates.
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(mul(x, x)));
  }
  CHECK(x.grad()[2] == 12.0);
  x.zero_grad();

  // Constant root leaves gradients untouched.
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(Tensor::scalar(3.0));
  }
  CHECK(x.grad()[0] == 0.0);

  Tape tape;
  TapeScope scope(tape);
  CHECK_THROWS_AS(tape.backward(mul(x, x)), ShapeError);
}

TEST_CASE("tape records nodes in topological order and skips constants") {
  Tape tape;
  TapeScope scope(tape);
  Tensor c({2}, 1.0);
  Tensor d = add(c, c);
  CHECK(tape.size() == 0);
  CHECK_FALSE(d.requires_grad());
  Tensor p = Tensor::parameter({2}, {1, 2});
  Tensor e = mul(add(p, c), p);
  CHECK(tape.size() == 2);
  CHECK(tape.nodes()[0].output == tape.nodes()[1].inputs[0]);
  {
    NoGradScope no_grad;
    Tensor f = mul(p, p);
    CHECK_FALSE(f.requires_grad());
  }
  CHECK(tape.size() == 2);
}

TEST_CASE("gradient linearity over independent subgraphs") {
  Rng rng(5);
  Tensor x = leaf({4}, rng), y = leaf({4}, rng);
  auto f = [&] { return sum(mul(exp(x), y)); };
  auto g = [&] { return sum(silu(mul(x, x))); };
  auto grad_of = [&](const std::function<Tensor()>& h) {
    x.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    tape.backward(h());
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const auto gf = grad_of(f), gg = grad_of(g);
  const auto gsum = grad_of([&] { return add(f(), g()); });
  for (std::size_t i = 0; i < 4; ++i) CHECK(gsum[i] == doctest::Approx(gf[i] + gg[i]).epsilon(1e-14));
}

TEST_CASE("non-finite values are hard errors") {
  Tensor big({1}, std::vector<double>{1000.0});
  CHECK_THROWS_AS(exp(big), NumericError);
  Tensor zero({1}, 0.0), one({1}, 1.0);
  CHECK_THROWS_AS(div(one, zero), NumericError);
  CHECK_THROWS_AS(exp(Tensor({1}, std::vector<double>{std::nan("")})), NumericError);
}

TEST_CASE("every elementwise op passes the finite-difference check") {
  Rng rng(6);
  Tensor a = leaf({3, 4}, rng), b = leaf({4}, rng);
  Tensor pos = Tensor::parameter({3, 4}, rng.uniform_vector(12, 0.5, 2.0));
  for (UnaryOp op : {UnaryOp::neg, UnaryOp::exp, UnaryOp::sigmoid, UnaryOp::silu, UnaryOp::softplus,
                     UnaryOp::abs, UnaryOp::square}) {
    CHECK(finite_diff_check([&] { return sum(mul(elementwise(op, a), a)); }, {a}, 1e-5) < 1e-6);
  }
  for (BinaryOp op : {BinaryOp::add, BinaryOp::sub, BinaryOp::mul}) {
    CHECK(finite_diff_check([&] { return sum(square(elementwise(op, a, b))); }, {a, b}, 1e-5) < 1e-6);
  }
  CHECK(finite_diff_check([&] { return sum(div(a, pos)); }, {a, pos}, 1e-5) < 1e-6);
}

TEST_CASE("layout ops: reshape, permute, gather, slice and their gradients") {
  Rng rng(7);
  Tensor x = leaf({2, 3, 4}, rng);
  Tensor p = permute(x, {2, 0, 1});
  CHECK(p.shape() == Shape{4, 2, 3});
  CHECK(p.at(1 * 6 + 1 * 3 + 2) == x.at(1 * 12 + 2 * 4 + 1));
  Tensor w = leaf({4, 2, 3}, rng);
  CHECK(finite_diff_check([&] { return sum(mul(permute(x, {2, 0, 1}), w)); }, {x}, 1e-5) < 1e-8);
  Tensor s = slice0(x, 1, 2);
  CHECK(s.shape() == Shape{1, 3, 4});
  CHECK(s.at(0) == x.at(12));
  CHECK(finite_diff_check([&] { return sum(square(slice0(x, 0, 1))); }, {x}, 1e-5) < 1e-8);
  Tensor g = gather(x, {0, 0, 5}, {3});
  CHECK(g.at(1) == x.at(0));
  CHECK(finite_diff_check([&] { return sum(square(gather(x, {0, 0, 5}, {3}))); }, {x}, 1e-5) < 1e-8);
  CHECK(finite_diff_check([&] { return sum(square(reshape(x, {6, 4}))); }, {x}, 1e-5) < 1e-8);
}

TEST_CASE("bmm matches per-batch matmul and differentiates") {
  Rng rng(8);
  Tensor a = leaf({2, 3, 4}, rng), b = leaf({2, 4, 5}, rng), bt = leaf({2, 5, 4}, rng);
  Tensor c = bmm(a, b);
  for (std::size_t n = 0; n < 2; ++n) {
    Tensor ref = matmul(reshape(slice0(a, n, n + 1), {3, 4}), reshape(slice0(b, n, n + 1), {4, 5}));
    for (std::size_t i = 0; i < 15; ++i) CHECK(c.at(n * 15 + i) == doctest::Approx(ref.at(i)).epsilon(1e-14));
  }
  CHECK(finite_diff_check([&] { return sum(square(bmm(a, b))); }, {a, b}, 1e-5) < 1e-6);
  CHECK(finite_diff_check([&] { return sum(square(bmm(a, bt, true))); }, {a, bt}, 1e-5) < 1e-6);
}

TEST_CASE("softmax examples and properties") {
  Tensor eq({4}, 0.3);
  const Tensor sm = softmax(eq);
  for (double v : sm.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  Tensor big({2}, std::vector<double>{1000, 0});
  Tensor sb = softmax(big);
  CHECK(sb.at(0) == doctest::Approx(1.0));
  CHECK(sb.at(1) < 1e-300);
  Rng rng(9);
  Tensor r = leaf({8}, rng);
  Tensor sr = softmax(r);
  CHECK(std::abs(pairwise_sum(sr.data()) - 1.0) < 1e-12);
  Tensor shifted = add(r, Tensor({1}, std::vector<double>{123.0}));
  Tensor ss = softmax(shifted);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(ss.at(i) - sr.at(i)) < 1e-12);
  Tensor w = leaf({8}, rng);
  CHECK(finite_diff_check([&] { return sum(mul(softmax(r), w)); }, {r}, 1e-5) < 1e-8);
}

TEST_CASE("pairwise summation is exact on small integers and stable on long runs") {
  std::vector<double> ints(1000);
  for (std::size_t i = 0; i < ints.size(); ++i) ints[i] = static_cast<double>(i);
  CHECK(pairwise_sum(ints) == 499500.0);
  std::vector<double> tenths(1 << 20, 0.1);
  CHECK(std::abs(pairwise_sum(tenths) - 0.1 * (1 << 20)) < 1e-7);
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("finite_diff_check examples") {
  Rng rng(10);
  Tensor x = leaf({5}, rng);
  CHECK(finite_diff_check([&] { return sum(square(x)); }, {x}, 1e-5) < 1e-8);
  CHECK_THROWS_AS(finite_diff_check([&] { return sum(square(x)); }, {x}, 0.0), NumericError);
  CHECK_THROWS_AS(finite_diff_check([&] { return sum(square(x)); }, {x}, -1.0), NumericError);
  Tensor y = Tensor::parameter({1}, {0.0});
  CHECK_THROWS_AS(finite_diff_check([&] { return sum(div(ones_like(y), y)); }, {y}, 1e-5),
                  NumericError);
  GradcheckOptions o;
  o.max_coords_per_tensor = 2;
  auto r = finite_diff_check([&] { return sum(square(x)); }, {x}, o, {"x"});
  CHECK(r.coords_checked == 2);
  CHECK(r.worst.rfind("x[", 0) == 0);
}

TEST_CASE("parallel kernels give identical results for any thread count") {
  Rng rng(11);
  Tensor A({33, 17}, rng.uniform_vector(33 * 17, -1, 1)), B({17, 29}, rng.uniform_vector(17 * 29, -1, 1));
  const std::size_t saved = kernel_threads();
  set_kernel_threads(1);
  const auto one = values(matmul(A, B));
  set_kernel_threads(4);
  const auto four = values(matmul(A, B));
  set_kernel_threads(saved);
  CHECK(one == four);

  std::vector<int> hits(100, 0);
  set_kernel_threads(3);
  parallel_for(100, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) ++hits[i];
  });
  set_kernel_threads(saved);
  for (int h : hits) CHECK(h == 1);
}
