#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "vamamba/dft.hpp"
#include "vamamba/gradcheck.hpp"
#include "vamamba/nn.hpp"
#include "oracles.hpp"

using namespace vamamba;

namespace {

Tensor rand_leaf(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(s);
  return Tensor::parameter(std::move(s), rng.uniform_vector(n, lo, hi));
}

// Direct zero-padded convolution.
std::vector<double> naive_conv(const Tensor& x, const ConvParams& p) {
  const std::size_t B = x.size(0), Ci = x.size(1), H = x.size(2), W = x.size(3);
  const std::size_t Co = p.out_channels(), k = p.kernel;
  const long pad = static_cast<long>((k - 1) / 2);
  std::vector<double> out(B * Co * H * W, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t co = 0; co < Co; ++co)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          double acc = p.bias.at(co);
          for (std::size_t ci = 0; ci < Ci; ++ci) {
            if (p.depthwise && ci != co) continue;
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long sy = static_cast<long>(y + ky) - pad, sx = static_cast<long>(xx + kx) - pad;
                if (sy < 0 || sx < 0 || sy >= static_cast<long>(H) || sx >= static_cast<long>(W)) continue;
                const std::size_t wi = p.depthwise ? (co * k + ky) * k + kx : ((co * Ci + ci) * k + ky) * k + kx;
                acc += p.weight.at(wi) * x.at(((b * Ci + ci) * H + sy) * W + sx);
              }
          }
          out[((b * Co + co) * H + y) * W + xx] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("conv2d: delta kernel, constant input, naive oracle") {
  Rng rng(1);
  Tensor x({1, 1, 5, 5}, rng.uniform_vector(25, -1, 1));
  ConvParams delta = ConvParams::zeros(1, 1);
  delta.weight.mutable_data()[4] = 1.0;
  Tensor y = conv2d(x, delta);
  for (std::size_t i = 0; i < 25; ++i) CHECK(y.at(i) == x.at(i));

  ConvParams ones = ConvParams::zeros(1, 1);
  for (double& w : ones.weight.mutable_data()) w = 1.0;
  Tensor c({1, 1, 4, 4}, 0.7);
  Tensor yc = conv2d(c, ones);
  CHECK(yc.at(1 * 4 + 1) == doctest::Approx(9 * 0.7).epsilon(1e-15));
  CHECK(yc.at(0) == doctest::Approx(4 * 0.7).epsilon(1e-15));

  ConvParams rnd = ConvParams::init(rng, 1, 1);
  const auto ref = naive_conv(x, rnd);
  Tensor yr = conv2d(x, rnd);
  for (std::size_t i = 0; i < 25; ++i) CHECK(yr.at(i) == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("conv2d multi-channel and depthwise match the oracle and differentiate") {
  Rng rng(2);
  Tensor x = rand_leaf({2, 3, 5, 4}, rng);
  ConvParams full = ConvParams::init(rng, 3, 2);
  full.weight.set_requires_grad(true);
  full.bias.set_requires_grad(true);
  const auto ref = naive_conv(x, full);
  Tensor y = conv2d(x, full);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.at(i) == doctest::Approx(ref[i]).epsilon(1e-13));
  CHECK(finite_diff_check([&] { return sum(square(conv2d(x, full))); }, {x, full.weight, full.bias}, 1e-5) <
        1e-6);

  ConvParams dw = ConvParams::init_depthwise(rng, 3);
  dw.weight.set_requires_grad(true);
  const auto ref_dw = naive_conv(x, dw);
  Tensor ydw = conv2d(x, dw);
  for (std::size_t i = 0; i < ref_dw.size(); ++i) CHECK(ydw.at(i) == doctest::Approx(ref_dw[i]).epsilon(1e-13));
  CHECK(finite_diff_check([&] { return sum(square(conv2d(x, dw))); }, {x, dw.weight}, 1e-5) < 1e-6);
  CHECK_THROWS_AS(conv2d(Tensor({1, 2, 4, 4}), full), ShapeError);
}

TEST_CASE("layernorm examples") {
  LayerNormParams p = LayerNormParams::init(3, 1e-12);
  Tensor x({1, 3}, std::vector<double>{1, 2, 3});
  Tensor y = layernorm(x, p);
  const double m = (y.at(0) + y.at(1) + y.at(2)) / 3;
  const double v = (y.at(0) * y.at(0) + y.at(1) * y.at(1) + y.at(2) * y.at(2)) / 3 - m * m;
  CHECK(std::abs(m) < 1e-9);
  CHECK(std::abs(v - 1.0) < 1e-9);

  LayerNormParams q = LayerNormParams::init(4);
  Tensor c({2, 4}, 3.25);
  const Tensor ln = layernorm(c, q);
  for (double o : ln.data()) CHECK(o == 0.0);

  Rng rng(3);
  Tensor r = rand_leaf({3, 5}, rng);
  LayerNormParams g = LayerNormParams::init(5);
  g.gamma = Tensor::parameter({5}, rng.uniform_vector(5, 0.5, 1.5));
  g.beta = Tensor::parameter({5}, rng.uniform_vector(5, -0.5, 0.5));
  Tensor w({3, 5}, rng.uniform_vector(15, -1, 1));
  CHECK(finite_diff_check([&] { return sum(mul(layernorm(r, g), w)); }, {r, g.gamma, g.beta}, 1e-5) < 1e-6);
}

TEST_CASE("layernorm over channels equals per-pixel normalization") {
  Rng rng(4);
  Tensor x({2, 3, 2, 2}, rng.uniform_vector(24, -2, 2));
  LayerNormParams p = LayerNormParams::init(3);
  Tensor y = layernorm_channels(x, p);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t s = 0; s < 4; ++s) {
      double mu = 0, var = 0;
      for (std::size_t c = 0; c < 3; ++c) mu += x.at((b * 3 + c) * 4 + s) / 3;
      for (std::size_t c = 0; c < 3; ++c) var += std::pow(x.at((b * 3 + c) * 4 + s) - mu, 2) / 3;
      for (std::size_t c = 0; c < 3; ++c) {
        const double ref = (x.at((b * 3 + c) * 4 + s) - mu) / std::sqrt(var + p.epsilon);
        CHECK(y.at((b * 3 + c) * 4 + s) == doctest::Approx(ref).epsilon(1e-12));
      }
    }
  Tensor back = to_channels_first(to_channels_last(x));
  for (std::size_t i = 0; i < 24; ++i) CHECK(back.at(i) == x.at(i));
}

TEST_CASE("silu examples and smoothness") {
  Tensor x({3}, std::vector<double>{0, 10, -10});
  Tensor y = silu(x);
  CHECK(y.at(0) == 0.0);
  CHECK(y.at(1) == doctest::Approx(10.0).epsilon(1e-4));
  CHECK(std::abs(y.at(2)) < 1e-3);
  Rng rng(5);
  Tensor r = rand_leaf({20}, rng, -6, 6);
  CHECK(finite_diff_check([&] { return sum(silu(r)); }, {r}, 1e-5) < 1e-8);
}

TEST_CASE("mlp with zero weights is zero and differentiates") {
  Rng rng(6);
  MlpParams p = MlpParams::init(rng, 4, 2.0);
  CHECK(p.fc1.out_features() == 8);
  MlpParams z = p;
  z.fc1 = Linear::zeros(4, 8);
  z.fc2 = Linear::zeros(8, 4);
  Tensor x({3, 4}, rng.uniform_vector(12, -1, 1));
  const Tensor m = mlp(x, z);
  for (double v : m.data()) CHECK(v == 0.0);

  Tensor xl = rand_leaf({3, 4}, rng);
  ParamList params;
  p.collect("mlp", params);
  std::vector<Tensor> leaves{xl};
  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    leaves.push_back(t);
  }
  CHECK(finite_diff_check([&] { return sum(square(mlp(xl, p))); }, leaves, 1e-5) < 1e-6);
}

TEST_CASE("attention: single token, row sums, permutation equivariance") {
  Rng rng(7);
  AttentionParams p = AttentionParams::init(rng, 8, 2);

  // One token: softmax over one key is 1, so the output is proj(v).
  Tensor one({1, 1, 8}, rng.uniform_vector(8, -1, 1));
  Tensor qkv = linear(one, p.qkv);
  Tensor v({1, 1, 8}, std::vector<double>(qkv.data().begin() + 16, qkv.data().end()));
  Tensor expect = linear(v, p.proj);
  Tensor got = mhsa(one, p);
  for (std::size_t i = 0; i < 8; ++i) CHECK(got.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-13));

  const std::size_t T = 5;
  Tensor x({2, T, 8}, rng.uniform_vector(2 * T * 8, -1, 1));
  Tensor attn;
  Tensor y = mhsa(x, p, &attn);
  CHECK(attn.shape() == Shape{4, T, T});
  for (std::size_t r = 0; r < 4 * T; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < T; ++c) s += attn.at(r * T + c);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }

  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t : perm)
      for (std::size_t d = 0; d < 8; ++d) idx.push_back((b * T + t) * 8 + d);
  Tensor yp = mhsa(gather(x, idx, {2, T, 8}), p);
  Tensor py = gather(y, idx, {2, T, 8});
  for (std::size_t i = 0; i < yp.numel(); ++i) CHECK(std::abs(yp.at(i) - py.at(i)) < 1e-12);

  Tensor xl = rand_leaf({1, 3, 8}, rng);
  CHECK(finite_diff_check([&] { return sum(square(mhsa(xl, p))); }, {xl}, 1e-5) < 1e-6);
}

TEST_CASE("linear matches the definition") {
  Rng rng(8);
  Linear l = Linear::init(rng, 3, 2);
  Tensor x({4, 3}, rng.uniform_vector(12, -1, 1));
  Tensor y = linear(x, l);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = l.bias.at(o);
      for (std::size_t i = 0; i < 3; ++i) acc += x.at(r * 3 + i) * l.weight.at(i * 2 + o);
      CHECK(y.at(r * 2 + o) == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("dft2d: constant plane, naive oracle, linearity, Parseval") {
  Tensor c({1, 1, 4, 4}, 0.3);
  Tensor fc = dft2d(c);
  CHECK(fc.shape() == Shape{1, 1, 4, 4, 2});
  CHECK(fc.at(0) == doctest::Approx(16 * 0.3).epsilon(1e-15));
  for (std::size_t i = 2; i < fc.numel(); ++i) CHECK(std::abs(fc.at(i)) < 1e-12);

  Rng rng(9);
  for (std::size_t side : {4u, 8u, 3u, 6u}) {
    std::vector<double> xs = rng.uniform_vector(side * side * 2, -1, 1);
    Tensor x({1, 2, side, side}, xs);
    Tensor f = dft2d(x);
    double energy_x = 0, energy_f = 0;
    for (std::size_t ch = 0; ch < 2; ++ch) {
      std::vector<double> plane(xs.begin() + ch * side * side, xs.begin() + (ch + 1) * side * side);
      const auto ref = oracle::dft2(plane, side, side);
      for (std::size_t i = 0; i < side * side; ++i) {
        CHECK(std::abs(f.at((ch * side * side + i) * 2) - ref[i].real()) < 1e-9);
        CHECK(std::abs(f.at((ch * side * side + i) * 2 + 1) - ref[i].imag()) < 1e-9);
        energy_f += std::norm(ref[i]);
      }
      for (double v : plane) energy_x += v * v;
    }
    CHECK(std::abs(energy_x - energy_f / double(side * side)) < 1e-9);

    Tensor y({1, 2, side, side}, rng.uniform_vector(side * side * 2, -1, 1));
    Tensor lhs = dft2d(add(scale(x, 2.0), scale(y, -0.5)));
    Tensor rhs = add(scale(dft2d(x), 2.0), scale(dft2d(y), -0.5));
    for (std::size_t i = 0; i < lhs.numel(); ++i) CHECK(std::abs(lhs.at(i) - rhs.at(i)) < 1e-9);
  }

  Tensor xl = rand_leaf({1, 1, 4, 4}, rng);
  CHECK(finite_diff_check([&] { return sum(abs(dft2d(xl))); }, {xl}, 1e-6) < 1e-5);
}

TEST_CASE("radix-2 and naive 1-D transforms agree; inverse recovers the input") {
  Rng rng(10);
  std::vector<dft::Complex> a(16);
  for (auto& z : a) z = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto b = a, c = a;
  dft::naive(b, -1);
  dft::radix2(c, -1);
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(b[i] - c[i]) < 1e-12);
  dft::transform(c, +1);
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(c[i] / 16.0 - a[i]) < 1e-12);
  CHECK(dft::is_power_of_two(8));
  CHECK_FALSE(dft::is_power_of_two(6));
}
