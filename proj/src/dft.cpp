#include "vamamba/dft.hpp"

#include <cmath>
#include <numbers>

#include "vamamba/error.hpp"
#include "vamamba/nn.hpp"

namespace vamamba {

namespace dft {

bool is_power_of_two(std::size_t n) { return n && (n & (n - 1)) == 0; }

void naive(std::span<Complex> values, int sign) {
  const std::size_t n = values.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      // reduce k·j mod n before scaling keeps the angle small and exact
      const double angle = sign * 2.0 * std::numbers::pi *
                           static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += values[j] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  std::copy(out.begin(), out.end(), values.begin());
}

void radix2(std::span<Complex> values, int sign) {
  const std::size_t n = values.size();
  if (!is_power_of_two(n)) throw ShapeError("radix2 FFT needs a power-of-two length");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(values[i], values[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t t = 0; t < half; ++t) {
        const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(t) /
                             static_cast<double>(len);
        const Complex w(std::cos(angle), std::sin(angle));
        const Complex u = values[start + t];
        const Complex v = values[start + t + half] * w;
        values[start + t] = u + v;
        values[start + t + half] = u - v;
      }
    }
  }
}

void transform(std::span<Complex> values, int sign) {
  if (is_power_of_two(values.size())) {
    radix2(values, sign);
  } else {
    naive(values, sign);
  }
}

void transform2d(std::span<Complex> plane, std::size_t H, std::size_t W, int sign) {
  for (std::size_t y = 0; y < H; ++y) transform(plane.subspan(y * W, W), sign);
  std::vector<Complex> column(H);
  for (std::size_t x = 0; x < W; ++x) {
    for (std::size_t y = 0; y < H; ++y) column[y] = plane[y * W + x];
    transform(column, sign);
    for (std::size_t y = 0; y < H; ++y) plane[y * W + x] = column[y];
  }
}

}  // namespace dft

Tensor dft2d(const Tensor& x) {
  if (x.dim() != 4) throw ShapeError("dft2d expects B×C×H×W, got " + shape_str(x.shape()));
  const std::size_t H = x.size(2), W = x.size(3);
  const std::size_t planes = x.size(0) * x.size(1), plane = H * W;
  const auto xd = x.data();
  std::vector<double> out(2 * x.numel());
  std::vector<dft::Complex> buf(plane);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < plane; ++i) buf[i] = xd[p * plane + i];
    dft::transform2d(buf, H, W, -1);
    for (std::size_t i = 0; i < plane; ++i) {
      out[2 * (p * plane + i)] = buf[i].real();
      out[2 * (p * plane + i) + 1] = buf[i].imag();
    }
  }
  Shape shape = x.shape();
  shape.push_back(2);
  // For real input, dL/dx = Re(Σ_k (g_re + i·g_im)·e^{+iθ}), the unnormalized
  // inverse transform of the complex cotangent.
  return record_op("dft2d", std::move(shape), std::move(out), {x},
                   [x, planes, plane, H, W](std::span<const double> g, std::span<const double>) {
                     auto gx = grad_sink(x);
                     if (gx.empty()) return;
                     std::vector<dft::Complex> buf(plane);
                     for (std::size_t p = 0; p < planes; ++p) {
                       for (std::size_t i = 0; i < plane; ++i) {
                         buf[i] = dft::Complex(g[2 * (p * plane + i)], g[2 * (p * plane + i) + 1]);
                       }
                       dft::transform2d(buf, H, W, +1);
                       for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += buf[i].real();
                     }
                   });
}

}  // namespace vamamba
