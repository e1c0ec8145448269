#include "vamamba/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

#include "vamamba/ops.hpp"

namespace vamamba {

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

constexpr std::size_t kWindow = 11;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - 5.0;
    w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

// Separable valid-mode filtering of one plane: rows first, then columns.
std::vector<double> filter_valid(const double* src, std::size_t H, std::size_t W,
                                 const std::array<double, kWindow>& w) {
  const std::size_t oh = H - kWindow + 1, ow = W - kWindow + 1;
  std::vector<double> rows(H * ow);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += w[k] * src[y * W + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += w[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mse");
  std::vector<double> sq(a.numel());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double d = a.at(i) - b.at(i);
    sq[i] = d * d;
  }
  return pairwise_sum(sq) / static_cast<double>(sq.size());
}

double mae(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mae");
  std::vector<double> d(a.numel());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::abs(a.at(i) - b.at(i));
  return pairwise_sum(d) / static_cast<double>(d.size());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

std::string format_psnr(double db) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", std::min(db, kPsnrCap));
  return buf;
}

double ssim(const Tensor& a, const Tensor& b, double dynamic_range) {
  require_same(a, b, "ssim");
  if (a.dim() < 2) throw ShapeError("ssim needs at least H×W inputs");
  const std::size_t H = a.size(a.dim() - 2), W = a.size(a.dim() - 1);
  if (H < kWindow || W < kWindow) {
    throw ShapeError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                     " is smaller than the 11x11 window");
  }
  const auto w = gaussian_taps();
  const double c1 = std::pow(0.01 * dynamic_range, 2), c2 = std::pow(0.03 * dynamic_range, 2);
  const std::size_t planes = a.numel() / (H * W);
  std::vector<double> local;
  std::vector<double> aa(H * W), bb(H * W), ab(H * W);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* pa = a.data().data() + p * H * W;
    const double* pb = b.data().data() + p * H * W;
    for (std::size_t i = 0; i < H * W; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, H, W, w);
    const auto mu_b = filter_valid(pb, H, W, w);
    const auto e_aa = filter_valid(aa.data(), H, W, w);
    const auto e_bb = filter_valid(bb.data(), H, W, w);
    const auto e_ab = filter_valid(ab.data(), H, W, w);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
      local.push_back(num / den);
    }
  }
  return pairwise_sum(local) / static_cast<double>(local.size());
}

MetricReport evaluate(const Tensor& pred, const Tensor& gt) {
  MetricReport r;
  r.psnr_db = psnr(pred, gt);
  r.ssim = std::clamp(ssim(pred, gt), 0.0, 1.0);
  r.mae = mae(pred, gt);
  return r;
}

}  // namespace vamamba
