#pragma once

#include <string>

#include "vamamba/tensor.hpp"

namespace vamamba {

/// 10·log10(peak²/MSE); +∞ when the inputs are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
/// Text form with the infinite case capped at 99 dB.
std::string format_psnr(double db);
constexpr double kPsnrCap = 99.0;

double mse(const Tensor& a, const Tensor& b);
double mae(const Tensor& a, const Tensor& b);

/// Mean SSIM over every H×W plane of [..×H×W] inputs using an 11×11
/// Gaussian window (σ = 1.5), valid positions only, C1 = (0.01·L)²,
/// C2 = (0.03·L)².
double ssim(const Tensor& a, const Tensor& b, double dynamic_range = 1.0);

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;  // clamped to [0,1]
  double mae = 0.0;
};

MetricReport evaluate(const Tensor& pred, const Tensor& gt);

}  // namespace vamamba
