#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vamamba/data.hpp"
#include "vamamba/metrics.hpp"
#include "vamamba/network.hpp"

namespace vamamba {

/// mean|pred − gt| + λ · mean over DFT bins of (|Re Δ̂| + |Im Δ̂|), with the
/// unnormalized forward transform of each H×W plane.
Tensor hybrid_loss(const Tensor& pred, const Tensor& gt, double lambda_fft);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// One decoupled-weight-decay Adam update of `w` (t ≥ 1).
void adamw_step(std::span<double> w, std::span<const double> grad, std::span<double> m,
                std::span<double> v, std::size_t t, double lr, const AdamWConfig& cfg);

class AdamW {
 public:
  AdamW(ParamList params, AdamWConfig cfg);
  /// Applies one update from the parameters' accumulated gradients. Throws
  /// NumericError without touching anything if a gradient is not finite.
  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  ParamList params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// lr_min + ½(lr0 − lr_min)(1 + cos(πt/T)).
double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min = 0.0);

struct TrainConfig {
  double lr0 = 2e-4;
  double lr_min = 0.0;
  std::size_t total_steps = 300;
  std::size_t batch = 4;
  std::size_t crop = 16;
  double lambda_fft = 0.05;
  AdamWConfig adamw;
  std::uint64_t seed = 1;
  Degradation degradation = Degradation::gaussian_noise;
  double sigma = 15.0 / 255.0;
  std::size_t eval_every = 50;
  std::size_t eval_patches = 32;
  std::string data_dir;

  void validate() const;
  bool set(const std::string& key, const std::string& value);
  std::string to_text() const;
};

struct TraceRow {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::optional<double> psnr;
};

std::string trace_header();
std::string trace_line(const TraceRow& row);

/// Fixed noisy/clean patch pairs drawn from their own seed stream.
struct HeldOutSet {
  Tensor noisy;  // [N×3×crop×crop]
  Tensor clean;
};
HeldOutSet make_held_out(const TrainConfig& cfg, DataSource& source);

/// Mean per-patch PSNR of the model's restorations (no gradient recording).
double restored_psnr(Model& model, const HeldOutSet& set, std::size_t batch);
double held_out_loss(Model& model, const HeldOutSet& set, std::size_t batch, double lambda_fft);
double input_psnr(const HeldOutSet& set);

struct TrainResult {
  std::vector<TraceRow> trace;
  double noisy_psnr = 0.0;
  double final_psnr = 0.0;
  double final_loss = 0.0;  // hybrid loss on the held-out set
  bool aborted = false;
  std::string abort_reason;
};

/// synthesize → forward → hybrid loss → backward → AdamW at cosine_lr.
/// A non-finite loss or gradient stops the run leaving the model at its last
/// good parameters.
TrainResult train_loop(Model& model, DataSource& data, const TrainConfig& cfg,
                       const std::function<void(const TraceRow&)>& on_step = {});

}  // namespace vamamba
