#include "vamamba/training.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "vamamba/config_text.hpp"

namespace vamamba {

Tensor hybrid_loss(const Tensor& pred, const Tensor& gt, double lambda_fft) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("hybrid_loss: " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  }
  if (lambda_fft < 0.0) throw ConfigError("lambda_fft must be non-negative");
  Tensor diff = sub(pred, gt);
  Tensor pixel = mean(abs(diff));
  if (lambda_fft == 0.0) return pixel;
  // The transform is linear, so F(pred) − F(gt) = F(pred − gt).
  Tensor spectrum = abs(dft2d(diff));
  const double bins = static_cast<double>(diff.numel());
  return add(pixel, scale(sum(spectrum), lambda_fft / bins));
}

void adamw_step(std::span<double> w, std::span<const double> grad, std::span<double> m,
                std::span<double> v, std::size_t t, double lr, const AdamWConfig& cfg) {
  if (t == 0) throw NumericError("adamw_step: t must be ≥ 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] *= 1.0 - lr * cfg.weight_decay;
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1, v_hat = v[i] / bc2;
    w[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

AdamW::AdamW(ParamList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const auto& [name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  for (const auto& [name, t] : params_) {
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + name);
    }
  }
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    adamw_step(p.mutable_data(), p.grad(), m_[i], v_[i], t_, lr, cfg_);
  }
}

void AdamW::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

double cosine_lr(std::size_t t, std::size_t total, double lr0, double lr_min) {
  if (t > total) {
    throw ConfigError("cosine_lr: step " + std::to_string(t) + " beyond schedule length " +
                      std::to_string(total));
  }
  if (total == 0) return lr0;
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + std::cos(phase));
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be positive");
  if (lr_min < 0.0 || lr_min > lr0) throw ConfigError("train.lr_min must lie in [0, lr0]");
  if (lambda_fft < 0.0) throw ConfigError("train.lambda_fft must be non-negative");
  if (sigma < 0.0) throw ConfigError("train.sigma must be non-negative");
  if (batch == 0 || crop == 0) throw ConfigError("train.batch and train.crop must be positive");
  if (eval_every == 0 || eval_patches == 0) {
    throw ConfigError("train.eval_every and train.eval_patches must be positive");
  }
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0 && adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0,1)");
  }
  if (!(adamw.eps > 0.0) || adamw.weight_decay < 0.0) {
    throw ConfigError("train.eps must be positive and train.weight_decay non-negative");
  }
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  using namespace config_text;
  if (key == "train.lr0") lr0 = parse_real(key, value);
  else if (key == "train.lr_min") lr_min = parse_real(key, value);
  else if (key == "train.steps") total_steps = parse_size(key, value);
  else if (key == "train.batch") batch = parse_size(key, value);
  else if (key == "train.crop") crop = parse_size(key, value);
  else if (key == "train.lambda_fft") lambda_fft = parse_real(key, value);
  else if (key == "train.beta1") adamw.beta1 = parse_real(key, value);
  else if (key == "train.beta2") adamw.beta2 = parse_real(key, value);
  else if (key == "train.eps") adamw.eps = parse_real(key, value);
  else if (key == "train.weight_decay") adamw.weight_decay = parse_real(key, value);
  else if (key == "train.seed") seed = parse_size(key, value);
  else if (key == "train.degradation") degradation = parse_degradation(value);
  else if (key == "train.sigma") sigma = parse_real(key, value);
  else if (key == "train.sigma255") sigma = parse_real(key, value) / 255.0;
  else if (key == "train.eval_every") eval_every = parse_size(key, value);
  else if (key == "train.eval_patches") eval_patches = parse_size(key, value);
  else if (key == "train.data_dir") data_dir = value;
  else return false;
  return true;
}

std::string TrainConfig::to_text() const {
  using namespace config_text;
  std::string t;
  auto line = [&](const char* key, const std::string& v) { t += std::string("train.") + key + "=" + v + "\n"; };
  line("lr0", format_real(lr0));
  line("lr_min", format_real(lr_min));
  line("steps", std::to_string(total_steps));
  line("batch", std::to_string(batch));
  line("crop", std::to_string(crop));
  line("lambda_fft", format_real(lambda_fft));
  line("beta1", format_real(adamw.beta1));
  line("beta2", format_real(adamw.beta2));
  line("eps", format_real(adamw.eps));
  line("weight_decay", format_real(adamw.weight_decay));
  line("seed", std::to_string(seed));
  line("degradation", to_string(degradation));
  line("sigma", format_real(sigma));
  line("eval_every", std::to_string(eval_every));
  line("eval_patches", std::to_string(eval_patches));
  line("data_dir", data_dir);
  return t;
}

std::string trace_header() { return "step\tlr\tloss\tpsnr\n"; }

std::string trace_line(const TraceRow& row) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t", row.step, row.lr, row.loss);
  std::string s = buf;
  s += row.psnr ? format_psnr(*row.psnr) : "-";
  s += '\n';
  return s;
}

namespace {

constexpr std::uint64_t kHeldOutStream = 0x9e3779b97f4a7c15ull;

struct Batch {
  Tensor noisy;
  Tensor clean;
};

Batch draw_batch(DataSource& source, const TrainConfig& cfg, std::size_t count, Rng& rng) {
  std::vector<Tensor> noisy, clean;
  for (std::size_t i = 0; i < count; ++i) {
    auto [d, c] = synthesize_pair(source.next(cfg.crop, rng), cfg.degradation, cfg.sigma, rng);
    noisy.push_back(std::move(d));
    clean.push_back(std::move(c));
  }
  return {stack_images(noisy), stack_images(clean)};
}

template <typename Fn>
void for_each_chunk(const HeldOutSet& set, std::size_t batch, Fn fn) {
  const std::size_t n = set.noisy.size(0);
  for (std::size_t b = 0; b < n; b += batch) {
    const std::size_t e = std::min(n, b + batch);
    fn(slice0(set.noisy, b, e), slice0(set.clean, b, e));
  }
}

double per_patch_psnr(const Tensor& pred, const Tensor& gt) {
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(0); ++i) {
    total += std::min(kPsnrCap, psnr(slice0(pred, i, i + 1), slice0(gt, i, i + 1)));
  }
  return total;
}

}  // namespace

HeldOutSet make_held_out(const TrainConfig& cfg, DataSource& source) {
  Rng rng(cfg.seed ^ kHeldOutStream);
  Batch b = draw_batch(source, cfg, cfg.eval_patches, rng);
  return {b.noisy, b.clean};
}

double restored_psnr(Model& model, const HeldOutSet& set, std::size_t batch) {
  NoGradScope no_grad;
  double total = 0.0;
  for_each_chunk(set, batch, [&](const Tensor& noisy, const Tensor& clean) {
    total += per_patch_psnr(model.forward(noisy), clean);
  });
  return total / static_cast<double>(set.noisy.size(0));
}

double held_out_loss(Model& model, const HeldOutSet& set, std::size_t batch, double lambda_fft) {
  NoGradScope no_grad;
  double total = 0.0;
  for_each_chunk(set, batch, [&](const Tensor& noisy, const Tensor& clean) {
    total += hybrid_loss(model.forward(noisy), clean, lambda_fft).item() * noisy.size(0);
  });
  return total / static_cast<double>(set.noisy.size(0));
}

double input_psnr(const HeldOutSet& set) {
  return per_patch_psnr(set.noisy, set.clean) / static_cast<double>(set.noisy.size(0));
}

TrainResult train_loop(Model& model, DataSource& data, const TrainConfig& cfg,
                       const std::function<void(const TraceRow&)>& on_step) {
  cfg.validate();
  TrainResult result;
  model.reset_caches();
  const HeldOutSet held_out = make_held_out(cfg, data);
  result.noisy_psnr = input_psnr(held_out);

  Rng rng(cfg.seed);
  AdamW opt(model.parameters(), cfg.adamw);
  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    TraceRow row;
    row.step = step;
    row.lr = cosine_lr(step - 1, cfg.total_steps, cfg.lr0, cfg.lr_min);
    Batch batch = draw_batch(data, cfg, cfg.batch, rng);
    try {
      Tape tape;
      TapeScope scope(tape);
      opt.zero_grad();
      Tensor loss = hybrid_loss(model.forward(batch.noisy), batch.clean, cfg.lambda_fft);
      row.loss = loss.item();
      tape.backward(loss);
      opt.step(row.lr);
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = "step " + std::to_string(step) + ": " + e.what();
      break;
    }
    if (step % cfg.eval_every == 0 || step == cfg.total_steps) {
      row.psnr = restored_psnr(model, held_out, cfg.batch);
    }
    result.trace.push_back(row);
    if (on_step) on_step(row);
  }
  opt.zero_grad();
  if (!result.aborted) {
    result.final_psnr = restored_psnr(model, held_out, cfg.batch);
    result.final_loss = held_out_loss(model, held_out, cfg.batch, cfg.lambda_fft);
  }
  return result;
}

}  // namespace vamamba
