#include "vamamba/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace vamamba {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  NoGradScope no_grad;
  Tensor out = f();
  if (out.numel() != 1) throw ShapeError("gradcheck function must return a scalar");
  double v = out.item();
  if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite function evaluation");
  return v;
}

}  // namespace

GradcheckResult finite_diff_check(const std::function<Tensor()>& f,
                                  std::vector<Tensor> params,
                                  const GradcheckOptions& options,
                                  const std::vector<std::string>& names) {
  if (!(options.step > 0.0) || !std::isfinite(options.step)) {
    throw NumericError("gradcheck: invalid step " + std::to_string(options.step));
  }
  for (auto& p : params) {
    if (!p.requires_grad()) throw Error("gradcheck: parameter does not require grad");
    p.zero_grad();
  }

  {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = f();
    if (out.numel() != 1) throw ShapeError("gradcheck function must return a scalar");
    if (!std::isfinite(out.item())) {
      throw NumericError("gradcheck: non-finite function evaluation");
    }
    tape.backward(out);
  }

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  std::mt19937_64 rng(options.seed);
  GradcheckResult result;
  const double h = options.step;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    std::vector<std::size_t> coords(p.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto values = p.mutable_data();
    for (std::size_t c : coords) {
      const double saved = values[c];
      values[c] = saved + h;
      const double plus = evaluate(f);
      values[c] = saved - h;
      const double minus = evaluate(f);
      values[c] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double a = analytic[t][c];
      const double err = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
      ++result.coords_checked;
      if (err > result.max_relative_error || result.worst.empty()) {
        result.max_relative_error = err;
        result.worst = (t < names.size() ? names[t] : "param" + std::to_string(t)) + "[" +
                       std::to_string(c) + "]";
      }
    }
  }
  return result;
}

double finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double step) {
  GradcheckOptions options;
  options.step = step;
  return finite_diff_check(f, std::move(params), options).max_relative_error;
}

}  // namespace vamamba
