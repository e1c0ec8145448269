#include "vamamba/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vamamba/parallel.hpp"

namespace vamamba {

namespace {

// Strides of `in` viewed with the rank of `out`; broadcast axes get stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    std::size_t axis_in = in.size() - 1 - i;
    std::size_t axis_out = out.size() - 1 - i;
    strides[axis_out] = in[axis_in] == 1 ? 0 : stride;
    stride *= in[axis_in];
  }
  return strides;
}

template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t rank = out.size();
  const std::size_t total = shape_numel(out);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < total; ++i) {
    fn(i, ia, ib);
    for (std::size_t axis = rank; axis-- > 0;) {
      ++idx[axis];
      ia += sa[axis];
      ib += sb[axis];
      if (idx[axis] < out[axis]) break;
      ia -= sa[axis] * out[axis];
      ib -= sb[axis] * out[axis];
      idx[axis] = 0;
    }
  }
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::add: return a + b;
    case BinaryOp::sub: return a - b;
    case BinaryOp::mul: return a * b;
    case BinaryOp::div: return a / b;
  }
  return 0.0;
}

const char* binary_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "binary";
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shape mismatch: cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    out[rank - 1 - i] = std::max(da, db);
  }
  return out;
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  std::vector<double> out(shape_numel(out_shape));
  const auto ad = a.data();
  const auto bd = b.data();
  const bool same = a.shape() == b.shape();

  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply_binary(op, ad[i], bd[i]);
  } else {
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      out[i] = apply_binary(op, ad[ia], bd[ib]);
    });
  }

  Shape result_shape = out_shape;
  return record_op(
      binary_name(op), std::move(result_shape), std::move(out), {a, b},
      [op, a, b, out_shape, same](std::span<const double> g, std::span<const double>) {
        auto ga = grad_sink(a);
        auto gb = grad_sink(b);
        const auto ad = a.data();
        const auto bd = b.data();
        auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
          switch (op) {
            case BinaryOp::add:
              if (!ga.empty()) ga[ia] += g[i];
              if (!gb.empty()) gb[ib] += g[i];
              break;
            case BinaryOp::sub:
              if (!ga.empty()) ga[ia] += g[i];
              if (!gb.empty()) gb[ib] -= g[i];
              break;
            case BinaryOp::mul:
              if (!ga.empty()) ga[ia] += g[i] * bd[ib];
              if (!gb.empty()) gb[ib] += g[i] * ad[ia];
              break;
            case BinaryOp::div:
              if (!ga.empty()) ga[ia] += g[i] / bd[ib];
              if (!gb.empty()) gb[ib] -= g[i] * ad[ia] / (bd[ib] * bd[ib]);
              break;
          }
        };
        if (same) {
          for (std::size_t i = 0; i < g.size(); ++i) step(i, i, i);
        } else {
          for_each_broadcast(out_shape, broadcast_strides(a.shape(), out_shape),
                             broadcast_strides(b.shape(), out_shape), step);
        }
      });
}

Tensor elementwise(UnaryOp op, const Tensor& x) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  const char* name = "unary";
  switch (op) {
    case UnaryOp::neg:
      name = "neg";
      for (std::size_t i = 0; i < xd.size(); ++i) out[i] = -xd[i];
      break;
    case UnaryOp::exp:
      name = "exp";
      for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::exp(xd[i]);
      break;
    case UnaryOp::sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < xd.size(); ++i) out[i] = stable_sigmoid(xd[i]);
      break;
    case UnaryOp::silu:
      name = "silu";
      for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * stable_sigmoid(xd[i]);
      break;
    case UnaryOp::softplus:
      name = "softplus";
      for (std::size_t i = 0; i < xd.size(); ++i) out[i] = stable_softplus(xd[i]);
      break;
    case UnaryOp::abs:
      name = "abs";
      for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::fabs(xd[i]);
      break;
    case UnaryOp::square:
      name = "square";
      for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * xd[i];
      break;
  }
  return record_op(name, x.shape(), std::move(out), {x},
                   [op, x](std::span<const double> g, std::span<const double> y) {
                     auto gx = grad_sink(x);
                     if (gx.empty()) return;
                     const auto xd = x.data();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       double d = 0.0;
                       switch (op) {
                         case UnaryOp::neg: d = -1.0; break;
                         case UnaryOp::exp: d = y[i]; break;
                         case UnaryOp::sigmoid: d = y[i] * (1.0 - y[i]); break;
                         case UnaryOp::silu: {
                           double s = stable_sigmoid(xd[i]);
                           d = s + xd[i] * s * (1.0 - s);
                           break;
                         }
                         case UnaryOp::softplus: d = stable_sigmoid(xd[i]); break;
                         case UnaryOp::abs: d = xd[i] > 0.0 ? 1.0 : (xd[i] < 0.0 ? -1.0 : 0.0); break;
                         case UnaryOp::square: d = 2.0 * xd[i]; break;
                       }
                       gx[i] += g[i] * d;
                     }
                   });
}

Tensor scale(const Tensor& x, double factor) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] * factor;
  return record_op("scale", x.shape(), std::move(out), {x},
                   [x, factor](std::span<const double> g, std::span<const double>) {
                     auto gx = grad_sink(x);
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
                   });
}

Tensor ones_like(const Tensor& x) { return Tensor(x.shape(), 1.0); }
Tensor zeros_like(const Tensor& x) { return Tensor(x.shape(), 0.0); }

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 16;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Tensor sum(const Tensor& x) {
  return record_op("sum", Shape{}, {pairwise_sum(x.data())}, {x},
                   [x](std::span<const double> g, std::span<const double>) {
                     auto gx = grad_sink(x);
                     for (double& v : gx) v += g[0];
                   });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return record_op("mean", Shape{}, {pairwise_sum(x.data()) / n}, {x},
                   [x, n](std::span<const double> g, std::span<const double>) {
                     auto gx = grad_sink(x);
                     for (double& v : gx) v += g[0] / n;
                   });
}

namespace {

// c[m×p] += a[m×k]·b[k×p], rows split across workers.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t p) {
  parallel_for(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* crow = c + i * p;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = a[i * k + kk];
        if (av == 0.0) continue;
        const double* brow = b + kk * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// c[m×p] += a[m×k]·b[p×k]ᵀ
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t p) {
  parallel_for(m, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
        c[i * p + j] += s;
      }
    }
  });
}

// c[k×p] += a[m×k]ᵀ·b[m×p]
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t p) {
  parallel_for(k, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* brow = b + i * p;
      for (std::size_t kk = r0; kk < r1; ++kk) {
        const double av = a[i * k + kk];
        if (av == 0.0) continue;
        double* crow = c + kk * p;
        for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2) {
    throw ShapeError("matmul expects 2-D operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.size(0), k = a.size(1), p = b.size(1);
  if (b.size(0) != k) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * p, 0.0);
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, p);
  return record_op("matmul", Shape{m, p}, std::move(out), {a, b},
                   [a, b, m, k, p](std::span<const double> g, std::span<const double>) {
                     auto ga = grad_sink(a);
                     auto gb = grad_sink(b);
                     if (!ga.empty()) gemm_nt_acc(g.data(), b.data().data(), ga.data(), m, p, k);
                     if (!gb.empty()) gemm_tn_acc(a.data().data(), g.data(), gb.data(), m, k, p);
                   });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.dim() != 3 || b.dim() != 3 || a.size(0) != b.size(0)) {
    throw ShapeError("bmm expects matching 3-D operands, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const std::size_t batch = a.size(0), m = a.size(1), k = a.size(2);
  const std::size_t bk = transpose_b ? b.size(2) : b.size(1);
  const std::size_t p = transpose_b ? b.size(1) : b.size(2);
  if (bk != k) {
    throw ShapeError("bmm inner dimension mismatch: " + shape_str(a.shape()) + " · " +
                     shape_str(b.shape()) + (transpose_b ? "ᵀ" : ""));
  }
  std::vector<double> out(batch * m * p, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    const double* ap = a.data().data() + i * m * k;
    const double* bp = b.data().data() + i * k * p;
    double* cp = out.data() + i * m * p;
    if (transpose_b) {
      gemm_nt_acc(ap, bp, cp, m, k, p);
    } else {
      gemm_acc(ap, bp, cp, m, k, p);
    }
  }
  return record_op(
      "bmm", Shape{batch, m, p}, std::move(out), {a, b},
      [a, b, batch, m, k, p, transpose_b](std::span<const double> g, std::span<const double>) {
        auto ga = grad_sink(a);
        auto gb = grad_sink(b);
        for (std::size_t i = 0; i < batch; ++i) {
          const double* gp = g.data() + i * m * p;
          const double* ap = a.data().data() + i * m * k;
          const double* bp = b.data().data() + i * k * p;
          if (!ga.empty()) {
            // dA = dY·Bᵀ (or dY·B when B was used transposed)
            if (transpose_b) {
              gemm_acc(gp, bp, ga.data() + i * m * k, m, p, k);
            } else {
              gemm_nt_acc(gp, bp, ga.data() + i * m * k, m, p, k);
            }
          }
          if (!gb.empty()) {
            if (transpose_b) {
              // B is [p×k]: dB = dYᵀ·A
              gemm_tn_acc(gp, ap, gb.data() + i * k * p, m, p, k);
            } else {
              gemm_tn_acc(ap, gp, gb.data() + i * k * p, m, k, p);
            }
          }
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return record_op("reshape", std::move(shape), std::move(out), {x},
                   [x](std::span<const double> g, std::span<const double>) {
                     auto gx = grad_sink(x);
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                   });
}

Tensor permute(const Tensor& x, std::span<const std::size_t> axes) {
  const std::size_t rank = x.dim();
  if (axes.size() != rank) {
    throw ShapeError("permute axes do not match rank of " + shape_str(x.shape()));
  }
  std::vector<bool> seen(rank, false);
  for (std::size_t a : axes) {
    if (a >= rank || seen[a]) throw ShapeError("permute axes are not a permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * x.shape()[i];
  Shape out_shape(rank);
  std::vector<std::size_t> strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = x.shape()[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  std::vector<std::size_t> index(x.numel());
  std::vector<std::size_t> zero(rank, 0);
  for_each_broadcast(out_shape, strides, zero,
                     [&](std::size_t i, std::size_t src, std::size_t) { index[i] = src; });
  return gather(x, std::move(index), std::move(out_shape));
}

Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes) {
  std::vector<std::size_t> v(axes);
  return permute(x, std::span<const std::size_t>(v));
}

Tensor gather(const Tensor& x, std::vector<std::size_t> index, Shape out_shape) {
  if (shape_numel(out_shape) != index.size()) {
    throw ShapeError("gather index count does not match output shape " + shape_str(out_shape));
  }
  const auto xd = x.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xd.size()) throw ShapeError("gather index out of range");
    out[i] = xd[index[i]];
  }
  return record_op("gather", std::move(out_shape), std::move(out), {x},
                   [x, index = std::move(index)](std::span<const double> g,
                                                 std::span<const double>) {
                     auto gx = grad_sink(x);
                     if (gx.empty()) return;
                     for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += g[i];
                   });
}

Tensor slice0(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.dim() == 0 || begin >= end || end > x.size(0)) {
    throw ShapeError("slice0 range out of bounds for " + shape_str(x.shape()));
  }
  const std::size_t row = x.numel() / x.size(0);
  Shape shape = x.shape();
  shape[0] = end - begin;
  std::vector<std::size_t> index(row * (end - begin));
  std::iota(index.begin(), index.end(), begin * row);
  return gather(x, std::move(index), std::move(shape));
}

Tensor softmax(const Tensor& x) {
  if (x.dim() == 0) throw ShapeError("softmax needs at least one dimension");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * n;
    double* o = out.data() + r * n;
    double mx = *std::max_element(in, in + n);
    for (std::size_t j = 0; j < n; ++j) o[j] = std::exp(in[j] - mx);
    double s = pairwise_sum(std::span<const double>(o, n));
    for (std::size_t j = 0; j < n; ++j) o[j] /= s;
  }
  return record_op("softmax", x.shape(), std::move(out), {x},
                   [x, n, rows](std::span<const double> g, std::span<const double> y) {
                     auto gx = grad_sink(x);
                     if (gx.empty()) return;
                     for (std::size_t r = 0; r < rows; ++r) {
                       double dot = 0.0;
                       for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
                       for (std::size_t j = 0; j < n; ++j) {
                         gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
                       }
                     }
                   });
}

}  // namespace vamamba
