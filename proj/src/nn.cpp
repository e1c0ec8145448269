#include "vamamba/nn.hpp"

#include <algorithm>
#include <cmath>

#include "vamamba/parallel.hpp"

namespace vamamba {

Linear Linear::init(Rng& rng, std::size_t in, std::size_t out, bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = Tensor::parameter({in, out}, rng.uniform_vector(in * out, -bound, bound));
  l.has_bias = bias;
  l.bias = bias ? Tensor::parameter({out}, rng.uniform_vector(out, -bound, bound)) : Tensor();
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool bias) {
  Linear l;
  l.weight = Tensor::parameter({in, out}, std::vector<double>(in * out, 0.0));
  l.has_bias = bias;
  l.bias = bias ? Tensor::parameter({out}, std::vector<double>(out, 0.0)) : Tensor();
  return l;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (has_bias) out.emplace_back(prefix + ".bias", bias);
}

Tensor linear(const Tensor& x, const Linear& p) {
  const std::size_t in = p.in_features();
  if (x.dim() == 0 || x.shape().back() != in) {
    throw ShapeError("linear expects last dimension " + std::to_string(in) + ", got " +
                     shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = p.out_features();
  Tensor flat = reshape(x, {x.numel() / in, in});
  Tensor y = matmul(flat, p.weight);
  if (p.has_bias) y = add(y, p.bias);
  return reshape(y, std::move(out_shape));
}

ConvParams ConvParams::init(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t kernel) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * kernel * kernel));
  ConvParams p;
  p.kernel = kernel;
  p.weight = Tensor::parameter({c_out, c_in, kernel, kernel},
                               rng.uniform_vector(c_out * c_in * kernel * kernel, -bound, bound));
  p.bias = Tensor::parameter({c_out}, rng.uniform_vector(c_out, -bound, bound));
  return p;
}

ConvParams ConvParams::init_depthwise(Rng& rng, std::size_t channels, std::size_t kernel) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(kernel * kernel));
  ConvParams p;
  p.kernel = kernel;
  p.depthwise = true;
  p.weight = Tensor::parameter({channels, 1, kernel, kernel},
                               rng.uniform_vector(channels * kernel * kernel, -bound, bound));
  p.bias = Tensor::parameter({channels}, rng.uniform_vector(channels, -bound, bound));
  return p;
}

ConvParams ConvParams::zeros(std::size_t c_in, std::size_t c_out, std::size_t kernel) {
  ConvParams p;
  p.kernel = kernel;
  p.weight = Tensor::parameter({c_out, c_in, kernel, kernel},
                               std::vector<double>(c_out * c_in * kernel * kernel, 0.0));
  p.bias = Tensor::parameter({c_out}, std::vector<double>(c_out, 0.0));
  return p;
}

void ConvParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

namespace {

// out[y][x] += w · in[y+dy][x+dx] over the valid (zero-padded) region.
inline void shifted_axpy(double* out, const double* in, double w, std::ptrdiff_t dy,
                         std::ptrdiff_t dx, std::ptrdiff_t H, std::ptrdiff_t W) {
  const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(H, H - dy);
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(W, W - dx);
  for (std::ptrdiff_t y = y0; y < y1; ++y) {
    double* o = out + y * W;
    const double* s = in + (y + dy) * W + dx;
    for (std::ptrdiff_t x = x0; x < x1; ++x) o[x] += w * s[x];
  }
}

inline double shifted_dot(const double* g, const double* in, std::ptrdiff_t dy, std::ptrdiff_t dx,
                          std::ptrdiff_t H, std::ptrdiff_t W) {
  const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy), y1 = std::min(H, H - dy);
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx), x1 = std::min(W, W - dx);
  double s = 0.0;
  for (std::ptrdiff_t y = y0; y < y1; ++y) {
    const double* gr = g + y * W;
    const double* ir = in + (y + dy) * W + dx;
    for (std::ptrdiff_t x = x0; x < x1; ++x) s += gr[x] * ir[x];
  }
  return s;
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  if (x.dim() != 4) throw ShapeError("conv2d expects B×C×H×W, got " + shape_str(x.shape()));
  const std::size_t B = x.size(0), C_in = x.size(1), H = x.size(2), W = x.size(3);
  const std::size_t C_out = p.out_channels();
  const std::size_t k = p.kernel;
  if (k % 2 == 0) throw ShapeError("conv2d kernel must be odd");
  if (C_in != p.in_channels()) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(C_in) +
                     " channels, weight expects " + std::to_string(p.in_channels()));
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k - 1) / 2;
  const std::ptrdiff_t Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
  const std::size_t plane = H * W;
  const bool depthwise = p.depthwise;
  Tensor w = p.weight, bias = p.bias;

  std::vector<double> out(B * C_out * plane);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* bd = bias.data().data();
  parallel_for(B * C_out, [&](std::size_t begin, std::size_t end) {
    for (std::size_t bo = begin; bo < end; ++bo) {
      const std::size_t b = bo / C_out, o = bo % C_out;
      double* op = out.data() + bo * plane;
      std::fill(op, op + plane, bd[o]);
      const std::size_t i_begin = depthwise ? o : 0;
      const std::size_t i_end = depthwise ? o + 1 : C_in;
      for (std::size_t i = i_begin; i < i_end; ++i) {
        const double* ip = xd + (b * C_in + i) * plane;
        const double* wk = wd + (depthwise ? o : o * C_in + i) * k * k;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double wv = wk[ky * k + kx];
            if (wv == 0.0) continue;
            shifted_axpy(op, ip, wv, static_cast<std::ptrdiff_t>(ky) - pad,
                         static_cast<std::ptrdiff_t>(kx) - pad, Hs, Ws);
          }
        }
      }
    }
  });

  return record_op(
      "conv2d", Shape{B, C_out, H, W}, std::move(out), {x, w, bias},
      [=](std::span<const double> g, std::span<const double>) {
        auto gx = grad_sink(x);
        auto gw = grad_sink(w);
        auto gb = grad_sink(bias);
        const double* xd = x.data().data();
        const double* wd = w.data().data();
        if (!gb.empty()) {
          for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t o = 0; o < C_out; ++o) {
              gb[o] += pairwise_sum(g.subspan((b * C_out + o) * plane, plane));
            }
          }
        }
        if (!gw.empty()) {
          parallel_for(C_out, [&](std::size_t o0, std::size_t o1) {
            for (std::size_t o = o0; o < o1; ++o) {
              const std::size_t i_begin = depthwise ? o : 0;
              const std::size_t i_end = depthwise ? o + 1 : C_in;
              for (std::size_t i = i_begin; i < i_end; ++i) {
                double* gk = gw.data() + (depthwise ? o : o * C_in + i) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    double s = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                      s += shifted_dot(g.data() + (b * C_out + o) * plane,
                                       xd + (b * C_in + i) * plane,
                                       static_cast<std::ptrdiff_t>(ky) - pad,
                                       static_cast<std::ptrdiff_t>(kx) - pad, Hs, Ws);
                    }
                    gk[ky * k + kx] += s;
                  }
                }
              }
            }
          });
        }
        if (!gx.empty()) {
          // gx[i] at (y+dy, x+dx) += w · g[o] at (y, x): a shift by (−dy, −dx).
          parallel_for(B * C_in, [&](std::size_t begin, std::size_t end) {
            for (std::size_t bi = begin; bi < end; ++bi) {
              const std::size_t b = bi / C_in, i = bi % C_in;
              double* gxp = gx.data() + bi * plane;
              const std::size_t o_begin = depthwise ? i : 0;
              const std::size_t o_end = depthwise ? i + 1 : C_out;
              for (std::size_t o = o_begin; o < o_end; ++o) {
                const double* gp = g.data() + (b * C_out + o) * plane;
                const double* wk = wd + (depthwise ? o : o * C_in + i) * k * k;
                for (std::size_t ky = 0; ky < k; ++ky) {
                  for (std::size_t kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    if (wv == 0.0) continue;
                    shifted_axpy(gxp, gp, wv, pad - static_cast<std::ptrdiff_t>(ky),
                                 pad - static_cast<std::ptrdiff_t>(kx), Hs, Ws);
                  }
                }
              }
            }
          });
        }
      });
}

LayerNormParams LayerNormParams::init(std::size_t channels, double epsilon) {
  if (!(epsilon > 0.0)) throw NumericError("layernorm epsilon must be positive");
  LayerNormParams p;
  p.gamma = Tensor::parameter({channels}, std::vector<double>(channels, 1.0));
  p.beta = Tensor::parameter({channels}, std::vector<double>(channels, 0.0));
  p.epsilon = epsilon;
  return p;
}

void LayerNormParams::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

Tensor layernorm(const Tensor& x, const LayerNormParams& p) {
  const std::size_t C = p.gamma.numel();
  if (x.dim() == 0 || x.shape().back() != C) {
    throw ShapeError("layernorm expects last dimension " + std::to_string(C) + ", got " +
                     shape_str(x.shape()));
  }
  if (!(p.epsilon > 0.0)) throw NumericError("layernorm epsilon must be positive");
  const std::size_t rows = x.numel() / C;
  const auto xd = x.data();
  const auto gd = p.gamma.data();
  const auto bd = p.beta.data();
  std::vector<double> out(xd.size());
  std::vector<double> xhat(xd.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * C;
    double mu = 0.0;
    for (std::size_t c = 0; c < C; ++c) mu += in[c];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::size_t c = 0; c < C; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<double>(C);
    rstd[r] = 1.0 / std::sqrt(var + p.epsilon);
    for (std::size_t c = 0; c < C; ++c) {
      xhat[r * C + c] = (in[c] - mu) * rstd[r];
      out[r * C + c] = xhat[r * C + c] * gd[c] + bd[c];
    }
  }
  Tensor gamma = p.gamma, beta = p.beta;
  return record_op(
      "layernorm", x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, C, rows, xhat = std::move(xhat), rstd = std::move(rstd)](
          std::span<const double> g, std::span<const double>) {
        auto gx = grad_sink(x);
        auto gg = grad_sink(gamma);
        auto gb = grad_sink(beta);
        const auto gd = gamma.data();
        std::vector<double> gxhat(C);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* go = g.data() + r * C;
          const double* xh = xhat.data() + r * C;
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t c = 0; c < C; ++c) {
            if (!gg.empty()) gg[c] += go[c] * xh[c];
            if (!gb.empty()) gb[c] += go[c];
            gxhat[c] = go[c] * gd[c];
            m1 += gxhat[c];
            m2 += gxhat[c] * xh[c];
          }
          if (gx.empty()) continue;
          m1 /= static_cast<double>(C);
          m2 /= static_cast<double>(C);
          for (std::size_t c = 0; c < C; ++c) {
            gx[r * C + c] += rstd[r] * (gxhat[c] - m1 - xh[c] * m2);
          }
        }
      });
}

Tensor to_channels_last(const Tensor& x) {
  if (x.dim() != 4) throw ShapeError("expected B×C×H×W, got " + shape_str(x.shape()));
  return permute(x, {0, 2, 3, 1});
}

Tensor to_channels_first(const Tensor& x) {
  if (x.dim() != 4) throw ShapeError("expected B×H×W×C, got " + shape_str(x.shape()));
  return permute(x, {0, 3, 1, 2});
}

Tensor layernorm_channels(const Tensor& x, const LayerNormParams& p) {
  return to_channels_first(layernorm(to_channels_last(x), p));
}

MlpParams MlpParams::init(Rng& rng, std::size_t channels, double hidden_ratio) {
  const auto hidden = static_cast<std::size_t>(std::ceil(hidden_ratio * static_cast<double>(channels)));
  MlpParams p;
  p.fc1 = Linear::init(rng, channels, std::max<std::size_t>(1, hidden));
  p.fc2 = Linear::init(rng, std::max<std::size_t>(1, hidden), channels);
  return p;
}

void MlpParams::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Tensor mlp(const Tensor& x, const MlpParams& p) { return linear(silu(linear(x, p.fc1)), p.fc2); }

AttentionParams AttentionParams::init(Rng& rng, std::size_t dim, std::size_t heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("attention dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.qkv = Linear::init(rng, dim, 3 * dim);
  p.proj = Linear::init(rng, dim, dim);
  p.heads = heads;
  return p;
}

void AttentionParams::collect(const std::string& prefix, ParamList& out) const {
  qkv.collect(prefix + ".qkv", out);
  proj.collect(prefix + ".proj", out);
}

Tensor mhsa(const Tensor& tokens, const AttentionParams& p, Tensor* attention) {
  if (tokens.dim() != 3) throw ShapeError("mhsa expects B×T×D, got " + shape_str(tokens.shape()));
  const std::size_t B = tokens.size(0), T = tokens.size(1), D = tokens.size(2);
  const std::size_t h = p.heads;
  if (h == 0 || D % h != 0) {
    throw ShapeError("mhsa: embedding dim " + std::to_string(D) + " not divisible by " +
                     std::to_string(h) + " heads");
  }
  const std::size_t dh = D / h;
  Tensor qkv = reshape(linear(tokens, p.qkv), {B, T, 3, h, dh});
  Tensor split = permute(qkv, {2, 0, 3, 1, 4});  // [3,B,h,T,dh]
  Tensor q = reshape(slice0(split, 0, 1), {B * h, T, dh});
  Tensor k = reshape(slice0(split, 1, 2), {B * h, T, dh});
  Tensor v = reshape(slice0(split, 2, 3), {B * h, T, dh});
  Tensor weights = softmax(scale(bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh))));
  if (attention) *attention = weights;
  Tensor ctx = reshape(bmm(weights, v), {B, h, T, dh});
  ctx = reshape(permute(ctx, {0, 2, 1, 3}), {B, T, D});
  return linear(ctx, p.proj);
}

}  // namespace vamamba
