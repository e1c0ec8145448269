#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vamamba/tensor.hpp"

namespace vamamba {

enum class BinaryOp { add, sub, mul, div };
enum class UnaryOp { neg, exp, sigmoid, silu, softplus, abs, square };

/// Numpy-style broadcasting: shapes aligned from the trailing dimension,
/// each pair equal or one of them 1.
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(UnaryOp op, const Tensor& x);

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::div, a, b); }
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

inline Tensor neg(const Tensor& x) { return elementwise(UnaryOp::neg, x); }
inline Tensor exp(const Tensor& x) { return elementwise(UnaryOp::exp, x); }
inline Tensor sigmoid(const Tensor& x) { return elementwise(UnaryOp::sigmoid, x); }
inline Tensor silu(const Tensor& x) { return elementwise(UnaryOp::silu, x); }
inline Tensor softplus(const Tensor& x) { return elementwise(UnaryOp::softplus, x); }
inline Tensor abs(const Tensor& x) { return elementwise(UnaryOp::abs, x); }
inline Tensor square(const Tensor& x) { return elementwise(UnaryOp::square, x); }

Tensor scale(const Tensor& x, double factor);
Tensor ones_like(const Tensor& x);
Tensor zeros_like(const Tensor& x);

/// Pairwise (cascade) summation; the reduction order every sum in this
/// library uses.
double pairwise_sum(std::span<const double> values);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product over the leading dimension: [B×m×k]·[B×k×p] (or with
/// `transpose_b`, [B×m×k]·[B×p×k]ᵀ).
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, std::span<const std::size_t> axes);
Tensor permute(const Tensor& x, std::initializer_list<std::size_t> axes);

/// out[i] = x[index[i]] (flat). Indices may repeat; backward scatter-adds.
Tensor gather(const Tensor& x, std::vector<std::size_t> index, Shape out_shape);

/// Contiguous slice [begin, end) along axis 0.
Tensor slice0(const Tensor& x, std::size_t begin, std::size_t end);

/// Softmax along the last dimension with max subtraction.
Tensor softmax(const Tensor& x);

}  // namespace vamamba
