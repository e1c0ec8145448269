#pragma once

#include <complex>
#include <span>
#include <vector>

namespace vamamba::dft {

using Complex = std::complex<double>;

bool is_power_of_two(std::size_t n);

/// Unnormalized 1-D DFT, X_k = Σ x_n e^{sign·2πi·kn/N}; sign −1 is the
/// forward transform.
void naive(std::span<Complex> values, int sign);
/// Iterative radix-2 Cooley–Tukey; requires a power-of-two length.
void radix2(std::span<Complex> values, int sign);
/// radix2 for power-of-two lengths, naive otherwise.
void transform(std::span<Complex> values, int sign);

/// In-place separable 2-D transform of a row-major H×W plane.
void transform2d(std::span<Complex> plane, std::size_t H, std::size_t W, int sign);

}  // namespace vamamba::dft
