#pragma once

#include <cstddef>
#include <functional>

namespace vamamba {

/// Worker count for internal kernels: VAMAMBA_THREADS when set (≥1),
/// otherwise 1. Read once per process.
std::size_t kernel_threads();
void set_kernel_threads(std::size_t threads);

/// Splits [0, count) into contiguous chunks, one per worker. Each output
/// element must be owned by exactly one index so results do not depend on
/// the split.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t begin, std::size_t end)>& body);

}  // namespace vamamba
