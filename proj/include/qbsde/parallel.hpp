#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace qbsde {

/// Process-wide worker count used by the Monte Carlo and path routines.
/// 0 means "use std::thread::hardware_concurrency()".
void set_threads(std::size_t n) noexcept;
std::size_t threads() noexcept;

/// Runs body(begin, end) over fixed chunks of [0, count). Chunk boundaries do
/// not depend on the worker count, so any per-chunk output is reproducible.
void parallel_for(std::size_t count, std::size_t chunk,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// Pairwise (cascade) summation; the reduction tree depends only on size.
double pairwise_sum(std::span<const double> values) noexcept;

}  // namespace qbsde
