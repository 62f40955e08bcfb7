#pragma once

#include <cstddef>
#include <functional>

namespace nlinv {

/// Worker count: NLINV_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Chunks are disjoint, so results written per index are independent
/// of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace nlinv
