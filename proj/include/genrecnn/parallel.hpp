#pragma once

#include <cstddef>
#include <functional>

namespace genrecnn {

/// Worker cap: GENRE_CNN_THREADS if set to a positive integer, otherwise the
/// number of logical cores.
std::size_t thread_budget();

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one per
/// worker; with max_threads == 1 (or n == 1) everything runs on the calling
/// thread. fn must not touch state shared across indices.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  std::size_t max_threads = 0);

}  // namespace genrecnn
