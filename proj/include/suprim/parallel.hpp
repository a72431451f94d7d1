#pragma once

#include <cstddef>
#include <functional>

namespace suprim {

/// Worker cap: SUPRIM_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(begin, end) over `workers` contiguous chunks of [0, n). Chunk
/// boundaries depend only on n and workers, so slot-writing loops give the
/// same result for any schedule. The first exception (by chunk) is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                  std::size_t workers = worker_count());

}  // namespace suprim
