#pragma once

#include <cstddef>
#include <functional>

namespace gausssurf {

/// Number of worker threads used by parallel_for. Initialized from the
/// GAUSSSURF_THREADS environment variable (default: hardware concurrency).
int num_threads();
/// n <= 0 restores the environment / hardware default.
void set_num_threads(int n);

/// Splits [0, n) into `chunks` contiguous ranges and runs fn(chunk, begin, end)
/// for each. The partition depends only on n and chunks, never on the thread
/// count, so per-chunk buffers reduced in chunk order give identical results
/// for any number of threads.
void parallel_chunks(std::size_t n, std::size_t chunks,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Convenience wrapper: fn(i) for every i in [0, n).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Default chunk count for deterministic reductions.
inline constexpr std::size_t kReductionChunks = 16;

} // namespace gausssurf
