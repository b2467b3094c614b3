#pragma once

#include <cstddef>
#include <functional>

namespace byzfl {

/// Number of worker threads to use for a requested count; 0 means one per hardware thread.
int resolve_threads(int requested);

/// Reads BYZFL_THREADS (0 = auto). Unset or unparsable values mean auto.
int threads_from_environment();

/// Calls fn(i) for i in [0, n) on up to `threads` threads. The first exception thrown by any
/// call is rethrown after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace byzfl
