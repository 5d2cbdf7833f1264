#pragma once

#include <cstddef>
#include <functional>

namespace pmuplace {

/// Thread count from PMUPLACE_THREADS, else 1.
unsigned default_thread_count();

/// Runs body(i) for i in [0, count) on up to `threads` workers. Each index
/// runs exactly once; callers write results into per-index slots and reduce
/// in index order afterwards. The first exception thrown is rethrown.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

} // namespace pmuplace
