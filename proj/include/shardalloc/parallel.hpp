#pragma once

#include <cstddef>
#include <functional>

namespace shardalloc {

/// Worker count from SHARDALLOC_THREADS (0 or unset = hardware concurrency).
unsigned worker_count();

/// Runs body(i) for i in [0, count) on up to worker_count() threads.  Work is
/// handed out by index, so callers writing into slot i get results that are
/// independent of scheduling.  The first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

} // namespace shardalloc
