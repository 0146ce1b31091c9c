#pragma once

#include <cstddef>
#include <functional>

namespace pillarvote {

// Number of workers used when a config asks for "auto" (0): the
// PILLARVOTE_THREADS environment variable if set, else hardware concurrency.
int default_thread_count();

// Runs body(i) for every i in [0, count) on up to `threads` workers
// (0 = default_thread_count()). Iterations must be independent; the caller
// is responsible for writing results into per-index slots so that output
// does not depend on scheduling.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace pillarvote
