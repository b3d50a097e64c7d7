#pragma once

#include <cstdint>
#include <functional>

namespace picg {

// Number of worker threads used for per-sample parallelism. Defaults to the
// hardware count; PICG_THREADS overrides it.
int worker_count();

// Runs fn(i) for i in [0, n). Work items must be independent; results the
// caller aggregates afterwards must be stored per-index so reductions can
// run in index order. Outputs are identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace picg
