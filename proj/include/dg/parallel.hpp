#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace dg {

// Worker count for data-parallel sections: DG_THREADS when set, otherwise
// the hardware concurrency. Results must not depend on scheduling, so every
// parallel_for body writes to slots owned by its own index.
int worker_count();

// Runs fn(i) for i in [0, n). The body must only touch state private to
// index i; any cross-index reduction happens after the call, in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dg
