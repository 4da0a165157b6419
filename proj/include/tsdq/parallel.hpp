#pragma once

#include <cstddef>
#include <functional>

namespace tsdq {

/// Process-wide worker cap used by parallel_for. 1 disables threading.
void set_max_workers(int n);
int max_workers();

/// Runs fn(i) for i in [0, n). Each index must write only to its own output
/// slot; reductions happen after the call in index order, so results are
/// identical for every worker count. Nested calls run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tsdq
