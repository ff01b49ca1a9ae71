#pragma once

#include <cstddef>
#include <functional>

namespace subtomo {

// Runs fn(i) for every i in [0, count) on up to `threads` workers. The first
// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace subtomo
