#pragma once

#include <cstddef>
#include <functional>

namespace linoss {

// Number of workers used when a caller passes 0.
std::size_t default_workers();

// Runs fn(i) for i in [0, n) on up to `workers` threads. Indices are dealt
// out in contiguous blocks; fn must not depend on which thread runs it.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace linoss
