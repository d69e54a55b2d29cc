#pragma once

#include <cstddef>
#include <functional>

namespace kcsc {

/// Caps the worker pool used by parallel_for; 0 means hardware concurrency.
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs fn(i) for i in [0, n). Exceptions from workers are rethrown (first wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace kcsc
