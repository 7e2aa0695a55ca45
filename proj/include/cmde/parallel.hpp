#pragma once

#include <cstddef>
#include <functional>

namespace cmde {

// Process-wide worker count; defaults to std::thread::hardware_concurrency(),
// which set_thread_count(0) restores.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

// Runs body(i) for every i in [0, n). Indices are handed out in contiguous
// chunks; callers write results into index-owned slots and reduce afterwards
// in index order, which keeps every result independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace cmde
