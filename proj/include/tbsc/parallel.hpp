#pragma once

#include <cstddef>
#include <functional>

namespace tbsc {

/// Worker cap used by parallel_for. 0 means "use TBSC_THREADS if set, else
/// hardware concurrency".
void set_thread_cap(std::size_t cap);
std::size_t thread_cap();

/// Runs body(i) for i in [0, n). Work items must write only to their own
/// slots; results are then independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tbsc
