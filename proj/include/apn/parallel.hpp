#ifndef APN_PARALLEL_HPP_
#define APN_PARALLEL_HPP_

#include <cstddef>
#include <functional>

namespace apn {

// APN_THREADS if set to a positive integer, else hardware concurrency.
std::size_t thread_count_from_env();

// Runs fn(i) for i in [0, n) over up to `threads` workers. Each index is
// handled exactly once; callers write results to slot i. The first
// exception thrown by fn is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace apn

#endif  // APN_PARALLEL_HPP_
