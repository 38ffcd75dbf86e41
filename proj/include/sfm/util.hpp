#ifndef SFM_UTIL_HPP
#define SFM_UTIL_HPP

#include <functional>

namespace sfm {

// Runs fn(0..n-1), split across `threads` std::threads when threads > 1.
// Tasks must write to disjoint slots; the first exception is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace sfm

#endif
