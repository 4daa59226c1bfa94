#pragma once

#include <cstddef>
#include <functional>

namespace cpal {

// Runs fn(0..count-1) on up to `threads` workers. Each index must write only
// its own slots so results do not depend on scheduling. fn exceptions are
// rethrown on the calling thread (first one wins).
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

// Worker cap: explicit request wins, else the CPAL_THREADS environment
// variable, else the hardware count (at least 1).
unsigned resolve_threads(unsigned requested);

} // namespace cpal
