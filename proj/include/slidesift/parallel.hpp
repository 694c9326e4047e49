#pragma once

#include <cstddef>
#include <functional>

namespace slidesift {

// Process-wide ceiling on worker threads. 0 means "available parallelism".
void set_thread_limit(unsigned n);
unsigned thread_limit();

// Runs fn(i) for i in [0, n) on up to thread_limit() threads. Work items are
// handed out in contiguous blocks; fn must only write to state owned by i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace slidesift
