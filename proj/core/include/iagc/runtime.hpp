#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "iagc/threading.hpp"

namespace iagc {

// Graph buffers are reallocated every step and many exceed glibc's mmap
// threshold, so each free returns pages to the OS and each step refaults
// them. Raising the thresholds keeps those buffers in the heap for reuse.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

// Process-wide setup for heavy numeric work: allocator reuse plus worker
// threads (0 = hardware concurrency).
inline void runtime_init(unsigned threads = 0) {
    tune_allocator();
    if (threads > 0) ThreadPool::instance().set_threads(threads);
}

}  // namespace iagc
