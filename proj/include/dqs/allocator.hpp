#ifndef DQS_ALLOCATOR_HPP
#define DQS_ALLOCATOR_HPP

// Process-wide allocator tuning for executables. Batch activations are a
// few hundred KiB; under glibc's default mmap threshold each temporary
// becomes a fresh mapping that is page-faulted in and unmapped again.

#include <cstdlib>  // defines __GLIBC__ on glibc

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dqs {

inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace dqs

#endif  // DQS_ALLOCATOR_HPP
