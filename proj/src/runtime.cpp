#include "smile/runtime.hpp"

#include <malloc.h>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace smile {

void configure_process() {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#if defined(__SSE__)
  // FTZ | DAZ
  _mm_setcsr(_mm_getcsr() | 0x8040);
#endif
}

}  // namespace smile
