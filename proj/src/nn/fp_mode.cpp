#include "pcb/nn/fp_mode.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace pcb::nn {

#if defined(__SSE2__)

namespace {

// FTZ (bit 15) and DAZ (bit 6) of MXCSR.
constexpr unsigned kFlushBits = 0x8040u;

void set_all_threads(unsigned csr) {
    _mm_setcsr(csr);
#pragma omp parallel
    _mm_setcsr(csr);
}

}  // namespace

FlushDenormals::FlushDenormals() : saved_(_mm_getcsr()) { set_all_threads(saved_ | kFlushBits); }
FlushDenormals::~FlushDenormals() { set_all_threads(saved_); }

#else

FlushDenormals::FlushDenormals() = default;
FlushDenormals::~FlushDenormals() = default;

#endif

}  // namespace pcb::nn
