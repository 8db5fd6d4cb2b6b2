#pragma once

namespace pcb::nn {

/// Flushes subnormal floats to zero on the calling thread and on the OpenMP
/// worker threads for the guard's lifetime, then restores the previous mode.
/// Adam's second moments and late-epoch gradients drift into the subnormal
/// range, where x86 arithmetic is an order of magnitude slower.
class FlushDenormals {
public:
    FlushDenormals();
    ~FlushDenormals();
    FlushDenormals(const FlushDenormals&) = delete;
    FlushDenormals& operator=(const FlushDenormals&) = delete;

private:
    unsigned saved_ = 0;
};

}  // namespace pcb::nn
