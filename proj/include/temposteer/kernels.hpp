#pragma once

#include <cstddef>

// Data-parallel inner loops used by the model, the sampler and the probe.
// Each kernel has a scalar reference implementation and an AVX2 variant;
// the active set is chosen once at startup from cpuid. kernels_scalar()
// stays reachable so tests can check the two paths against each other.

namespace temposteer::kernels {

struct Ops {
    // y += a * x
    void (*axpy)(float a, const float* x, float* y, std::size_t n);
    float (*dot)(const float* x, const float* y, std::size_t n);
    float (*sum)(const float* x, std::size_t n);
    // C[m x n] (+)= A[m x k] * B[k x n], all row-major
    void (*gemm_nn)(const float* A, const float* B, float* C,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
    // C[m x n] (+)= A[m x k] * B[n x k]^T
    void (*gemm_nt)(const float* A, const float* B, float* C,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
    // C[k x n] (+)= A[m x k]^T * B[m x n]
    void (*gemm_tn)(const float* A, const float* B, float* C,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate);
    // in-place softmax over a contiguous row, after scaling by `scale`
    void (*softmax_row)(float* x, std::size_t n, float scale);
    void (*add)(const float* x, const float* y, float* out, std::size_t n);
    void (*mul)(const float* x, const float* y, float* out, std::size_t n);
    void (*scale)(float a, float* x, std::size_t n);
};

const Ops& active();        // dispatched set (AVX2 when available)
const Ops& scalar_ref();    // always the scalar path
const char* active_name();  // "avx2" or "scalar"

}  // namespace temposteer::kernels
