#include "temposteer/kernels.hpp"

#include <cmath>
#include <cstring>

namespace temposteer::kernels {
namespace {

void axpy_scalar(float a, const float* x, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

float dot_scalar(const float* x, const float* y, std::size_t n) {
    float s = 0.f;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

float sum_scalar(const float* x, std::size_t n) {
    float s = 0.f;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void gemm_nn_scalar(const float* A, const float* B, float* C,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, m * n * sizeof(float));
    for (std::size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const float ap = a[p];
            const float* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += ap * b[j];
        }
    }
}

void gemm_nt_scalar(const float* A, const float* B, float* C,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const float* b = B + j * k;
            float s = 0.f;
            for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
            c[j] = accumulate ? c[j] + s : s;
        }
    }
}

void gemm_tn_scalar(const float* A, const float* B, float* C,
                    std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, k * n * sizeof(float));
    for (std::size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        const float* b = B + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const float ap = a[p];
            float* c = C + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += ap * b[j];
        }
    }
}

void softmax_row_scalar(float* x, std::size_t n, float scale) {
    float mx = x[0] * scale;
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i] * scale);
    float s = 0.f;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] * scale - mx);
        s += x[i];
    }
    const float inv = 1.f / s;
    for (std::size_t i = 0; i < n; ++i) x[i] *= inv;
}

void add_scalar(const float* x, const float* y, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_scalar(const float* x, const float* y, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_scalar(float a, float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

}  // namespace

const Ops& scalar_ref() {
    static const Ops ops{axpy_scalar, dot_scalar,  sum_scalar,
                         gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar,
                         softmax_row_scalar, add_scalar, mul_scalar, scale_scalar};
    return ops;
}

}  // namespace temposteer::kernels
