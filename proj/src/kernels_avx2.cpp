#include "temposteer/kernels.hpp"

#include <cmath>
#include <cstring>
#include <immintrin.h>

namespace temposteer::kernels {
namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

void axpy_avx2(float a, const float* x, float* y, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
    float s = hsum256(acc);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

float sum_avx2(const float* x, std::size_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum256(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

// saxpy-style update keeps B rows streaming; two A rows per pass reuse each B row.
void gemm_nn_avx2(const float* A, const float* B, float* C,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, m * n * sizeof(float));
    std::size_t i = 0;
    for (; i + 2 <= m; i += 2) {
        const float* a0 = A + i * k;
        const float* a1 = a0 + k;
        float* c0 = C + i * n;
        float* c1 = c0 + n;
        for (std::size_t p = 0; p < k; ++p) {
            const __m256 v0 = _mm256_set1_ps(a0[p]);
            const __m256 v1 = _mm256_set1_ps(a1[p]);
            const float* b = B + p * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                const __m256 vb = _mm256_loadu_ps(b + j);
                _mm256_storeu_ps(c0 + j, _mm256_fmadd_ps(v0, vb, _mm256_loadu_ps(c0 + j)));
                _mm256_storeu_ps(c1 + j, _mm256_fmadd_ps(v1, vb, _mm256_loadu_ps(c1 + j)));
            }
            for (; j < n; ++j) {
                c0[j] += a0[p] * b[j];
                c1[j] += a1[p] * b[j];
            }
        }
    }
    for (; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const __m256 va = _mm256_set1_ps(a[p]);
            const float* b = B + p * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8)
                _mm256_storeu_ps(c + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(b + j),
                                                        _mm256_loadu_ps(c + j)));
            for (; j < n; ++j) c[j] += a[p] * b[j];
        }
    }
}

void gemm_nt_avx2(const float* A, const float* B, float* C,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        float* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const float s = dot_avx2(a, B + j * k, k);
            c[j] = accumulate ? c[j] + s : s;
        }
    }
}

void gemm_tn_avx2(const float* A, const float* B, float* C,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) std::memset(C, 0, k * n * sizeof(float));
    for (std::size_t i = 0; i < m; ++i) {
        const float* a = A + i * k;
        const float* b = B + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const __m256 va = _mm256_set1_ps(a[p]);
            float* c = C + p * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8)
                _mm256_storeu_ps(c + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(b + j),
                                                        _mm256_loadu_ps(c + j)));
            for (; j < n; ++j) c[j] += a[p] * b[j];
        }
    }
}

void softmax_row_avx2(float* x, std::size_t n, float scale) {
    float mx = x[0] * scale;
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i] * scale);
    float s = 0.f;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::exp(x[i] * scale - mx);
        s += x[i];
    }
    const float inv = 1.f / s;
    const __m256 vinv = _mm256_set1_ps(inv);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), vinv));
    for (; i < n; ++i) x[i] *= inv;
}

void add_avx2(const float* x, const float* y, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_avx2(const float* x, const float* y, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_avx2(float a, float* x, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), va));
    for (; i < n; ++i) x[i] *= a;
}

}  // namespace

const Ops& avx2_ops() {
    static const Ops ops{axpy_avx2, dot_avx2, sum_avx2,
                         gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2,
                         softmax_row_avx2, add_avx2, mul_avx2, scale_avx2};
    return ops;
}

}  // namespace temposteer::kernels
