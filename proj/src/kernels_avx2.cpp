// AVX2/FMA kernel variants. Compiled with -mavx2 -mfma in its own TU; only
// reached through the runtime dispatcher when the CPU reports AVX2.
#include "kernels_detail.hpp"

#include <immintrin.h>

#include <cstring>

namespace gf::kern::detail::avx2 {

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

inline double hsum4(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    lo = _mm_hadd_pd(lo, lo);
    return _mm_cvtsd_f64(lo);
}

}  // namespace

void gemm_nn_f32(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc) {
    if (!acc) std::memset(C, 0, static_cast<size_t>(M * N) * sizeof(float));
    const int64_t NV = N & ~int64_t(15);  // 16-col tiles
    int64_t i = 0;
    for (; i + 4 <= M; i += 4) {
        for (int64_t j = 0; j < NV; j += 16) {
            float* c0 = C + (i + 0) * N + j;
            float* c1 = C + (i + 1) * N + j;
            float* c2 = C + (i + 2) * N + j;
            float* c3 = C + (i + 3) * N + j;
            __m256 r00 = _mm256_loadu_ps(c0), r01 = _mm256_loadu_ps(c0 + 8);
            __m256 r10 = _mm256_loadu_ps(c1), r11 = _mm256_loadu_ps(c1 + 8);
            __m256 r20 = _mm256_loadu_ps(c2), r21 = _mm256_loadu_ps(c2 + 8);
            __m256 r30 = _mm256_loadu_ps(c3), r31 = _mm256_loadu_ps(c3 + 8);
            for (int64_t k = 0; k < K; ++k) {
                const float* b = B + k * N + j;
                __m256 b0 = _mm256_loadu_ps(b);
                __m256 b1 = _mm256_loadu_ps(b + 8);
                __m256 a0 = _mm256_broadcast_ss(A + (i + 0) * K + k);
                __m256 a1 = _mm256_broadcast_ss(A + (i + 1) * K + k);
                __m256 a2 = _mm256_broadcast_ss(A + (i + 2) * K + k);
                __m256 a3 = _mm256_broadcast_ss(A + (i + 3) * K + k);
                r00 = _mm256_fmadd_ps(a0, b0, r00);
                r01 = _mm256_fmadd_ps(a0, b1, r01);
                r10 = _mm256_fmadd_ps(a1, b0, r10);
                r11 = _mm256_fmadd_ps(a1, b1, r11);
                r20 = _mm256_fmadd_ps(a2, b0, r20);
                r21 = _mm256_fmadd_ps(a2, b1, r21);
                r30 = _mm256_fmadd_ps(a3, b0, r30);
                r31 = _mm256_fmadd_ps(a3, b1, r31);
            }
            _mm256_storeu_ps(c0, r00); _mm256_storeu_ps(c0 + 8, r01);
            _mm256_storeu_ps(c1, r10); _mm256_storeu_ps(c1 + 8, r11);
            _mm256_storeu_ps(c2, r20); _mm256_storeu_ps(c2 + 8, r21);
            _mm256_storeu_ps(c3, r30); _mm256_storeu_ps(c3 + 8, r31);
        }
        // column remainder
        for (int64_t r = 0; r < 4; ++r) {
            float* c = C + (i + r) * N;
            const float* a = A + (i + r) * K;
            for (int64_t k = 0; k < K; ++k) {
                float av = a[k];
                const float* b = B + k * N;
                for (int64_t j = NV; j < N; ++j) c[j] += av * b[j];
            }
        }
    }
    for (; i < M; ++i) {
        float* c = C + i * N;
        const float* a = A + i * K;
        for (int64_t k = 0; k < K; ++k) {
            __m256 av = _mm256_broadcast_ss(a + k);
            const float* b = B + k * N;
            int64_t j = 0;
            for (; j + 8 <= N; j += 8)
                _mm256_storeu_ps(c + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(b + j), _mm256_loadu_ps(c + j)));
            for (; j < N; ++j) c[j] += a[k] * b[j];
        }
    }
}

void gemm_nt_f32(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc) {
    const int64_t KV = K & ~int64_t(7);
    for (int64_t i = 0; i < M; ++i) {
        const float* a = A + i * K;
        float* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const float* b = B + j * K;
            __m256 s0 = _mm256_setzero_ps();
            __m256 s1 = _mm256_setzero_ps();
            int64_t k = 0;
            for (; k + 16 <= K; k += 16) {
                s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
                s1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k + 8), _mm256_loadu_ps(b + k + 8), s1);
            }
            for (; k + 8 <= KV; k += 8)
                s0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + k), _mm256_loadu_ps(b + k), s0);
            float s = hsum8(_mm256_add_ps(s0, s1));
            for (; k < K; ++k) s += a[k] * b[k];
            c[j] = acc ? c[j] + s : s;
        }
    }
}

void gemm_tn_f32(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc) {
    if (!acc) std::memset(C, 0, static_cast<size_t>(M * N) * sizeof(float));
    for (int64_t k = 0; k < K; ++k) {
        const float* a = A + k * M;
        const float* b = B + k * N;
        for (int64_t i = 0; i < M; ++i) {
            __m256 av = _mm256_broadcast_ss(a + i);
            float* c = C + i * N;
            int64_t j = 0;
            for (; j + 8 <= N; j += 8)
                _mm256_storeu_ps(c + j, _mm256_fmadd_ps(av, _mm256_loadu_ps(b + j), _mm256_loadu_ps(c + j)));
            for (; j < N; ++j) c[j] += a[i] * b[j];
        }
    }
}

void gemm_nn_f64(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc) {
    if (!acc) std::memset(C, 0, static_cast<size_t>(M * N) * sizeof(double));
    for (int64_t i = 0; i < M; ++i) {
        double* c = C + i * N;
        const double* a = A + i * K;
        for (int64_t k = 0; k < K; ++k) {
            __m256d av = _mm256_broadcast_sd(a + k);
            const double* b = B + k * N;
            int64_t j = 0;
            for (; j + 4 <= N; j += 4)
                _mm256_storeu_pd(c + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j), _mm256_loadu_pd(c + j)));
            for (; j < N; ++j) c[j] += a[k] * b[j];
        }
    }
}

void gemm_nt_f64(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc) {
    for (int64_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            __m256d s0 = _mm256_setzero_pd();
            int64_t k = 0;
            for (; k + 4 <= K; k += 4)
                s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + k), _mm256_loadu_pd(b + k), s0);
            double s = hsum4(s0);
            for (; k < K; ++k) s += a[k] * b[k];
            c[j] = acc ? c[j] + s : s;
        }
    }
}

void gemm_tn_f64(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc) {
    if (!acc) std::memset(C, 0, static_cast<size_t>(M * N) * sizeof(double));
    for (int64_t k = 0; k < K; ++k) {
        const double* a = A + k * M;
        const double* b = B + k * N;
        for (int64_t i = 0; i < M; ++i) {
            __m256d av = _mm256_broadcast_sd(a + i);
            double* c = C + i * N;
            int64_t j = 0;
            for (; j + 4 <= N; j += 4)
                _mm256_storeu_pd(c + j, _mm256_fmadd_pd(av, _mm256_loadu_pd(b + j), _mm256_loadu_pd(c + j)));
            for (; j < N; ++j) c[j] += a[i] * b[j];
        }
    }
}

void add_f32(int64_t n, const float* x, const float* y, float* out) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void add_f64(int64_t n, const double* x, const double* y, double* out) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_f32(int64_t n, const float* x, const float* y, float* out) {
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void mul_f64(int64_t n, const double* x, const double* y, double* out) {
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void axpy_f32(int64_t n, float a, const float* x, float* y) {
    __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64(int64_t n, double a, const double* x, double* y) {
    __m256d av = _mm256_set1_pd(a);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale_f32(int64_t n, float a, float* x) {
    __m256 av = _mm256_set1_ps(a);
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void scale_f64(int64_t n, double a, double* x) {
    __m256d av = _mm256_set1_pd(a);
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

float dot_f32(int64_t n, const float* x, const float* y) {
    __m256 s = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        s = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), s);
    float r = hsum8(s);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

double dot_f64(int64_t n, const double* x, const double* y) {
    __m256d s = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        s = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s);
    double r = hsum4(s);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

float sum_f32(int64_t n, const float* x) {
    __m256 s = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8) s = _mm256_add_ps(s, _mm256_loadu_ps(x + i));
    float r = hsum8(s);
    for (; i < n; ++i) r += x[i];
    return r;
}

double sum_f64(int64_t n, const double* x) {
    __m256d s = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4) s = _mm256_add_pd(s, _mm256_loadu_pd(x + i));
    double r = hsum4(s);
    for (; i < n; ++i) r += x[i];
    return r;
}

void relu_f32(int64_t n, const float* x, float* out) {
    __m256 z = _mm256_setzero_ps();
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_max_ps(z, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = x[i] > 0.f ? x[i] : 0.f;
}

void relu_f64(int64_t n, const double* x, double* out) {
    __m256d z = _mm256_setzero_pd();
    int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_max_pd(z, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace gf::kern::detail::avx2
