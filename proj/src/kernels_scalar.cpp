#include "kernels_detail.hpp"

#include <cstring>

namespace gf::kern::detail::scalar {

template <class T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool acc) {
    if (!acc) std::memset(C, 0, static_cast<size_t>(M * N) * sizeof(T));
    for (int64_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        const T* a = A + i * K;
        for (int64_t k = 0; k < K; ++k) {
            T av = a[k];
            const T* b = B + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <class T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool acc) {
    for (int64_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        T* c = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T s = 0;
            for (int64_t k = 0; k < K; ++k) s += a[k] * b[k];
            c[j] = acc ? c[j] + s : s;
        }
    }
}

template <class T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool acc) {
    if (!acc) std::memset(C, 0, static_cast<size_t>(M * N) * sizeof(T));
    for (int64_t k = 0; k < K; ++k) {
        const T* a = A + k * M;
        const T* b = B + k * N;
        for (int64_t i = 0; i < M; ++i) {
            T av = a[i];
            T* c = C + i * N;
            for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <class T>
void add(int64_t n, const T* x, const T* y, T* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

template <class T>
void mul(int64_t n, const T* x, const T* y, T* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

template <class T>
void axpy(int64_t n, T a, const T* x, T* y) {
    for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void scale(int64_t n, T a, T* x) {
    for (int64_t i = 0; i < n; ++i) x[i] *= a;
}

template <class T>
T dot(int64_t n, const T* x, const T* y) {
    T s = 0;
    for (int64_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

template <class T>
T sum(int64_t n, const T* x) {
    T s = 0;
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

template <class T>
void relu(int64_t n, const T* x, T* out) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

#define GF_INSTANTIATE(T)                                                                  \
    template void gemm_nn<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);     \
    template void gemm_nt<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);     \
    template void gemm_tn<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);     \
    template void add<T>(int64_t, const T*, const T*, T*);                                 \
    template void mul<T>(int64_t, const T*, const T*, T*);                                 \
    template void axpy<T>(int64_t, T, const T*, T*);                                       \
    template void scale<T>(int64_t, T, T*);                                                \
    template T dot<T>(int64_t, const T*, const T*);                                        \
    template T sum<T>(int64_t, const T*);                                                  \
    template void relu<T>(int64_t, const T*, T*);

GF_INSTANTIATE(float)
GF_INSTANTIATE(double)
#undef GF_INSTANTIATE

}  // namespace gf::kern::detail::scalar
