#include "gf/kernels.hpp"

#include <cstdlib>
#include <cstring>

#include "kernels_detail.hpp"

namespace gf::kern {

namespace {

Isa detect_initial() {
    const char* env = std::getenv("GF_KERNELS");
    if (env) {
        if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Isa::Avx2;
    }
    return avx2_supported() ? Isa::Avx2 : Isa::Scalar;
}

Isa& isa_state() {
    static Isa isa = detect_initial();
    return isa;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() { return isa_state(); }

void set_isa(Isa isa) {
    if (isa == Isa::Avx2 && !avx2_supported()) isa = Isa::Scalar;
    isa_state() = isa;
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

namespace d = detail;

#define GF_DISPATCH_F32(fn, call_avx2, call_scalar) \
    if (isa_state() == Isa::Avx2) { call_avx2; } else { call_scalar; }

void gemm_nn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc) {
    GF_DISPATCH_F32(gemm_nn, return d::avx2::gemm_nn_f32(M, N, K, A, B, C, acc),
                    return d::scalar::gemm_nn<float>(M, N, K, A, B, C, acc))
}
void gemm_nn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc) {
    GF_DISPATCH_F32(gemm_nn, return d::avx2::gemm_nn_f64(M, N, K, A, B, C, acc),
                    return d::scalar::gemm_nn<double>(M, N, K, A, B, C, acc))
}
void gemm_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc) {
    GF_DISPATCH_F32(gemm_nt, return d::avx2::gemm_nt_f32(M, N, K, A, B, C, acc),
                    return d::scalar::gemm_nt<float>(M, N, K, A, B, C, acc))
}
void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc) {
    GF_DISPATCH_F32(gemm_nt, return d::avx2::gemm_nt_f64(M, N, K, A, B, C, acc),
                    return d::scalar::gemm_nt<double>(M, N, K, A, B, C, acc))
}
void gemm_tn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc) {
    GF_DISPATCH_F32(gemm_tn, return d::avx2::gemm_tn_f32(M, N, K, A, B, C, acc),
                    return d::scalar::gemm_tn<float>(M, N, K, A, B, C, acc))
}
void gemm_tn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc) {
    GF_DISPATCH_F32(gemm_tn, return d::avx2::gemm_tn_f64(M, N, K, A, B, C, acc),
                    return d::scalar::gemm_tn<double>(M, N, K, A, B, C, acc))
}

void add(int64_t n, const float* x, const float* y, float* out) {
    GF_DISPATCH_F32(add, return d::avx2::add_f32(n, x, y, out), return d::scalar::add<float>(n, x, y, out))
}
void add(int64_t n, const double* x, const double* y, double* out) {
    GF_DISPATCH_F32(add, return d::avx2::add_f64(n, x, y, out), return d::scalar::add<double>(n, x, y, out))
}
void mul(int64_t n, const float* x, const float* y, float* out) {
    GF_DISPATCH_F32(mul, return d::avx2::mul_f32(n, x, y, out), return d::scalar::mul<float>(n, x, y, out))
}
void mul(int64_t n, const double* x, const double* y, double* out) {
    GF_DISPATCH_F32(mul, return d::avx2::mul_f64(n, x, y, out), return d::scalar::mul<double>(n, x, y, out))
}
void axpy(int64_t n, float a, const float* x, float* y) {
    GF_DISPATCH_F32(axpy, return d::avx2::axpy_f32(n, a, x, y), return d::scalar::axpy<float>(n, a, x, y))
}
void axpy(int64_t n, double a, const double* x, double* y) {
    GF_DISPATCH_F32(axpy, return d::avx2::axpy_f64(n, a, x, y), return d::scalar::axpy<double>(n, a, x, y))
}
void scale(int64_t n, float a, float* x) {
    GF_DISPATCH_F32(scale, return d::avx2::scale_f32(n, a, x), return d::scalar::scale<float>(n, a, x))
}
void scale(int64_t n, double a, double* x) {
    GF_DISPATCH_F32(scale, return d::avx2::scale_f64(n, a, x), return d::scalar::scale<double>(n, a, x))
}
float dot(int64_t n, const float* x, const float* y) {
    GF_DISPATCH_F32(dot, return d::avx2::dot_f32(n, x, y), return d::scalar::dot<float>(n, x, y))
}
double dot(int64_t n, const double* x, const double* y) {
    GF_DISPATCH_F32(dot, return d::avx2::dot_f64(n, x, y), return d::scalar::dot<double>(n, x, y))
}
float sum(int64_t n, const float* x) {
    GF_DISPATCH_F32(sum, return d::avx2::sum_f32(n, x), return d::scalar::sum<float>(n, x))
}
double sum(int64_t n, const double* x) {
    GF_DISPATCH_F32(sum, return d::avx2::sum_f64(n, x), return d::scalar::sum<double>(n, x))
}
void relu(int64_t n, const float* x, float* out) {
    GF_DISPATCH_F32(relu, return d::avx2::relu_f32(n, x, out), return d::scalar::relu<float>(n, x, out))
}
void relu(int64_t n, const double* x, double* out) {
    GF_DISPATCH_F32(relu, return d::avx2::relu_f64(n, x, out), return d::scalar::relu<double>(n, x, out))
}

#undef GF_DISPATCH_F32

}  // namespace gf::kern
