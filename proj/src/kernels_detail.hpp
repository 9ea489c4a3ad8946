#pragma once

#include <cstdint>

// Internal: per-ISA kernel entry points. Public dispatch lives in kernels.cpp.
namespace gf::kern::detail {

namespace scalar {
template <class T> void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool acc);
template <class T> void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool acc);
template <class T> void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool acc);
template <class T> void add(int64_t n, const T* x, const T* y, T* out);
template <class T> void mul(int64_t n, const T* x, const T* y, T* out);
template <class T> void axpy(int64_t n, T a, const T* x, T* y);
template <class T> void scale(int64_t n, T a, T* x);
template <class T> T dot(int64_t n, const T* x, const T* y);
template <class T> T sum(int64_t n, const T* x);
template <class T> void relu(int64_t n, const T* x, T* out);
}  // namespace scalar

namespace avx2 {
void gemm_nn_f32(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc);
void gemm_nt_f32(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc);
void gemm_tn_f32(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc);
void gemm_nn_f64(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc);
void gemm_nt_f64(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc);
void gemm_tn_f64(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc);
void add_f32(int64_t n, const float* x, const float* y, float* out);
void add_f64(int64_t n, const double* x, const double* y, double* out);
void mul_f32(int64_t n, const float* x, const float* y, float* out);
void mul_f64(int64_t n, const double* x, const double* y, double* out);
void axpy_f32(int64_t n, float a, const float* x, float* y);
void axpy_f64(int64_t n, double a, const double* x, double* y);
void scale_f32(int64_t n, float a, float* x);
void scale_f64(int64_t n, double a, double* x);
float dot_f32(int64_t n, const float* x, const float* y);
double dot_f64(int64_t n, const double* x, const double* y);
float sum_f32(int64_t n, const float* x);
double sum_f64(int64_t n, const double* x);
void relu_f32(int64_t n, const float* x, float* out);
void relu_f64(int64_t n, const double* x, double* out);
}  // namespace avx2

}  // namespace gf::kern::detail
