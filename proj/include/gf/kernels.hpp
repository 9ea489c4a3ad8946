#pragma once

#include <cstdint>

// Data-parallel inner loops behind the tensor ops. Every kernel has a scalar
// reference implementation and an AVX2 variant; the active set is picked at
// runtime (GF_KERNELS=scalar|avx2 overrides autodetection). The two variants
// are equivalence-tested against each other in tests/test_kernels.cpp.
//
// All matrices are dense row-major and packed (ld == row length).
namespace gf::kern {

enum class Isa { Scalar, Avx2 };

bool avx2_supported();
Isa active_isa();
void set_isa(Isa isa);
const char* isa_name(Isa isa);

// C (MxN) = A (MxK) * B (KxN)        [+ C if acc]
void gemm_nn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc);
void gemm_nn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc);

// C (MxN) = A (MxK) * B^T (B is NxK) [+ C if acc]
void gemm_nt(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc);
void gemm_nt(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc);

// C (MxN) = A^T (A is KxM) * B (KxN) [+ C if acc]
void gemm_tn(int64_t M, int64_t N, int64_t K, const float* A, const float* B, float* C, bool acc);
void gemm_tn(int64_t M, int64_t N, int64_t K, const double* A, const double* B, double* C, bool acc);

void add(int64_t n, const float* x, const float* y, float* out);
void add(int64_t n, const double* x, const double* y, double* out);
void mul(int64_t n, const float* x, const float* y, float* out);
void mul(int64_t n, const double* x, const double* y, double* out);

// y += a * x
void axpy(int64_t n, float a, const float* x, float* y);
void axpy(int64_t n, double a, const double* x, double* y);

void scale(int64_t n, float a, float* x);
void scale(int64_t n, double a, double* x);

float dot(int64_t n, const float* x, const float* y);
double dot(int64_t n, const double* x, const double* y);

float sum(int64_t n, const float* x);
double sum(int64_t n, const double* x);

void relu(int64_t n, const float* x, float* out);
void relu(int64_t n, const double* x, double* out);

}  // namespace gf::kern
