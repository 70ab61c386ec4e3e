/// kernels.hpp - dense numeric kernels.
///
/// Two layers: kernels::serial holds plain reference implementations, and the
/// top-level functions dispatch to OpenMP row-partitioned versions when the
/// thread setting is > 1. Both paths run the identical per-row worker with a
/// static schedule, so results are bitwise equal regardless of thread count.
/// That property is load-bearing: sampling artifacts must be byte-identical
/// across --threads settings, and tests assert it.
///
/// All matrices are row-major double arrays.
#pragma once

#include <cstdint>

namespace sargen::kernels {

/// Worker threads used by the dispatched kernels. 1 selects the serial path.
void set_threads(int n);
int threads();

/// Optional float-storage emulation: when enabled, kernel outputs are rounded
/// through IEEE float before being returned. A knob for precision experiments
/// (the double path is the default and the tested contract).
void set_fp32_emulation(bool on);
bool fp32_emulation();

/// Cheap per-call FLOP accounting (2*m*k*n per GEMM, rows*cols*constant for
/// row kernels). Used by scaling tests and the kernel benchmark.
void reset_flop_count();
std::uint64_t flop_count();

// ============================================================
// Serial reference implementations
// ============================================================

namespace serial {

/// c[m,n] = a[m,k] * b[k,n]  (+= when accumulate)
void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate);

/// c[m,n] = a[m,k] * b[n,k]^T
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate);

/// c[m,n] = a[k,m]^T * b[k,n]
void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate);

/// Row-wise softmax with max subtraction.
void softmax_rows(int rows, int cols, const double* x, double* y);

/// Row-wise layer norm (population variance, no affine part).
/// inv_std may be null; when given it receives 1/sqrt(var+eps) per row for
/// the backward pass.
void layer_norm_rows(int rows, int cols, double eps, const double* x, double* y,
                     double* inv_std);

void vadd(std::int64_t n, const double* a, const double* b, double* y);
void vsub(std::int64_t n, const double* a, const double* b, double* y);
void vmul(std::int64_t n, const double* a, const double* b, double* y);
void vscale(std::int64_t n, const double* a, double c, double* y);
/// y += c * x
void vaxpy(std::int64_t n, double c, const double* x, double* y);

void vexp(std::int64_t n, const double* x, double* y);
void selu(std::int64_t n, const double* x, double* y);
/// dx += dy * selu'(x)
void selu_grad(std::int64_t n, const double* x, const double* dy, double* dx);
void gelu(std::int64_t n, const double* x, double* y);
void gelu_grad(std::int64_t n, const double* x, const double* dy, double* dx);

/// dx += y * (dy - rowdot(dy, y)), the softmax Jacobian product.
void softmax_rows_grad(int rows, int cols, const double* y, const double* dy,
                       double* dx);

/// dx += inv_std * (dy - rowmean(dy) - y * rowmean(dy*y))
void layer_norm_rows_grad(int rows, int cols, const double* y,
                          const double* inv_std, const double* dy, double* dx);

}  // namespace serial

// ============================================================
// Dispatched versions (OpenMP over rows when threads() > 1)
// ============================================================

void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate);
void softmax_rows(int rows, int cols, const double* x, double* y);
void layer_norm_rows(int rows, int cols, double eps, const double* x, double* y,
                     double* inv_std);
void vadd(std::int64_t n, const double* a, const double* b, double* y);
void vsub(std::int64_t n, const double* a, const double* b, double* y);
void vmul(std::int64_t n, const double* a, const double* b, double* y);
void vscale(std::int64_t n, const double* a, double c, double* y);
void vaxpy(std::int64_t n, double c, const double* x, double* y);
void vexp(std::int64_t n, const double* x, double* y);
void selu(std::int64_t n, const double* x, double* y);
void selu_grad(std::int64_t n, const double* x, const double* dy, double* dx);
void gelu(std::int64_t n, const double* x, double* y);
void gelu_grad(std::int64_t n, const double* x, const double* dy, double* dx);
void softmax_rows_grad(int rows, int cols, const double* y, const double* dy,
                       double* dx);
void layer_norm_rows_grad(int rows, int cols, const double* y,
                          const double* inv_std, const double* dy, double* dx);

}  // namespace sargen::kernels
