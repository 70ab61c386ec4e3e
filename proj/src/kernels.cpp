#include "kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace sargen::kernels {

namespace {

int g_threads = 1;
bool g_fp32 = false;
std::atomic<std::uint64_t> g_flops{0};

void count_flops(std::uint64_t n) {
    g_flops.fetch_add(n, std::memory_order_relaxed);
}

void maybe_round_fp32(double* p, std::int64_t n) {
    if (!g_fp32) return;
    for (std::int64_t i = 0; i < n; ++i) p[i] = static_cast<double>(static_cast<float>(p[i]));
}

// Per-row workers. Both the serial loops and the OpenMP loops call these, so
// the two paths execute identical floating-point operation sequences per row.

inline void gemm_nn_row(int i, int k, int n, const double* a, const double* b,
                        double* c, bool accumulate) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
        const double av = arow[l];
        const double* brow = b + static_cast<std::size_t>(l) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void gemm_nt_row(int i, int k, int n, const double* a, const double* b,
                        double* c, bool accumulate) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
        const double* brow = b + static_cast<std::size_t>(j) * k;
        double s = 0.0;
        for (int l = 0; l < k; ++l) s += arow[l] * brow[l];
        crow[j] = accumulate ? crow[j] + s : s;
    }
}

inline void gemm_tn_row(int i, int m, int k, int n, const double* a,
                        const double* b, double* c, bool accumulate) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int l = 0; l < k; ++l) {
        const double av = a[static_cast<std::size_t>(l) * m + i];
        const double* brow = b + static_cast<std::size_t>(l) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void softmax_row(int cols, const double* x, double* y) {
    double mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
        y[j] = std::exp(x[j] - mx);
        sum += y[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
}

inline void layer_norm_row(int cols, double eps, const double* x, double* y,
                           double* inv_std) {
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += x[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
        const double d = x[j] - mean;
        var += d * d;
    }
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < cols; ++j) y[j] = (x[j] - mean) * is;
    if (inv_std) *inv_std = is;
}

inline void softmax_grad_row(int cols, const double* y, const double* dy,
                             double* dx) {
    double dot = 0.0;
    for (int j = 0; j < cols; ++j) dot += dy[j] * y[j];
    for (int j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
}

inline void layer_norm_grad_row(int cols, const double* y, double inv_std,
                                const double* dy, double* dx) {
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < cols; ++j) {
        m1 += dy[j];
        m2 += dy[j] * y[j];
    }
    m1 /= cols;
    m2 /= cols;
    for (int j = 0; j < cols; ++j) dx[j] += inv_std * (dy[j] - m1 - y[j] * m2);
}

constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
constexpr double kSeluLambda = 1.0507009873554804934193349852946;
const double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

}  // namespace

void set_threads(int n) { g_threads = std::max(1, n); }
int threads() { return g_threads; }
void set_fp32_emulation(bool on) { g_fp32 = on; }
bool fp32_emulation() { return g_fp32; }
void reset_flop_count() { g_flops.store(0, std::memory_order_relaxed); }
std::uint64_t flop_count() { return g_flops.load(std::memory_order_relaxed); }

// ============================================================
// Serial reference implementations
// ============================================================

namespace serial {

void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate) {
    for (int i = 0; i < m; ++i) gemm_nn_row(i, k, n, a, b, c, accumulate);
    count_flops(2ull * m * k * n);
    maybe_round_fp32(c, static_cast<std::int64_t>(m) * n);
}

void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate) {
    for (int i = 0; i < m; ++i) gemm_nt_row(i, k, n, a, b, c, accumulate);
    count_flops(2ull * m * k * n);
    maybe_round_fp32(c, static_cast<std::int64_t>(m) * n);
}

void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate) {
    for (int i = 0; i < m; ++i) gemm_tn_row(i, m, k, n, a, b, c, accumulate);
    count_flops(2ull * m * k * n);
    maybe_round_fp32(c, static_cast<std::int64_t>(m) * n);
}

void softmax_rows(int rows, int cols, const double* x, double* y) {
    for (int i = 0; i < rows; ++i)
        softmax_row(cols, x + static_cast<std::size_t>(i) * cols,
                    y + static_cast<std::size_t>(i) * cols);
    maybe_round_fp32(y, static_cast<std::int64_t>(rows) * cols);
}

void layer_norm_rows(int rows, int cols, double eps, const double* x, double* y,
                     double* inv_std) {
    for (int i = 0; i < rows; ++i)
        layer_norm_row(cols, eps, x + static_cast<std::size_t>(i) * cols,
                       y + static_cast<std::size_t>(i) * cols,
                       inv_std ? inv_std + i : nullptr);
    maybe_round_fp32(y, static_cast<std::int64_t>(rows) * cols);
}

void vadd(std::int64_t n, const double* a, const double* b, double* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
    maybe_round_fp32(y, n);
}

void vsub(std::int64_t n, const double* a, const double* b, double* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
    maybe_round_fp32(y, n);
}

void vmul(std::int64_t n, const double* a, const double* b, double* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
    maybe_round_fp32(y, n);
}

void vscale(std::int64_t n, const double* a, double c, double* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * c;
    maybe_round_fp32(y, n);
}

void vaxpy(std::int64_t n, double c, const double* x, double* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += c * x[i];
    maybe_round_fp32(y, n);
}

void vexp(std::int64_t n, const double* x, double* y) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
    maybe_round_fp32(y, n);
}

void selu(std::int64_t n, const double* x, double* y) {
    for (std::int64_t i = 0; i < n; ++i)
        y[i] = kSeluLambda * (x[i] > 0.0 ? x[i] : kSeluAlpha * std::expm1(x[i]));
    maybe_round_fp32(y, n);
}

void selu_grad(std::int64_t n, const double* x, const double* dy, double* dx) {
    for (std::int64_t i = 0; i < n; ++i)
        dx[i] += dy[i] * kSeluLambda *
                 (x[i] > 0.0 ? 1.0 : kSeluAlpha * std::exp(x[i]));
}

void gelu(std::int64_t n, const double* x, double* y) {
    for (std::int64_t i = 0; i < n; ++i)
        y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
    maybe_round_fp32(y, n);
}

void gelu_grad(std::int64_t n, const double* x, const double* dy, double* dx) {
    for (std::int64_t i = 0; i < n; ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
        dx[i] += dy[i] * (cdf + x[i] * pdf);
    }
}

void softmax_rows_grad(int rows, int cols, const double* y, const double* dy,
                       double* dx) {
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * cols;
        softmax_grad_row(cols, y + off, dy + off, dx + off);
    }
}

void layer_norm_rows_grad(int rows, int cols, const double* y,
                          const double* inv_std, const double* dy, double* dx) {
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * cols;
        layer_norm_grad_row(cols, y + off, inv_std[i], dy + off, dx + off);
    }
}

}  // namespace serial

// ============================================================
// Dispatched versions
// ============================================================

// Row kernels parallelize over output rows with a static schedule; every row
// is produced by the same worker as the serial path, in the same operation
// order, so results do not depend on the thread count.

void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate) {
    if (g_threads == 1 || m < 2) {
        serial::gemm_nn(m, k, n, a, b, c, accumulate);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int i = 0; i < m; ++i) gemm_nn_row(i, k, n, a, b, c, accumulate);
    count_flops(2ull * m * k * n);
    maybe_round_fp32(c, static_cast<std::int64_t>(m) * n);
#else
    serial::gemm_nn(m, k, n, a, b, c, accumulate);
#endif
}

void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate) {
    if (g_threads == 1 || m < 2) {
        serial::gemm_nt(m, k, n, a, b, c, accumulate);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int i = 0; i < m; ++i) gemm_nt_row(i, k, n, a, b, c, accumulate);
    count_flops(2ull * m * k * n);
    maybe_round_fp32(c, static_cast<std::int64_t>(m) * n);
#else
    serial::gemm_nt(m, k, n, a, b, c, accumulate);
#endif
}

void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c,
             bool accumulate) {
    if (g_threads == 1 || m < 2) {
        serial::gemm_tn(m, k, n, a, b, c, accumulate);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int i = 0; i < m; ++i) gemm_tn_row(i, m, k, n, a, b, c, accumulate);
    count_flops(2ull * m * k * n);
    maybe_round_fp32(c, static_cast<std::int64_t>(m) * n);
#else
    serial::gemm_tn(m, k, n, a, b, c, accumulate);
#endif
}

void softmax_rows(int rows, int cols, const double* x, double* y) {
    if (g_threads == 1 || rows < 2) {
        serial::softmax_rows(rows, cols, x, y);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int i = 0; i < rows; ++i)
        softmax_row(cols, x + static_cast<std::size_t>(i) * cols,
                    y + static_cast<std::size_t>(i) * cols);
    maybe_round_fp32(y, static_cast<std::int64_t>(rows) * cols);
#else
    serial::softmax_rows(rows, cols, x, y);
#endif
}

void layer_norm_rows(int rows, int cols, double eps, const double* x, double* y,
                     double* inv_std) {
    if (g_threads == 1 || rows < 2) {
        serial::layer_norm_rows(rows, cols, eps, x, y, inv_std);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int i = 0; i < rows; ++i)
        layer_norm_row(cols, eps, x + static_cast<std::size_t>(i) * cols,
                       y + static_cast<std::size_t>(i) * cols,
                       inv_std ? inv_std + i : nullptr);
    maybe_round_fp32(y, static_cast<std::int64_t>(rows) * cols);
#else
    serial::layer_norm_rows(rows, cols, eps, x, y, inv_std);
#endif
}

// Elementwise maps are memory-bound and usually sit inside row-parallel
// callers already, so the dispatched versions forward to the serial loops.
// Parallelism lives in the GEMM and row kernels above where it pays off.

void vadd(std::int64_t n, const double* a, const double* b, double* y) {
    serial::vadd(n, a, b, y);
}

void vsub(std::int64_t n, const double* a, const double* b, double* y) {
    serial::vsub(n, a, b, y);
}

void vmul(std::int64_t n, const double* a, const double* b, double* y) {
    serial::vmul(n, a, b, y);
}

void vscale(std::int64_t n, const double* a, double c, double* y) {
    serial::vscale(n, a, c, y);
}

void vaxpy(std::int64_t n, double c, const double* x, double* y) {
    serial::vaxpy(n, c, x, y);
}

void vexp(std::int64_t n, const double* x, double* y) {
    serial::vexp(n, x, y);
}

void selu(std::int64_t n, const double* x, double* y) {
    serial::selu(n, x, y);
}

void selu_grad(std::int64_t n, const double* x, const double* dy, double* dx) {
    serial::selu_grad(n, x, dy, dx);
}

void gelu(std::int64_t n, const double* x, double* y) {
    serial::gelu(n, x, y);
}

void gelu_grad(std::int64_t n, const double* x, const double* dy, double* dx) {
    serial::gelu_grad(n, x, dy, dx);
}

void softmax_rows_grad(int rows, int cols, const double* y, const double* dy,
                       double* dx) {
    if (g_threads == 1 || rows < 2) {
        serial::softmax_rows_grad(rows, cols, y, dy, dx);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * cols;
        softmax_grad_row(cols, y + off, dy + off, dx + off);
    }
#else
    serial::softmax_rows_grad(rows, cols, y, dy, dx);
#endif
}

void layer_norm_rows_grad(int rows, int cols, const double* y,
                          const double* inv_std, const double* dy, double* dx) {
    if (g_threads == 1 || rows < 2) {
        serial::layer_norm_rows_grad(rows, cols, y, inv_std, dy, dx);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(g_threads)
    for (int i = 0; i < rows; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * cols;
        layer_norm_grad_row(cols, y + off, inv_std[i], dy + off, dx + off);
    }
#else
    serial::layer_norm_rows_grad(rows, cols, y, inv_std, dy, dx);
#endif
}

}  // namespace sargen::kernels
