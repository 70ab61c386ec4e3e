/// Kernel correctness and the serial/parallel bitwise-equality contract.
#include <cstring>
#include <vector>

#include "kernels.hpp"
#include "rng.hpp"
#include "test_harness.hpp"

using namespace sargen;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    rng.fill_gaussian(v);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Plain triple-loop oracle, deliberately written differently from the kernel
// (j outer, scalar accumulation) so a shared bug cannot hide.
std::vector<double> gemm_oracle(int m, int k, int n, const std::vector<double>& a,
                                const std::vector<double>& b) {
    std::vector<double> c(static_cast<std::size_t>(m) * n, 0.0);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int l = 0; l < k; ++l) s += a[i * k + l] * b[l * n + j];
            c[i * n + j] = s;
        }
    return c;
}

void gemm_tests() {
    Rng rng(7, RngStream::kTest, 0);
    const int m = 5, k = 7, n = 3;
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    auto want = gemm_oracle(m, k, n, a, b);

    std::vector<double> c(m * n);
    kernels::serial::gemm_nn(m, k, n, a.data(), b.data(), c.data(), false);
    double err = 0;
    for (std::size_t i = 0; i < c.size(); ++i) err = std::max(err, std::abs(c[i] - want[i]));
    testh::record("gemm_nn matches oracle", err < 1e-12);

    // b^T form: bt[n,k]
    std::vector<double> bt(static_cast<std::size_t>(n) * k);
    for (int j = 0; j < n; ++j)
        for (int l = 0; l < k; ++l) bt[j * k + l] = b[l * n + j];
    std::vector<double> cnt(m * n);
    kernels::serial::gemm_nt(m, k, n, a.data(), bt.data(), cnt.data(), false);
    err = 0;
    for (std::size_t i = 0; i < c.size(); ++i) err = std::max(err, std::abs(cnt[i] - want[i]));
    testh::record("gemm_nt matches oracle", err < 1e-12);

    // a^T form: at[k,m]
    std::vector<double> at(static_cast<std::size_t>(k) * m);
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) at[l * m + i] = a[i * k + l];
    std::vector<double> ctn(m * n);
    kernels::serial::gemm_tn(m, k, n, at.data(), b.data(), ctn.data(), false);
    err = 0;
    for (std::size_t i = 0; i < c.size(); ++i) err = std::max(err, std::abs(ctn[i] - want[i]));
    testh::record("gemm_tn matches oracle", err < 1e-12);

    // accumulate flag adds on top
    std::vector<double> acc(m * n, 1.0);
    kernels::serial::gemm_nn(m, k, n, a.data(), b.data(), acc.data(), true);
    err = 0;
    for (std::size_t i = 0; i < acc.size(); ++i)
        err = std::max(err, std::abs(acc[i] - (want[i] + 1.0)));
    testh::record("gemm accumulate adds", err < 1e-12);
}

void parallel_equality_tests() {
    // The dispatched kernels must produce bitwise-identical results for any
    // thread count. Exercised at 2 and 5 threads; on a single-core host the
    // OpenMP runtime still splits the iteration space, which is what matters.
    Rng rng(11, RngStream::kTest, 1);
    const int m = 37, k = 29, n = 31;
    auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    auto b = random_vec(static_cast<std::size_t>(k) * n, rng);

    std::vector<double> serial_c(static_cast<std::size_t>(m) * n);
    kernels::serial::gemm_nn(m, k, n, a.data(), b.data(), serial_c.data(), false);

    for (int threads : {2, 5}) {
        kernels::set_threads(threads);
        std::vector<double> par_c(static_cast<std::size_t>(m) * n, -1.0);
        kernels::gemm_nn(m, k, n, a.data(), b.data(), par_c.data(), false);
        testh::record("gemm_nn bitwise serial==omp, threads=" + std::to_string(threads),
                      bitwise_equal(serial_c, par_c));
    }

    auto x = random_vec(static_cast<std::size_t>(m) * k, rng);
    std::vector<double> sm_serial(x.size()), ln_serial(x.size());
    std::vector<double> inv_serial(m);
    kernels::serial::softmax_rows(m, k, x.data(), sm_serial.data());
    kernels::serial::layer_norm_rows(m, k, 1e-5, x.data(), ln_serial.data(),
                                     inv_serial.data());
    for (int threads : {2, 5}) {
        kernels::set_threads(threads);
        std::vector<double> sm(x.size()), ln(x.size()), inv(m);
        kernels::softmax_rows(m, k, x.data(), sm.data());
        kernels::layer_norm_rows(m, k, 1e-5, x.data(), ln.data(), inv.data());
        testh::record("softmax bitwise serial==omp, threads=" + std::to_string(threads),
                      bitwise_equal(sm_serial, sm));
        testh::record("layer_norm bitwise serial==omp, threads=" + std::to_string(threads),
                      bitwise_equal(ln_serial, ln) && bitwise_equal(inv_serial, inv));
    }
    kernels::set_threads(1);
}

void rng_tests() {
    // Same key, fresh instance: identical draws.
    Rng a(42, RngStream::kTest, 3), b(42, RngStream::kTest, 3);
    bool same = true;
    for (int i = 0; i < 100; ++i) same = same && a.next_u64() == b.next_u64();
    testh::record("rng reproducible for equal keys", same);

    Rng c(42, RngStream::kTest, 4);
    bool differs = false;
    Rng a2(42, RngStream::kTest, 3);
    for (int i = 0; i < 10; ++i) differs = differs || a2.next_u64() != c.next_u64();
    testh::record("rng streams independent across index", differs);

    // Moment sanity on gaussians.
    Rng g(123, RngStream::kTest, 0);
    const int n = 200000;
    double mean = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
        const double v = g.gaussian();
        mean += v;
        m2 += v * v;
    }
    mean /= n;
    m2 /= n;
    testh::check_close("gaussian mean ~ 0", mean, 0.0, 0.01);
    testh::check_close("gaussian second moment ~ 1", m2, 1.0, 0.02);

    // Uniform histogram should be flat to ~1% at this sample size.
    Rng u(55, RngStream::kTest, 0);
    std::vector<int> hist(10, 0);
    for (int i = 0; i < n; ++i) ++hist[static_cast<int>(u.uniform() * 10.0)];
    bool flat = true;
    for (int h : hist) flat = flat && std::abs(h - n / 10) < n / 10 * 0.05;
    testh::record("uniform histogram flat", flat);

    // uniform_int covers its range uniformly.
    Rng ui(9, RngStream::kTest, 0);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) ++counts[ui.uniform_int(7)];
    bool ok = true;
    for (int cnt : counts) ok = ok && std::abs(cnt - 10000) < 500;
    testh::record("uniform_int flat over [0,7)", ok);
}

void fp32_emulation_tests() {
    Rng rng(3, RngStream::kTest, 0);
    auto a = random_vec(64, rng);
    auto b = random_vec(64, rng);
    std::vector<double> y(64);
    kernels::set_fp32_emulation(true);
    kernels::serial::vmul(64, a.data(), b.data(), y.data());
    kernels::set_fp32_emulation(false);
    bool rounded = true;
    for (int i = 0; i < 64; ++i)
        rounded = rounded && y[i] == static_cast<double>(static_cast<float>(a[i] * b[i]));
    testh::record("fp32 emulation rounds through float", rounded);
}

void flop_counter_tests() {
    kernels::reset_flop_count();
    std::vector<double> a(6), b(6), c(4);
    kernels::serial::gemm_nn(2, 3, 2, a.data(), b.data(), c.data(), false);
    testh::record("flop counter tracks 2*m*k*n", kernels::flop_count() == 24);
}

}  // namespace

int main() {
    return testh::run("kernels", [] {
        gemm_tests();
        parallel_equality_tests();
        rng_tests();
        fp32_emulation_tests();
        flop_counter_tests();
    });
}
