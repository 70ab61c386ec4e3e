/// tensor.hpp - 2-D double tensors with reverse-mode autodiff.
///
/// A Tensor is a shared handle to a tape node. Ops build the tape eagerly;
/// backward(loss) runs the closures in reverse topological order. Tapes are
/// per-expression and freed when the last handle drops, so independent graphs
/// can be built concurrently from different threads (the no-grad flag is
/// thread-local). Values are immutable once created except for leaf tensors,
/// which optimizers update between tapes.
#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "rng.hpp"

namespace sargen {

namespace detail {
struct Node;
}

namespace autograd {

/// Disables tape recording while alive (inference paths). Nestable.
class NoGradScope {
  public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

  private:
    bool previous_;
};

bool grad_enabled();

/// When on, every op scans its output for NaN/Inf and throws NumericalError.
/// Off by default (it is a debugging mode); training loops check the loss
/// regardless.
void set_finite_checks(bool on);
bool finite_checks();

}  // namespace autograd

class Tensor {
  public:
    Tensor() = default;  // null handle

    static Tensor zeros(int rows, int cols);
    static Tensor full(int rows, int cols, double value);
    static Tensor from_data(int rows, int cols, std::vector<double> values);
    static Tensor from_span(int rows, int cols, std::span<const double> values);
    /// Constant leaf of N(0, sigma^2) draws. Never differentiable.
    static Tensor gaussian(int rows, int cols, Rng& rng, double sigma = 1.0);

    bool defined() const { return node_ != nullptr; }
    int rows() const;
    int cols() const;
    std::int64_t numel() const;

    std::span<const double> values() const;
    double at(int r, int c) const;
    /// Value of a 1x1 tensor.
    double scalar() const;

    /// Marks a leaf as a trainable parameter. Throws on non-leaf tensors.
    Tensor& set_requires_grad(bool on);
    bool requires_grad() const;

    /// Gradient accumulated by the last backward(). Throws if absent.
    std::span<const double> grad() const;
    void zero_grad();

    /// Direct value access for optimizer updates. Leaf tensors only.
    double* mutable_values();
    double* mutable_grad();

    /// Constant copy detached from the tape.
    Tensor detach() const;

  private:
    friend struct detail::Node;
    friend class TensorOps;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Seeds d(loss)/d(loss) = 1 and
/// accumulates into the .grad() of every reachable requires_grad tensor.
void backward(const Tensor& loss);

// ============================================================
// Ops
// ============================================================
// Binary ops broadcast [1,C] row vectors, [R,1] column vectors and [1,1]
// scalars against [R,C] operands (either side).

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // [k,m]^Tx[k,n]

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

/// a[r,c] / denom[r,0]. With guard_eps > 0, rows whose |denom| < guard_eps
/// yield exact zeros and propagate zero gradient (empty-slice guard).
Tensor div_cols(const Tensor& a, const Tensor& denom, double guard_eps = 0.0);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_rows(std::initializer_list<Tensor> parts);
Tensor col_slice(const Tensor& x, int start, int len);

/// Gather rows; duplicate indices allowed (gradients accumulate).
Tensor row_select(const Tensor& x, std::span<const int> index);
/// out = base, then out[index[r]] += rows[r] for each r (scatter-add).
Tensor index_add_rows(const Tensor& base, std::span<const int> index,
                      const Tensor& rows);

Tensor softmax(const Tensor& x);                       // row-wise
Tensor layer_norm(const Tensor& x, double eps = 1e-5); // row-wise, no affine
Tensor selu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum_all(const Tensor& x);   // [1,1]
Tensor mean_all(const Tensor& x);  // [1,1]
Tensor row_sums(const Tensor& x);  // [R,1]
Tensor col_sums(const Tensor& x);  // [1,C]

/// x[N,in] * w[out,in]^T + b[1,out]; pass an undefined b for no bias.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace sargen
