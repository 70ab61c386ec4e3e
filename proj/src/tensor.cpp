#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_set>
#include <utility>

#include "common.hpp"
#include "kernels.hpp"

namespace sargen {

namespace detail {

struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Captures raw Node* into this->parents (kept alive by the vector) plus
    // whatever saved buffers the op needs. Never captures the node itself,
    // which would form a reference cycle.
    std::function<void(Node&)> backprop;

    std::int64_t numel() const { return static_cast<std::int64_t>(rows) * cols; }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

/// Friend shim: the only way code in this file builds Tensors around nodes.
class TensorOps {
  public:
    static const NodePtr& node(const Tensor& t) { return t.node_; }
    static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

// ============================================================
// Autograd switches
// ============================================================

namespace autograd {

namespace {
thread_local bool t_grad_enabled = true;
bool g_finite_checks = false;
}  // namespace

NoGradScope::NoGradScope() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradScope::~NoGradScope() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }
void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks() { return g_finite_checks; }

}  // namespace autograd

// ============================================================
// Node construction helpers
// ============================================================

namespace {

NodePtr make_raw(int rows, int cols, const char* op) {
    if (rows <= 0 || cols <= 0)
        throw std::invalid_argument(std::string(op) + ": shape must be positive, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.resize(static_cast<std::size_t>(rows) * cols);
    n->op = op;
    n->is_leaf = false;
    return n;
}

void check_finite(const Node& n) {
    if (!autograd::finite_checks()) return;
    for (double v : n.value)
        if (!std::isfinite(v))
            throw NumericalError(std::string("non-finite value produced by op '") +
                                 n.op + "'");
}

const NodePtr& node_of(const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument("operation on undefined tensor");
    return TensorOps::node(t);
}

/// Wires parents and the backward closure iff grad mode is on and some input
/// needs gradients; otherwise the result is a constant.
Tensor finish(NodePtr n, std::vector<NodePtr> parents,
              std::function<void(Node&)> backprop) {
    check_finite(*n);
    bool need = autograd::grad_enabled();
    if (need) {
        need = false;
        for (const auto& p : parents)
            if (p->requires_grad) {
                need = true;
                break;
            }
    }
    if (need) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return TensorOps::wrap(std::move(n));
}

}  // namespace

// ============================================================
// Tensor methods
// ============================================================

Tensor Tensor::zeros(int rows, int cols) { return full(rows, cols, 0.0); }

Tensor Tensor::full(int rows, int cols, double value) {
    auto n = make_raw(rows, cols, "leaf");
    n->is_leaf = true;
    std::fill(n->value.begin(), n->value.end(), value);
    return TensorOps::wrap(std::move(n));
}

Tensor Tensor::from_data(int rows, int cols, std::vector<double> values) {
    if (static_cast<std::int64_t>(values.size()) !=
        static_cast<std::int64_t>(rows) * cols)
        throw std::invalid_argument("from_data: value count does not match shape");
    auto n = make_raw(rows, cols, "leaf");
    n->is_leaf = true;
    n->value = std::move(values);
    return TensorOps::wrap(std::move(n));
}

Tensor Tensor::from_span(int rows, int cols, std::span<const double> values) {
    return from_data(rows, cols, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::gaussian(int rows, int cols, Rng& rng, double sigma) {
    auto n = make_raw(rows, cols, "leaf");
    n->is_leaf = true;
    rng.fill_gaussian(n->value, sigma);
    return TensorOps::wrap(std::move(n));
}

int Tensor::rows() const { return node_of(*this)->rows; }
int Tensor::cols() const { return node_of(*this)->cols; }
std::int64_t Tensor::numel() const { return node_of(*this)->numel(); }

std::span<const double> Tensor::values() const {
    const auto& n = node_of(*this);
    return {n->value.data(), n->value.size()};
}

double Tensor::at(int r, int c) const {
    const auto& n = node_of(*this);
    if (r < 0 || r >= n->rows || c < 0 || c >= n->cols)
        throw std::out_of_range("Tensor::at: index out of range");
    return n->value[static_cast<std::size_t>(r) * n->cols + c];
}

double Tensor::scalar() const {
    const auto& n = node_of(*this);
    if (n->rows != 1 || n->cols != 1)
        throw std::invalid_argument("Tensor::scalar: tensor is not 1x1");
    return n->value[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
    auto& n = node_of(*this);
    if (!n->is_leaf)
        throw std::invalid_argument("set_requires_grad: only leaf tensors");
    n->requires_grad = on;
    if (on) n->ensure_grad();
    return *this;
}

bool Tensor::requires_grad() const { return node_of(*this)->requires_grad; }

std::span<const double> Tensor::grad() const {
    const auto& n = node_of(*this);
    if (n->grad.empty())
        throw std::invalid_argument("Tensor::grad: no gradient accumulated");
    return {n->grad.data(), n->grad.size()};
}

void Tensor::zero_grad() {
    auto& n = node_of(*this);
    n->ensure_grad();
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
}

double* Tensor::mutable_values() {
    auto& n = node_of(*this);
    if (!n->is_leaf)
        throw std::invalid_argument("mutable_values: only leaf tensors may be mutated");
    return n->value.data();
}

double* Tensor::mutable_grad() {
    auto& n = node_of(*this);
    if (!n->is_leaf)
        throw std::invalid_argument("mutable_grad: only leaf tensors");
    n->ensure_grad();
    return n->grad.data();
}

Tensor Tensor::detach() const {
    const auto& n = node_of(*this);
    return from_data(n->rows, n->cols, n->value);
}

// ============================================================
// Backward sweep
// ============================================================

void backward(const Tensor& loss) {
    const auto& root = node_of(loss);
    if (root->rows != 1 || root->cols != 1)
        throw std::invalid_argument("backward: loss must be 1x1");
    if (!root->requires_grad)
        throw std::invalid_argument("backward: loss does not require grad");

    // Iterative post-order DFS; recursion would overflow on deep tapes.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        std::size_t next;
    };
    std::vector<Frame> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.n->parents.size()) {
            Node* p = f.n->parents[f.next++].get();
            if (p->requires_grad && visited.insert(p).second)
                stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backprop) continue;
        for (const auto& p : n->parents)
            if (p->requires_grad) p->ensure_grad();
        n->backprop(*n);
    }
}

// ============================================================
// Matrix products
// ============================================================

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    if (na->cols != nb->rows)
        throw std::invalid_argument("matmul: inner dimensions differ");
    const int m = na->rows, k = na->cols, n = nb->cols;
    auto out = make_raw(m, n, "matmul");
    kernels::gemm_nn(m, k, n, na->value.data(), nb->value.data(),
                     out->value.data(), false);
    Node* pa = na.get();
    Node* pb = nb.get();
    return finish(std::move(out), {na, nb}, [pa, pb, m, k, n](Node& self) {
        if (pa->requires_grad)
            kernels::gemm_nt(m, n, k, self.grad.data(), pb->value.data(),
                             pa->grad.data(), true);
        if (pb->requires_grad)
            kernels::gemm_tn(k, m, n, pa->value.data(), self.grad.data(),
                             pb->grad.data(), true);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    if (na->cols != nb->cols)
        throw std::invalid_argument("matmul_nt: inner dimensions differ");
    const int m = na->rows, k = na->cols, n = nb->rows;
    auto out = make_raw(m, n, "matmul_nt");
    kernels::gemm_nt(m, k, n, na->value.data(), nb->value.data(),
                     out->value.data(), false);
    Node* pa = na.get();
    Node* pb = nb.get();
    return finish(std::move(out), {na, nb}, [pa, pb, m, k, n](Node& self) {
        if (pa->requires_grad)
            kernels::gemm_nn(m, n, k, self.grad.data(), pb->value.data(),
                             pa->grad.data(), true);
        if (pb->requires_grad)
            kernels::gemm_tn(n, m, k, self.grad.data(), pa->value.data(),
                             pb->grad.data(), true);
    });
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    if (na->rows != nb->rows)
        throw std::invalid_argument("matmul_tn: inner dimensions differ");
    const int k = na->rows, m = na->cols, n = nb->cols;
    auto out = make_raw(m, n, "matmul_tn");
    kernels::gemm_tn(m, k, n, na->value.data(), nb->value.data(),
                     out->value.data(), false);
    Node* pa = na.get();
    Node* pb = nb.get();
    return finish(std::move(out), {na, nb}, [pa, pb, m, k, n](Node& self) {
        if (pa->requires_grad)
            kernels::gemm_nt(k, n, m, pb->value.data(), self.grad.data(),
                             pa->grad.data(), true);
        if (pb->requires_grad)
            kernels::gemm_nn(k, m, n, pa->value.data(), self.grad.data(),
                             pb->grad.data(), true);
    });
}

// ============================================================
// Broadcasting binary ops
// ============================================================

namespace {

enum class Bc { kFull, kRow, kCol, kScalar };

struct BcPlan {
    int rows, cols;
    Bc a, b;
};

Bc classify(const Node& x, int rows, int cols, const char* op) {
    if (x.rows == rows && x.cols == cols) return Bc::kFull;
    if (x.rows == 1 && x.cols == 1) return Bc::kScalar;
    if (x.rows == 1 && x.cols == cols) return Bc::kRow;
    if (x.cols == 1 && x.rows == rows) return Bc::kCol;
    throw std::invalid_argument(std::string(op) + ": shapes not broadcastable");
}

BcPlan plan(const Node& a, const Node& b, const char* op) {
    const int rows = std::max(a.rows, b.rows);
    const int cols = std::max(a.cols, b.cols);
    return {rows, cols, classify(a, rows, cols, op), classify(b, rows, cols, op)};
}

inline std::size_t bc_index(Bc k, int r, int c, int cols) {
    switch (k) {
        case Bc::kFull: return static_cast<std::size_t>(r) * cols + c;
        case Bc::kRow: return static_cast<std::size_t>(c);
        case Bc::kCol: return static_cast<std::size_t>(r);
        default: return 0;
    }
}

/// dst[bc_index] += src[r,c] * (w ? w[r,c measured by wk] : 1)
void accumulate_bc(Node& dst, Bc kind, int rows, int cols, const double* src,
                   const double* w, Bc wk) {
    double* d = dst.grad.data();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double g = src[static_cast<std::size_t>(r) * cols + c];
            const double f = w ? w[bc_index(wk, r, c, cols)] : 1.0;
            d[bc_index(kind, r, c, cols)] += g * f;
        }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    const BcPlan p = plan(*na, *nb, "add");
    auto out = make_raw(p.rows, p.cols, "add");
    if (p.a == Bc::kFull && p.b == Bc::kFull) {
        kernels::vadd(out->numel(), na->value.data(), nb->value.data(),
                      out->value.data());
    } else {
        for (int r = 0; r < p.rows; ++r)
            for (int c = 0; c < p.cols; ++c)
                out->value[static_cast<std::size_t>(r) * p.cols + c] =
                    na->value[bc_index(p.a, r, c, p.cols)] +
                    nb->value[bc_index(p.b, r, c, p.cols)];
    }
    Node* pa = na.get();
    Node* pb = nb.get();
    return finish(std::move(out), {na, nb}, [pa, pb, p](Node& self) {
        if (pa->requires_grad)
            accumulate_bc(*pa, p.a, p.rows, p.cols, self.grad.data(), nullptr,
                          Bc::kFull);
        if (pb->requires_grad)
            accumulate_bc(*pb, p.b, p.rows, p.cols, self.grad.data(), nullptr,
                          Bc::kFull);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    const BcPlan p = plan(*na, *nb, "sub");
    auto out = make_raw(p.rows, p.cols, "sub");
    if (p.a == Bc::kFull && p.b == Bc::kFull) {
        kernels::vsub(out->numel(), na->value.data(), nb->value.data(),
                      out->value.data());
    } else {
        for (int r = 0; r < p.rows; ++r)
            for (int c = 0; c < p.cols; ++c)
                out->value[static_cast<std::size_t>(r) * p.cols + c] =
                    na->value[bc_index(p.a, r, c, p.cols)] -
                    nb->value[bc_index(p.b, r, c, p.cols)];
    }
    Node* pa = na.get();
    Node* pb = nb.get();
    return finish(std::move(out), {na, nb}, [pa, pb, p](Node& self) {
        if (pa->requires_grad)
            accumulate_bc(*pa, p.a, p.rows, p.cols, self.grad.data(), nullptr,
                          Bc::kFull);
        if (pb->requires_grad) {
            std::vector<double> neg(self.grad.size());
            kernels::vscale(static_cast<std::int64_t>(neg.size()),
                            self.grad.data(), -1.0, neg.data());
            accumulate_bc(*pb, p.b, p.rows, p.cols, neg.data(), nullptr,
                          Bc::kFull);
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const auto& na = node_of(a);
    const auto& nb = node_of(b);
    const BcPlan p = plan(*na, *nb, "mul");
    auto out = make_raw(p.rows, p.cols, "mul");
    if (p.a == Bc::kFull && p.b == Bc::kFull) {
        kernels::vmul(out->numel(), na->value.data(), nb->value.data(),
                      out->value.data());
    } else {
        for (int r = 0; r < p.rows; ++r)
            for (int c = 0; c < p.cols; ++c)
                out->value[static_cast<std::size_t>(r) * p.cols + c] =
                    na->value[bc_index(p.a, r, c, p.cols)] *
                    nb->value[bc_index(p.b, r, c, p.cols)];
    }
    Node* pa = na.get();
    Node* pb = nb.get();
    return finish(std::move(out), {na, nb}, [pa, pb, p](Node& self) {
        if (pa->requires_grad)
            accumulate_bc(*pa, p.a, p.rows, p.cols, self.grad.data(),
                          pb->value.data(), p.b);
        if (pb->requires_grad)
            accumulate_bc(*pb, p.b, p.rows, p.cols, self.grad.data(),
                          pa->value.data(), p.a);
    });
}

Tensor scale(const Tensor& a, double c) {
    const auto& na = node_of(a);
    auto out = make_raw(na->rows, na->cols, "scale");
    kernels::vscale(out->numel(), na->value.data(), c, out->value.data());
    Node* pa = na.get();
    return finish(std::move(out), {na}, [pa, c](Node& self) {
        kernels::vaxpy(self.numel(), c, self.grad.data(), pa->grad.data());
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    const auto& na = node_of(a);
    auto out = make_raw(na->rows, na->cols, "add_scalar");
    for (std::size_t i = 0; i < out->value.size(); ++i)
        out->value[i] = na->value[i] + c;
    Node* pa = na.get();
    return finish(std::move(out), {na}, [pa](Node& self) {
        kernels::vaxpy(self.numel(), 1.0, self.grad.data(), pa->grad.data());
    });
}

Tensor div_cols(const Tensor& a, const Tensor& denom, double guard_eps) {
    const auto& na = node_of(a);
    const auto& nd = node_of(denom);
    if (nd->cols != 1 || nd->rows != na->rows)
        throw std::invalid_argument("div_cols: denominator must be [rows,1]");
    const int rows = na->rows, cols = na->cols;
    auto out = make_raw(rows, cols, "div_cols");
    for (int r = 0; r < rows; ++r) {
        const double d = nd->value[r];
        double* orow = out->value.data() + static_cast<std::size_t>(r) * cols;
        const double* arow = na->value.data() + static_cast<std::size_t>(r) * cols;
        if (guard_eps > 0.0 && std::abs(d) < guard_eps) {
            std::fill(orow, orow + cols, 0.0);
        } else {
            const double inv = 1.0 / d;
            for (int c = 0; c < cols; ++c) orow[c] = arow[c] * inv;
        }
    }
    Node* pa = na.get();
    Node* pd = nd.get();
    return finish(std::move(out), {na, nd},
                  [pa, pd, rows, cols, guard_eps](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const double d = pd->value[r];
            if (guard_eps > 0.0 && std::abs(d) < guard_eps) continue;
            const double inv = 1.0 / d;
            const std::size_t off = static_cast<std::size_t>(r) * cols;
            if (pa->requires_grad)
                for (int c = 0; c < cols; ++c)
                    pa->grad[off + c] += self.grad[off + c] * inv;
            if (pd->requires_grad) {
                double acc = 0.0;
                for (int c = 0; c < cols; ++c)
                    acc += self.grad[off + c] * pa->value[off + c];
                pd->grad[r] -= acc * inv * inv;
            }
        }
    });
}

// ============================================================
// Shape ops
// ============================================================

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const int rows = parts[0].rows();
    int cols = 0;
    std::vector<NodePtr> nodes;
    nodes.reserve(parts.size());
    for (const auto& t : parts) {
        const auto& n = node_of(t);
        if (n->rows != rows)
            throw std::invalid_argument("concat_cols: row counts differ");
        cols += n->cols;
        nodes.push_back(n);
    }
    auto out = make_raw(rows, cols, "concat_cols");
    int off = 0;
    for (const auto& n : nodes) {
        for (int r = 0; r < rows; ++r)
            std::copy_n(n->value.data() + static_cast<std::size_t>(r) * n->cols,
                        n->cols,
                        out->value.data() + static_cast<std::size_t>(r) * cols + off);
        off += n->cols;
    }
    std::vector<NodePtr> parents = nodes;
    return finish(std::move(out), std::move(parents), [nodes, rows, cols](Node& self) {
        int off2 = 0;
        for (const auto& n : nodes) {
            if (n->requires_grad)
                for (int r = 0; r < rows; ++r) {
                    const double* g =
                        self.grad.data() + static_cast<std::size_t>(r) * cols + off2;
                    double* d = n->grad.data() + static_cast<std::size_t>(r) * n->cols;
                    for (int c = 0; c < n->cols; ++c) d[c] += g[c];
                }
            off2 += n->cols;
        }
    });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
    return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const int cols = parts[0].cols();
    int rows = 0;
    std::vector<NodePtr> nodes;
    nodes.reserve(parts.size());
    for (const auto& t : parts) {
        const auto& n = node_of(t);
        if (n->cols != cols)
            throw std::invalid_argument("concat_rows: column counts differ");
        rows += n->rows;
        nodes.push_back(n);
    }
    auto out = make_raw(rows, cols, "concat_rows");
    double* dst = out->value.data();
    for (const auto& n : nodes) {
        std::copy(n->value.begin(), n->value.end(), dst);
        dst += n->value.size();
    }
    std::vector<NodePtr> parents = nodes;
    return finish(std::move(out), std::move(parents), [nodes](Node& self) {
        std::size_t off = 0;
        for (const auto& n : nodes) {
            if (n->requires_grad)
                for (std::size_t i = 0; i < n->value.size(); ++i)
                    n->grad[i] += self.grad[off + i];
            off += n->value.size();
        }
    });
}

Tensor concat_rows(std::initializer_list<Tensor> parts) {
    return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor col_slice(const Tensor& x, int start, int len) {
    const auto& nx = node_of(x);
    if (start < 0 || len <= 0 || start + len > nx->cols)
        throw std::out_of_range("col_slice: range out of bounds");
    const int rows = nx->rows, cols = nx->cols;
    auto out = make_raw(rows, len, "col_slice");
    for (int r = 0; r < rows; ++r)
        std::copy_n(nx->value.data() + static_cast<std::size_t>(r) * cols + start,
                    len, out->value.data() + static_cast<std::size_t>(r) * len);
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px, start, len, rows, cols](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const double* g = self.grad.data() + static_cast<std::size_t>(r) * len;
            double* d = px->grad.data() + static_cast<std::size_t>(r) * cols + start;
            for (int c = 0; c < len; ++c) d[c] += g[c];
        }
    });
}

Tensor row_select(const Tensor& x, std::span<const int> index) {
    const auto& nx = node_of(x);
    if (index.empty()) throw std::invalid_argument("row_select: empty index");
    const int cols = nx->cols;
    for (int i : index)
        if (i < 0 || i >= nx->rows)
            throw std::out_of_range("row_select: index out of range");
    auto out = make_raw(static_cast<int>(index.size()), cols, "row_select");
    for (std::size_t r = 0; r < index.size(); ++r)
        std::copy_n(nx->value.data() + static_cast<std::size_t>(index[r]) * cols,
                    cols, out->value.data() + r * cols);
    Node* px = nx.get();
    std::vector<int> idx(index.begin(), index.end());
    return finish(std::move(out), {nx}, [px, idx = std::move(idx), cols](Node& self) {
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const double* g = self.grad.data() + r * cols;
            double* d = px->grad.data() + static_cast<std::size_t>(idx[r]) * cols;
            for (int c = 0; c < cols; ++c) d[c] += g[c];
        }
    });
}

Tensor index_add_rows(const Tensor& base, std::span<const int> index,
                      const Tensor& rows) {
    const auto& nb = node_of(base);
    const auto& nr = node_of(rows);
    if (nr->cols != nb->cols)
        throw std::invalid_argument("index_add_rows: column counts differ");
    if (static_cast<int>(index.size()) != nr->rows)
        throw std::invalid_argument("index_add_rows: index size != row count");
    for (int i : index)
        if (i < 0 || i >= nb->rows)
            throw std::out_of_range("index_add_rows: index out of range");
    const int cols = nb->cols;
    auto out = make_raw(nb->rows, cols, "index_add_rows");
    out->value = nb->value;
    for (std::size_t r = 0; r < index.size(); ++r) {
        double* d = out->value.data() + static_cast<std::size_t>(index[r]) * cols;
        const double* s = nr->value.data() + r * cols;
        for (int c = 0; c < cols; ++c) d[c] += s[c];
    }
    Node* pb = nb.get();
    Node* pr = nr.get();
    std::vector<int> idx(index.begin(), index.end());
    return finish(std::move(out), {nb, nr},
                  [pb, pr, idx = std::move(idx), cols](Node& self) {
        if (pb->requires_grad)
            kernels::vaxpy(self.numel(), 1.0, self.grad.data(), pb->grad.data());
        if (pr->requires_grad)
            for (std::size_t r = 0; r < idx.size(); ++r) {
                const double* g =
                    self.grad.data() + static_cast<std::size_t>(idx[r]) * cols;
                double* d = pr->grad.data() + r * cols;
                for (int c = 0; c < cols; ++c) d[c] += g[c];
            }
    });
}

// ============================================================
// Nonlinearities and normalizations
// ============================================================

Tensor softmax(const Tensor& x) {
    const auto& nx = node_of(x);
    auto out = make_raw(nx->rows, nx->cols, "softmax");
    kernels::softmax_rows(nx->rows, nx->cols, nx->value.data(), out->value.data());
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px](Node& self) {
        kernels::softmax_rows_grad(self.rows, self.cols, self.value.data(),
                                   self.grad.data(), px->grad.data());
    });
}

Tensor layer_norm(const Tensor& x, double eps) {
    const auto& nx = node_of(x);
    auto out = make_raw(nx->rows, nx->cols, "layer_norm");
    auto inv_std = std::make_shared<std::vector<double>>(nx->rows);
    kernels::layer_norm_rows(nx->rows, nx->cols, eps, nx->value.data(),
                             out->value.data(), inv_std->data());
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px, inv_std](Node& self) {
        kernels::layer_norm_rows_grad(self.rows, self.cols, self.value.data(),
                                      inv_std->data(), self.grad.data(),
                                      px->grad.data());
    });
}

Tensor selu(const Tensor& x) {
    const auto& nx = node_of(x);
    auto out = make_raw(nx->rows, nx->cols, "selu");
    kernels::selu(out->numel(), nx->value.data(), out->value.data());
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px](Node& self) {
        kernels::selu_grad(self.numel(), px->value.data(), self.grad.data(),
                           px->grad.data());
    });
}

Tensor gelu(const Tensor& x) {
    const auto& nx = node_of(x);
    auto out = make_raw(nx->rows, nx->cols, "gelu");
    kernels::gelu(out->numel(), nx->value.data(), out->value.data());
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px](Node& self) {
        kernels::gelu_grad(self.numel(), px->value.data(), self.grad.data(),
                           px->grad.data());
    });
}

Tensor exp(const Tensor& x) {
    const auto& nx = node_of(x);
    auto out = make_raw(nx->rows, nx->cols, "exp");
    kernels::vexp(out->numel(), nx->value.data(), out->value.data());
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px](Node& self) {
        for (std::size_t i = 0; i < self.value.size(); ++i)
            px->grad[i] += self.grad[i] * self.value[i];
    });
}

Tensor square(const Tensor& x) {
    const auto& nx = node_of(x);
    auto out = make_raw(nx->rows, nx->cols, "square");
    kernels::vmul(out->numel(), nx->value.data(), nx->value.data(),
                  out->value.data());
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px](Node& self) {
        for (std::size_t i = 0; i < self.value.size(); ++i)
            px->grad[i] += 2.0 * self.grad[i] * px->value[i];
    });
}

// ============================================================
// Reductions
// ============================================================

Tensor sum_all(const Tensor& x) {
    const auto& nx = node_of(x);
    auto out = make_raw(1, 1, "sum_all");
    double s = 0.0;
    for (double v : nx->value) s += v;
    out->value[0] = s;
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px](Node& self) {
        const double g = self.grad[0];
        for (double& d : px->grad) d += g;
    });
}

Tensor mean_all(const Tensor& x) {
    const auto& nx = node_of(x);
    auto out = make_raw(1, 1, "mean_all");
    double s = 0.0;
    for (double v : nx->value) s += v;
    const double inv = 1.0 / static_cast<double>(nx->numel());
    out->value[0] = s * inv;
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px, inv](Node& self) {
        const double g = self.grad[0] * inv;
        for (double& d : px->grad) d += g;
    });
}

Tensor row_sums(const Tensor& x) {
    const auto& nx = node_of(x);
    const int rows = nx->rows, cols = nx->cols;
    auto out = make_raw(rows, 1, "row_sums");
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        const double* xr = nx->value.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) s += xr[c];
        out->value[r] = s;
    }
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px, rows, cols](Node& self) {
        for (int r = 0; r < rows; ++r) {
            const double g = self.grad[r];
            double* d = px->grad.data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) d[c] += g;
        }
    });
}

Tensor col_sums(const Tensor& x) {
    const auto& nx = node_of(x);
    const int rows = nx->rows, cols = nx->cols;
    auto out = make_raw(1, cols, "col_sums");
    std::fill(out->value.begin(), out->value.end(), 0.0);
    for (int r = 0; r < rows; ++r) {
        const double* xr = nx->value.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) out->value[c] += xr[c];
    }
    Node* px = nx.get();
    return finish(std::move(out), {nx}, [px, rows, cols](Node& self) {
        for (int r = 0; r < rows; ++r) {
            double* d = px->grad.data() + static_cast<std::size_t>(r) * cols;
            for (int c = 0; c < cols; ++c) d[c] += self.grad[c];
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul_nt(x, w);
    if (b.defined()) y = add(y, b);
    return y;
}

}  // namespace sargen
