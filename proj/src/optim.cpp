#include "optim.hpp"

#include <cmath>
#include <stdexcept>

#include "common.hpp"

namespace sargen {

// ============================================================
// ParamStore
// ============================================================

Tensor ParamStore::insert(const std::string& name, Tensor t) {
    if (find(name))
        throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    t.set_requires_grad(true);
    entries_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::uniform_fan_in(const std::string& name, int rows, int cols,
                                  int fan_in) {
    if (fan_in <= 0) throw std::invalid_argument("uniform_fan_in: fan_in <= 0");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng(seed_, RngStream::kParamInit, next_index_++);
    std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
    for (double& v : vals) v = (2.0 * rng.uniform() - 1.0) * bound;
    return insert(name, Tensor::from_data(rows, cols, std::move(vals)));
}

Tensor ParamStore::normal(const std::string& name, int rows, int cols,
                          double sigma) {
    Rng rng(seed_, RngStream::kParamInit, next_index_++);
    std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
    for (double& v : vals) v = sigma * rng.gaussian();
    return insert(name, Tensor::from_data(rows, cols, std::move(vals)));
}

Tensor ParamStore::constant(const std::string& name, int rows, int cols,
                            double value) {
    ++next_index_;  // keep downstream parameter draws stable across init kinds
    return insert(name, Tensor::full(rows, cols, value));
}

const Tensor* ParamStore::find(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return &t;
    return nullptr;
}

Tensor* ParamStore::find(const std::string& name) {
    for (auto& [n, t] : entries_)
        if (n == name) return &t;
    return nullptr;
}

std::int64_t ParamStore::total_parameters() const {
    std::int64_t total = 0;
    for (const auto& [n, t] : entries_) total += t.numel();
    return total;
}

void ParamStore::zero_grad() {
    for (auto& [n, t] : entries_) t.zero_grad();
}

// ============================================================
// Adam
// ============================================================

AdamOptimizer::AdamOptimizer(ParamStore& store, double beta1, double beta2,
                             double eps)
    : store_(&store), beta1_(beta1), beta2_(beta2), eps_(eps) {
    state_.m.reserve(store.entries().size());
    state_.v.reserve(store.entries().size());
    for (const auto& [name, t] : store.entries()) {
        state_.m.emplace_back(t.numel(), 0.0);
        state_.v.emplace_back(t.numel(), 0.0);
    }
}

void AdamOptimizer::step(double lr) {
    ++state_.step;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(state_.step));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(state_.step));
    const auto& entries = store_->entries();
    for (std::size_t p = 0; p < entries.size(); ++p) {
        Tensor t = entries[p].second;  // shared handle to the same storage
        const std::size_t n = static_cast<std::size_t>(t.numel());
        double* val = t.mutable_values();
        const double* g = t.mutable_grad();
        double* m = state_.m[p].data();
        double* v = state_.v[p].data();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamOptimizer::restore(AdamState state) {
    const auto& entries = store_->entries();
    if (state.m.size() != entries.size() || state.v.size() != entries.size())
        throw ConfigError("Adam restore: parameter count mismatch");
    for (std::size_t p = 0; p < entries.size(); ++p) {
        const auto n = static_cast<std::size_t>(entries[p].second.numel());
        if (state.m[p].size() != n || state.v[p].size() != n)
            throw ConfigError("Adam restore: moment shape mismatch for '" +
                              entries[p].first + "'");
    }
    state_ = std::move(state);
}

// ============================================================
// Plateau schedule
// ============================================================

PlateauSchedule::PlateauSchedule(PlateauConfig cfg) : cfg_(cfg), lr_(cfg.initial_lr), best_(0.0) {
    if (!(cfg.initial_lr > cfg.floor_lr) || !(cfg.floor_lr > 0.0))
        throw ConfigError("plateau schedule requires initial_lr > floor_lr > 0");
    if (!(cfg.reduction_factor > 1.0))
        throw ConfigError("plateau schedule requires reduction_factor > 1");
    if (cfg.patience_epochs < 1)
        throw ConfigError("plateau schedule requires patience_epochs >= 1");
}

void PlateauSchedule::observe(double epoch_loss) {
    if (stopped_) return;
    if (!has_best_ || epoch_loss < best_ - cfg_.rel_tol * std::abs(best_)) {
        best_ = epoch_loss;
        has_best_ = true;
        since_improvement_ = 0;
        return;
    }
    ++since_improvement_;
    if (since_improvement_ >= cfg_.patience_epochs) {
        lr_ /= cfg_.reduction_factor;
        since_improvement_ = 0;
        if (lr_ < cfg_.floor_lr) stopped_ = true;
    }
}

double plateau_lr(const PlateauConfig& cfg, std::span<const double> history) {
    PlateauSchedule sched(cfg);
    for (double loss : history) sched.observe(loss);
    return sched.lr();
}

}  // namespace sargen
