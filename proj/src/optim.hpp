/// optim.hpp - parameter registry, Adam, and plateau LR scheduling.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace sargen {

/// Ordered registry of named trainable tensors. Creation order is part of the
/// artifact format: parameter initialization draws from (seed, kParamInit,
/// creation_index), so rebuilding a model with the same seed reproduces the
/// same initial weights bit for bit.
class ParamStore {
  public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    /// Torch-style U(-sqrt(1/fan_in), sqrt(1/fan_in)).
    Tensor uniform_fan_in(const std::string& name, int rows, int cols, int fan_in);
    Tensor normal(const std::string& name, int rows, int cols, double sigma);
    Tensor constant(const std::string& name, int rows, int cols, double value);

    const std::vector<std::pair<std::string, Tensor>>& entries() const {
        return entries_;
    }
    /// Null when absent.
    const Tensor* find(const std::string& name) const;
    Tensor* find(const std::string& name);

    std::int64_t total_parameters() const;
    void zero_grad();
    std::uint64_t seed() const { return seed_; }

  private:
    Tensor insert(const std::string& name, Tensor t);
    std::uint64_t seed_ = 0;
    std::uint64_t next_index_ = 0;
    std::vector<std::pair<std::string, Tensor>> entries_;
};

struct AdamState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

class AdamOptimizer {
  public:
    explicit AdamOptimizer(ParamStore& store, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8);

    void step(double lr);
    void zero_grad() { store_->zero_grad(); }

    const AdamState& state() const { return state_; }
    /// Restores moments saved in a checkpoint. Shape-checked.
    void restore(AdamState state);

  private:
    ParamStore* store_;
    double beta1_, beta2_, eps_;
    AdamState state_;
};

struct PlateauConfig {
    double initial_lr = 1e-3;
    double reduction_factor = 10.0;
    int patience_epochs = 10;
    double floor_lr = 1e-6;
    /// Relative improvement threshold: loss must beat best*(1 - rel_tol).
    double rel_tol = 1e-4;
};

/// Reduce-on-plateau: divide the LR by reduction_factor whenever the best
/// observed epoch loss has not improved for patience_epochs epochs; signal
/// stop once the LR falls below floor_lr.
class PlateauSchedule {
  public:
    explicit PlateauSchedule(PlateauConfig cfg);

    void observe(double epoch_loss);
    double lr() const { return lr_; }
    bool stopped() const { return stopped_; }
    double best_loss() const { return best_; }
    int epochs_since_improvement() const { return since_improvement_; }

  private:
    PlateauConfig cfg_;
    double lr_;
    double best_;
    bool has_best_ = false;
    bool stopped_ = false;
    int since_improvement_ = 0;
};

/// Replays a whole loss history through a fresh schedule and returns the
/// current learning rate.
double plateau_lr(const PlateauConfig& cfg, std::span<const double> history);

}  // namespace sargen
