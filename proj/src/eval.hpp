/// eval.hpp - distributional and per-sample metrics over sets of field
/// states. All metrics work on the values as given; callers standardize
/// channels beforehand when comparability across runs matters.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "meshgraph.hpp"

namespace sargen {

/// A bag of field snapshots sharing one graph and shape.
struct SampleSet {
    std::vector<FieldState> fields;
    std::string provenance;  // "generated" or "ground-truth"
};

/// Validates shape consistency (nonempty, equal node/channel counts).
SampleSet make_sample_set(std::vector<FieldState> fields, std::string provenance);

/// Wasserstein-2 distance between the empirical distributions of the two
/// sets. Each state is flattened to one point in R^(nodes*channels); the
/// optimal pairing under squared Euclidean cost is solved exactly and the
/// square root of the mean transported cost returned. Equal set sizes use
/// the Hungarian matcher, unequal sizes the uniform-marginal transport LP.
double w2_distance(const SampleSet& a, const SampleSet& b);

/// Pearson-correlates the sample against every trajectory state, then scores
/// the best-correlated state as reference: R^2 = 1 - SS_res / SS_tot.
/// Zero-variance references are skipped; NumericalError if none remain.
double r2_best_match(const FieldState& sample,
                     const std::vector<FieldState>& trajectory);

struct PerNodeStats {
    FieldState mean;
    FieldState stddev;  // sample (n-1) normalization
};

/// Per-node, per-channel mean and sample standard deviation. Needs at least
/// two samples.
PerNodeStats per_node_stats(const SampleSet& set);

/// Turbulent kinetic energy per node: half the summed population variances
/// of the two velocity channels.
std::vector<double> tke(const SampleSet& set, int u_channel, int v_channel);

/// Reynolds shear stress per node: population covariance of the fluctuations
/// of the two velocity channels (plain covariance, no sign flip).
std::vector<double> rss(const SampleSet& set, int u_channel, int v_channel);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    double bin_width = 0.0;
    std::vector<double> density;  // integrates to 1 over the bins
};

/// Density histogram of one node/channel across the set. The range spans the
/// observed min..max; an all-equal sample gets a unit window centered on the
/// value so the density still integrates to 1.
Histogram pdf_histogram(const SampleSet& set, int node, int channel, int bins);

/// Cross-node sign coherence: per sample, the fraction of entries agreeing
/// with that sample's majority sign (always >= 1/2); averaged over samples.
/// A set of spatially coherent fields scores near 1, fields whose nodes pick
/// signs independently score near 1/2.
double sign_agreement(const SampleSet& set);

/// Fraction of samples whose majority sign is positive. A balanced two-mode
/// distribution sits near 1/2.
double positive_fraction(const SampleSet& set);

/// Serializable result row for the eval and bench commands.
struct MetricReport {
    std::string name;
    double scalar = 0.0;
    std::vector<double> per_node;  // empty for scalar metrics
    int samples_a = 0;
    int samples_b = 0;
    nlohmann::json config = nlohmann::json::object();
};

nlohmann::json metric_report_to_json(const MetricReport& r);

}  // namespace sargen
