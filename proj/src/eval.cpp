/// eval.cpp - metric implementations.
#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "assignment.hpp"
#include "common.hpp"

namespace sargen {

namespace {

void require_consistent(const std::vector<FieldState>& fields,
                        const char* what) {
    if (fields.empty())
        throw ConfigError(std::string(what) + ": sample set is empty");
    const int nodes = fields.front().num_nodes;
    const int channels = fields.front().channels;
    for (const auto& f : fields)
        if (f.num_nodes != nodes || f.channels != channels)
            throw ConfigError(std::string(what) +
                              ": sample set mixes field shapes");
}

std::int64_t flat_size(const FieldState& f) {
    return static_cast<std::int64_t>(f.num_nodes) * f.channels;
}

}  // namespace

SampleSet make_sample_set(std::vector<FieldState> fields, std::string provenance) {
    require_consistent(fields, "make_sample_set");
    return SampleSet{std::move(fields), std::move(provenance)};
}

double w2_distance(const SampleSet& a, const SampleSet& b) {
    require_consistent(a.fields, "w2_distance");
    require_consistent(b.fields, "w2_distance");
    if (a.fields.front().num_nodes != b.fields.front().num_nodes ||
        a.fields.front().channels != b.fields.front().channels)
        throw ConfigError("w2_distance: sets have different field shapes");

    const int n_a = static_cast<int>(a.fields.size());
    const int n_b = static_cast<int>(b.fields.size());
    const std::int64_t dim = flat_size(a.fields.front());
    std::vector<double> cost(static_cast<std::size_t>(n_a) * n_b);
    for (int i = 0; i < n_a; ++i) {
        const double* xa = a.fields[static_cast<std::size_t>(i)].values.data();
        for (int j = 0; j < n_b; ++j) {
            const double* xb = b.fields[static_cast<std::size_t>(j)].values.data();
            double d2 = 0.0;
            for (std::int64_t t = 0; t < dim; ++t) {
                const double d = xa[t] - xb[t];
                d2 += d * d;
            }
            cost[static_cast<std::size_t>(i) * n_b + j] = d2;
        }
    }
    return std::sqrt(transport_cost(cost, n_a, n_b));
}

double r2_best_match(const FieldState& sample,
                     const std::vector<FieldState>& trajectory) {
    if (trajectory.empty())
        throw ConfigError("r2_best_match: trajectory is empty");
    const std::int64_t n = flat_size(sample);
    for (const auto& st : trajectory)
        if (flat_size(st) != n)
            throw ConfigError("r2_best_match: shape mismatch with trajectory");

    double s_mean = 0.0;
    for (std::int64_t t = 0; t < n; ++t) s_mean += sample.values[static_cast<std::size_t>(t)];
    s_mean /= static_cast<double>(n);
    double s_var = 0.0;
    for (std::int64_t t = 0; t < n; ++t) {
        const double d = sample.values[static_cast<std::size_t>(t)] - s_mean;
        s_var += d * d;
    }

    int best = -1;
    double best_corr = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        const auto& ref = trajectory[i].values;
        double r_mean = 0.0;
        for (std::int64_t t = 0; t < n; ++t) r_mean += ref[static_cast<std::size_t>(t)];
        r_mean /= static_cast<double>(n);
        double r_var = 0.0, cov = 0.0;
        for (std::int64_t t = 0; t < n; ++t) {
            const double dr = ref[static_cast<std::size_t>(t)] - r_mean;
            r_var += dr * dr;
            cov += dr * (sample.values[static_cast<std::size_t>(t)] - s_mean);
        }
        if (r_var <= 0.0) continue;  // flat reference, correlation undefined
        const double corr =
            s_var > 0.0 ? cov / std::sqrt(s_var * r_var) : 0.0;
        if (corr > best_corr) {
            best_corr = corr;
            best = static_cast<int>(i);
        }
    }
    if (best < 0)
        throw NumericalError(
            "r2_best_match: every trajectory state has zero variance");

    const auto& ref = trajectory[static_cast<std::size_t>(best)].values;
    double r_mean = 0.0;
    for (std::int64_t t = 0; t < n; ++t) r_mean += ref[static_cast<std::size_t>(t)];
    r_mean /= static_cast<double>(n);
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::int64_t t = 0; t < n; ++t) {
        const double dr = ref[static_cast<std::size_t>(t)] - r_mean;
        const double e = sample.values[static_cast<std::size_t>(t)] - ref[static_cast<std::size_t>(t)];
        ss_tot += dr * dr;
        ss_res += e * e;
    }
    return 1.0 - ss_res / ss_tot;
}

PerNodeStats per_node_stats(const SampleSet& set) {
    require_consistent(set.fields, "per_node_stats");
    const int n = static_cast<int>(set.fields.size());
    if (n < 2)
        throw ConfigError("per_node_stats: need at least two samples");
    const auto& first = set.fields.front();

    PerNodeStats out;
    out.mean.num_nodes = out.stddev.num_nodes = first.num_nodes;
    out.mean.channels = out.stddev.channels = first.channels;
    out.mean.space = out.stddev.space = first.space;
    const std::int64_t flat = flat_size(first);
    out.mean.values.assign(static_cast<std::size_t>(flat), 0.0);
    out.stddev.values.assign(static_cast<std::size_t>(flat), 0.0);

    for (const auto& f : set.fields)
        for (std::int64_t t = 0; t < flat; ++t)
            out.mean.values[static_cast<std::size_t>(t)] += f.values[static_cast<std::size_t>(t)];
    for (std::int64_t t = 0; t < flat; ++t)
        out.mean.values[static_cast<std::size_t>(t)] /= static_cast<double>(n);
    for (const auto& f : set.fields)
        for (std::int64_t t = 0; t < flat; ++t) {
            const double d = f.values[static_cast<std::size_t>(t)] -
                             out.mean.values[static_cast<std::size_t>(t)];
            out.stddev.values[static_cast<std::size_t>(t)] += d * d;
        }
    for (std::int64_t t = 0; t < flat; ++t)
        out.stddev.values[static_cast<std::size_t>(t)] =
            std::sqrt(out.stddev.values[static_cast<std::size_t>(t)] /
                      static_cast<double>(n - 1));
    return out;
}

namespace {

/// Per-node second moments of two channels; population (n) normalization.
void fluctuation_moments(const SampleSet& set, int u_channel, int v_channel,
                         std::vector<double>& var_u, std::vector<double>& var_v,
                         std::vector<double>& cov_uv) {
    require_consistent(set.fields, "velocity moments");
    const auto& first = set.fields.front();
    if (u_channel < 0 || u_channel >= first.channels || v_channel < 0 ||
        v_channel >= first.channels)
        throw ConfigError("velocity moments: channel out of range");
    const int n = static_cast<int>(set.fields.size());
    if (n < 2) throw ConfigError("velocity moments: need at least two samples");

    const int nodes = first.num_nodes;
    std::vector<double> mu(static_cast<std::size_t>(nodes), 0.0);
    std::vector<double> mv(static_cast<std::size_t>(nodes), 0.0);
    for (const auto& f : set.fields)
        for (int i = 0; i < nodes; ++i) {
            mu[static_cast<std::size_t>(i)] += f.at(i, u_channel);
            mv[static_cast<std::size_t>(i)] += f.at(i, v_channel);
        }
    for (int i = 0; i < nodes; ++i) {
        mu[static_cast<std::size_t>(i)] /= n;
        mv[static_cast<std::size_t>(i)] /= n;
    }
    var_u.assign(static_cast<std::size_t>(nodes), 0.0);
    var_v.assign(static_cast<std::size_t>(nodes), 0.0);
    cov_uv.assign(static_cast<std::size_t>(nodes), 0.0);
    for (const auto& f : set.fields)
        for (int i = 0; i < nodes; ++i) {
            const double du = f.at(i, u_channel) - mu[static_cast<std::size_t>(i)];
            const double dv = f.at(i, v_channel) - mv[static_cast<std::size_t>(i)];
            var_u[static_cast<std::size_t>(i)] += du * du;
            var_v[static_cast<std::size_t>(i)] += dv * dv;
            cov_uv[static_cast<std::size_t>(i)] += du * dv;
        }
    for (int i = 0; i < nodes; ++i) {
        var_u[static_cast<std::size_t>(i)] /= n;
        var_v[static_cast<std::size_t>(i)] /= n;
        cov_uv[static_cast<std::size_t>(i)] /= n;
    }
}

}  // namespace

std::vector<double> tke(const SampleSet& set, int u_channel, int v_channel) {
    std::vector<double> var_u, var_v, cov;
    fluctuation_moments(set, u_channel, v_channel, var_u, var_v, cov);
    std::vector<double> out(var_u.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * (var_u[i] + var_v[i]);
    return out;
}

std::vector<double> rss(const SampleSet& set, int u_channel, int v_channel) {
    std::vector<double> var_u, var_v, cov;
    fluctuation_moments(set, u_channel, v_channel, var_u, var_v, cov);
    return cov;
}

Histogram pdf_histogram(const SampleSet& set, int node, int channel, int bins) {
    require_consistent(set.fields, "pdf_histogram");
    if (bins < 2) throw ConfigError("pdf_histogram: need at least two bins");
    const auto& first = set.fields.front();
    if (node < 0 || node >= first.num_nodes || channel < 0 ||
        channel >= first.channels)
        throw ConfigError("pdf_histogram: node or channel out of range");

    std::vector<double> xs;
    xs.reserve(set.fields.size());
    for (const auto& f : set.fields) xs.push_back(f.at(node, channel));
    double lo = *std::min_element(xs.begin(), xs.end());
    double hi = *std::max_element(xs.begin(), xs.end());
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }

    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.bin_width = (hi - lo) / bins;
    h.density.assign(static_cast<std::size_t>(bins), 0.0);
    for (double x : xs) {
        int b = static_cast<int>((x - lo) / h.bin_width);
        b = std::clamp(b, 0, bins - 1);
        h.density[static_cast<std::size_t>(b)] += 1.0;
    }
    const double mass = static_cast<double>(xs.size()) * h.bin_width;
    for (double& d : h.density) d /= mass;
    return h;
}

double sign_agreement(const SampleSet& set) {
    require_consistent(set.fields, "sign_agreement");
    double total = 0.0;
    for (const auto& f : set.fields) {
        std::int64_t pos = 0;
        const std::int64_t n = flat_size(f);
        for (std::int64_t t = 0; t < n; ++t)
            if (f.values[static_cast<std::size_t>(t)] > 0.0) ++pos;
        const double p = static_cast<double>(pos) / static_cast<double>(n);
        total += std::max(p, 1.0 - p);
    }
    return total / static_cast<double>(set.fields.size());
}

double positive_fraction(const SampleSet& set) {
    require_consistent(set.fields, "positive_fraction");
    int positive = 0;
    for (const auto& f : set.fields) {
        std::int64_t pos = 0;
        const std::int64_t n = flat_size(f);
        for (std::int64_t t = 0; t < n; ++t)
            if (f.values[static_cast<std::size_t>(t)] > 0.0) ++pos;
        if (2 * pos > n) ++positive;
    }
    return static_cast<double>(positive) / static_cast<double>(set.fields.size());
}

nlohmann::json metric_report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["name"] = r.name;
    j["scalar"] = r.scalar;
    if (!r.per_node.empty()) j["per_node"] = r.per_node;
    j["samples_a"] = r.samples_a;
    j["samples_b"] = r.samples_b;
    if (!r.config.empty()) j["config"] = r.config;
    return j;
}

}  // namespace sargen
