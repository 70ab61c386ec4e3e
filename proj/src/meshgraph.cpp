#include "meshgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "common.hpp"
#include "rng.hpp"

namespace sargen {

int Dataset::channels() const {
    for (const auto& sys : systems)
        if (!sys.snapshots.empty()) return sys.snapshots.front().channels;
    return 0;
}

std::int64_t Dataset::total_snapshots() const {
    std::int64_t n = 0;
    for (const auto& sys : systems) n += static_cast<std::int64_t>(sys.snapshots.size());
    return n;
}

// ============================================================
// Construction
// ============================================================

MeshGraph build_mesh_graph(int num_nodes, int dim, std::vector<double> positions,
                           const std::vector<std::pair<int, int>>& undirected_edges,
                           int num_conditions, std::vector<double> node_conditions) {
    if (num_nodes <= 0) throw std::invalid_argument("build_mesh_graph: no nodes");
    if (dim <= 0) throw std::invalid_argument("build_mesh_graph: dim must be positive");
    if (positions.size() != static_cast<std::size_t>(num_nodes) * dim)
        throw std::invalid_argument("build_mesh_graph: positions size mismatch");
    if (node_conditions.size() != static_cast<std::size_t>(num_nodes) * num_conditions)
        throw std::invalid_argument("build_mesh_graph: conditions size mismatch");

    std::set<std::pair<int, int>> seen;
    for (const auto& [a, b] : undirected_edges) {
        if (a < 0 || a >= num_nodes || b < 0 || b >= num_nodes)
            throw std::out_of_range("build_mesh_graph: edge index out of range");
        if (a == b)
            throw std::invalid_argument("build_mesh_graph: self-loop on node " +
                                        std::to_string(a));
        if (!seen.insert({std::min(a, b), std::max(a, b)}).second)
            throw std::invalid_argument("build_mesh_graph: duplicate undirected edge " +
                                        std::to_string(a) + "-" + std::to_string(b));
    }

    MeshGraph g;
    g.num_nodes = num_nodes;
    g.dim = dim;
    g.num_conditions = num_conditions;
    g.positions = std::move(positions);
    g.node_conditions = std::move(node_conditions);
    g.edges.reserve(seen.size() * 2);
    for (const auto& [a, b] : seen) {
        g.edges.emplace_back(a, b);
        g.edges.emplace_back(b, a);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edge_displacements.resize(g.edges.size() * dim);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [i, j] = g.edges[e];
        for (int d = 0; d < dim; ++d)
            g.edge_displacements[e * dim + d] =
                g.positions[static_cast<std::size_t>(j) * dim + d] -
                g.positions[static_cast<std::size_t>(i) * dim + d];
    }
    return g;
}

MeshGraph triangulated_grid(int nx, int ny) {
    if (nx < 2 || ny < 2)
        throw std::invalid_argument("triangulated_grid: need at least 2x2 nodes");
    const int n = nx * ny;
    std::vector<double> pos(static_cast<std::size_t>(n) * 2);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            const int id = iy * nx + ix;
            pos[2 * id + 0] = static_cast<double>(ix) / (nx - 1);
            pos[2 * id + 1] = static_cast<double>(iy) / (ny - 1);
        }
    std::vector<std::pair<int, int>> edges;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            const int id = iy * nx + ix;
            if (ix + 1 < nx) edges.emplace_back(id, id + 1);
            if (iy + 1 < ny) edges.emplace_back(id, id + nx);
            // Same diagonal in every cell keeps hierarchies reproducible.
            if (ix + 1 < nx && iy + 1 < ny) edges.emplace_back(id, id + nx + 1);
        }
    return build_mesh_graph(n, 2, std::move(pos), edges, 0, {});
}

std::vector<double> field_envelope(const MeshGraph& graph) {
    const int d = graph.dim;
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < graph.num_nodes; ++i)
        for (int k = 0; k < d; ++k) {
            const double x = graph.positions[static_cast<std::size_t>(i) * d + k];
            lo[k] = std::min(lo[k], x);
            hi[k] = std::max(hi[k], x);
        }
    double diag2 = 0.0;
    for (int k = 0; k < d; ++k) diag2 += (hi[k] - lo[k]) * (hi[k] - lo[k]);
    const double ell = 0.25 * std::sqrt(diag2);
    std::vector<double> g(graph.num_nodes);
    for (int i = 0; i < graph.num_nodes; ++i) {
        double r2 = 0.0;
        for (int k = 0; k < d; ++k) {
            const double c = 0.5 * (lo[k] + hi[k]);
            const double dx = graph.positions[static_cast<std::size_t>(i) * d + k] - c;
            r2 += dx * dx;
        }
        g[i] = std::exp(-r2 / (ell * ell));
    }
    return g;
}

// ============================================================
// Generators
// ============================================================

namespace {

MeshGraph grid_with_condition(int nx, int ny, double condition) {
    MeshGraph g = triangulated_grid(nx, ny);
    g.num_conditions = 1;
    g.node_conditions.assign(g.num_nodes, condition);
    return g;
}

}  // namespace

Dataset gen_quasiperiodic(int grid_nx, int grid_ny, double amplitude_a,
                          int num_snapshots, std::uint64_t seed) {
    if (amplitude_a < 0)
        throw std::invalid_argument("gen_quasiperiodic: amplitude must be >= 0");
    if (num_snapshots < 1)
        throw std::invalid_argument("gen_quasiperiodic: need at least one snapshot");
    Dataset ds;
    ds.space = FieldSpace::kPhysical;
    System sys;
    sys.graph = grid_with_condition(grid_nx, grid_ny, amplitude_a);
    const std::vector<double> g = field_envelope(sys.graph);
    // Domain width along the first axis sets the phase wavelength.
    double lo = sys.graph.positions[0], hi = sys.graph.positions[0];
    for (int i = 0; i < sys.graph.num_nodes; ++i) {
        lo = std::min(lo, sys.graph.positions[2 * static_cast<std::size_t>(i)]);
        hi = std::max(hi, sys.graph.positions[2 * static_cast<std::size_t>(i)]);
    }
    const double width = hi - lo;
    const double two_pi = 2.0 * 3.14159265358979323846;
    sys.snapshots.reserve(num_snapshots);
    for (int t = 0; t < num_snapshots; ++t) {
        Rng rng(seed, RngStream::kDataPhase, static_cast<std::uint64_t>(t));
        const double theta = rng.uniform();
        FieldState fs;
        fs.num_nodes = sys.graph.num_nodes;
        fs.channels = 1;
        fs.space = FieldSpace::kPhysical;
        fs.values.resize(fs.num_nodes);
        for (int i = 0; i < fs.num_nodes; ++i) {
            const double x1 = sys.graph.positions[2 * static_cast<std::size_t>(i)] - lo;
            const double phase = two_pi * x1 / width;
            fs.values[i] = amplitude_a * std::sin(two_pi * theta + phase) * g[i];
        }
        sys.snapshots.push_back(std::move(fs));
    }
    ds.systems.push_back(std::move(sys));
    ds.meta = {{"generator", "quasiperiodic"},
               {"grid_nx", grid_nx},
               {"grid_ny", grid_ny},
               {"amplitude", amplitude_a},
               {"num_snapshots", num_snapshots},
               {"seed", seed}};
    return ds;
}

Dataset gen_bimodal(int grid_nx, int grid_ny, double mode_m, double noise_sigma,
                    int num_snapshots, std::uint64_t seed) {
    if (mode_m <= 0) throw std::invalid_argument("gen_bimodal: mode must be > 0");
    if (noise_sigma < 0)
        throw std::invalid_argument("gen_bimodal: noise_sigma must be >= 0");
    if (num_snapshots < 1)
        throw std::invalid_argument("gen_bimodal: need at least one snapshot");
    Dataset ds;
    ds.space = FieldSpace::kPhysical;
    System sys;
    sys.graph = grid_with_condition(grid_nx, grid_ny, mode_m);
    const std::vector<double> g = field_envelope(sys.graph);
    sys.snapshots.reserve(num_snapshots);
    for (int t = 0; t < num_snapshots; ++t) {
        Rng sign_rng(seed, RngStream::kDataSign, static_cast<std::uint64_t>(t));
        Rng noise_rng(seed, RngStream::kDataNoise, static_cast<std::uint64_t>(t));
        const double sign = sign_rng.uniform() < 0.5 ? 1.0 : -1.0;
        FieldState fs;
        fs.num_nodes = sys.graph.num_nodes;
        fs.channels = 1;
        fs.space = FieldSpace::kPhysical;
        fs.values.resize(fs.num_nodes);
        for (int i = 0; i < fs.num_nodes; ++i)
            fs.values[i] = sign * mode_m * g[i] + noise_sigma * noise_rng.gaussian();
        sys.snapshots.push_back(std::move(fs));
    }
    ds.systems.push_back(std::move(sys));
    ds.meta = {{"generator", "bimodal"},
               {"grid_nx", grid_nx},
               {"grid_ny", grid_ny},
               {"mode", mode_m},
               {"noise_sigma", noise_sigma},
               {"num_snapshots", num_snapshots},
               {"seed", seed}};
    return ds;
}

// ============================================================
// Normalization
// ============================================================

ChannelStats compute_channel_stats(const Dataset& ds) {
    const int channels = ds.channels();
    if (channels == 0) throw std::invalid_argument("channel stats of empty dataset");
    std::vector<double> sum(channels, 0.0), sumsq(channels, 0.0);
    std::int64_t count = 0;
    for (const auto& sys : ds.systems)
        for (const auto& fs : sys.snapshots) {
            if (fs.channels != channels)
                throw std::invalid_argument("dataset has inconsistent channel counts");
            for (int i = 0; i < fs.num_nodes; ++i)
                for (int c = 0; c < channels; ++c) {
                    const double v = fs.at(i, c);
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
            count += fs.num_nodes;
        }
    ChannelStats stats;
    stats.mean.resize(channels);
    stats.stddev.resize(channels);
    for (int c = 0; c < channels; ++c) {
        stats.mean[c] = sum[c] / static_cast<double>(count);
        const double var =
            sumsq[c] / static_cast<double>(count) - stats.mean[c] * stats.mean[c];
        stats.stddev[c] = std::sqrt(std::max(var, 0.0));
        if (!(stats.stddev[c] > 1e-12))
            throw NumericalError("channel " + std::to_string(c) +
                                 " has (near) zero variance; cannot normalize");
    }
    return stats;
}

namespace {

Dataset apply_stats(const Dataset& ds, const ChannelStats& stats) {
    const int channels = ds.channels();
    if (static_cast<int>(stats.mean.size()) != channels)
        throw std::invalid_argument("channel stats do not match dataset channels");
    Dataset out = ds;
    out.channel_stats = stats;
    for (auto& sys : out.systems)
        for (auto& fs : sys.snapshots)
            for (int i = 0; i < fs.num_nodes; ++i)
                for (int c = 0; c < channels; ++c)
                    fs.values[static_cast<std::size_t>(i) * channels + c] =
                        (fs.at(i, c) - stats.mean[c]) / stats.stddev[c];
    return out;
}

}  // namespace

Dataset normalize(const Dataset& ds) { return apply_stats(ds, compute_channel_stats(ds)); }

Dataset normalize_with(const Dataset& ds, const ChannelStats& stats) {
    return apply_stats(ds, stats);
}

FieldState normalize_state(const FieldState& fs, const ChannelStats& stats) {
    if (static_cast<int>(stats.mean.size()) != fs.channels)
        throw std::invalid_argument("normalize_state: stats/channel mismatch");
    FieldState out = fs;
    for (int i = 0; i < fs.num_nodes; ++i)
        for (int c = 0; c < fs.channels; ++c)
            out.values[static_cast<std::size_t>(i) * fs.channels + c] =
                (fs.at(i, c) - stats.mean[c]) / stats.stddev[c];
    return out;
}

FieldState denormalize(const FieldState& fs, const ChannelStats& stats) {
    if (static_cast<int>(stats.mean.size()) != fs.channels)
        throw std::invalid_argument("denormalize: stats/channel mismatch");
    FieldState out = fs;
    for (int i = 0; i < fs.num_nodes; ++i)
        for (int c = 0; c < fs.channels; ++c)
            out.values[static_cast<std::size_t>(i) * fs.channels + c] =
                fs.at(i, c) * stats.stddev[c] + stats.mean[c];
    return out;
}

// ============================================================
// JSON I/O
// ============================================================

namespace {
constexpr const char* kDatasetFormat = "sargen-dataset-v1";
}

nlohmann::json dataset_to_json(const Dataset& ds) {
    nlohmann::json j;
    j["format"] = kDatasetFormat;
    j["space"] = ds.space == FieldSpace::kLatent ? "latent" : "physical";
    if (!ds.channel_stats.empty())
        j["channel_stats"] = {{"mean", ds.channel_stats.mean},
                              {"std", ds.channel_stats.stddev}};
    j["meta"] = ds.meta;
    nlohmann::json systems = nlohmann::json::array();
    for (const auto& sys : ds.systems) {
        const MeshGraph& g = sys.graph;
        nlohmann::json graph;
        graph["dim"] = g.dim;
        nlohmann::json positions = nlohmann::json::array();
        for (int i = 0; i < g.num_nodes; ++i) {
            nlohmann::json p = nlohmann::json::array();
            for (int d = 0; d < g.dim; ++d)
                p.push_back(g.positions[static_cast<std::size_t>(i) * g.dim + d]);
            positions.push_back(std::move(p));
        }
        graph["positions"] = std::move(positions);
        // Undirected on disk; directions rebuilt on load.
        nlohmann::json edges = nlohmann::json::array();
        for (const auto& [a, b] : g.edges)
            if (a < b) edges.push_back({a, b});
        graph["edges"] = std::move(edges);
        nlohmann::json conds = nlohmann::json::array();
        for (int i = 0; i < g.num_nodes; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < g.num_conditions; ++c)
                row.push_back(
                    g.node_conditions[static_cast<std::size_t>(i) * g.num_conditions + c]);
            conds.push_back(std::move(row));
        }
        graph["node_conditions"] = std::move(conds);
        nlohmann::json snaps = nlohmann::json::array();
        for (const auto& fs : sys.snapshots) {
            nlohmann::json channels = nlohmann::json::array();
            for (int c = 0; c < fs.channels; ++c) {
                nlohmann::json vals = nlohmann::json::array();
                for (int i = 0; i < fs.num_nodes; ++i) vals.push_back(fs.at(i, c));
                channels.push_back(std::move(vals));
            }
            snaps.push_back(std::move(channels));
        }
        systems.push_back({{"graph", std::move(graph)}, {"snapshots", std::move(snaps)}});
    }
    j["systems"] = std::move(systems);
    return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kDatasetFormat)
        throw ConfigError("not a " + std::string(kDatasetFormat) + " document");
    Dataset ds;
    ds.space = j.value("space", "physical") == "latent" ? FieldSpace::kLatent
                                                        : FieldSpace::kPhysical;
    if (j.contains("channel_stats") && !j["channel_stats"].is_null()) {
        ds.channel_stats.mean = j["channel_stats"].at("mean").get<std::vector<double>>();
        ds.channel_stats.stddev = j["channel_stats"].at("std").get<std::vector<double>>();
    }
    ds.meta = j.value("meta", nlohmann::json::object());
    for (const auto& sysj : j.at("systems")) {
        const auto& graphj = sysj.at("graph");
        const int dim = graphj.at("dim");
        const auto& positions = graphj.at("positions");
        const int n = static_cast<int>(positions.size());
        std::vector<double> pos;
        pos.reserve(static_cast<std::size_t>(n) * dim);
        for (const auto& p : positions) {
            if (static_cast<int>(p.size()) != dim)
                throw ConfigError("dataset position row has wrong dimension");
            for (const auto& v : p) pos.push_back(v.get<double>());
        }
        std::vector<std::pair<int, int>> undirected;
        for (const auto& e : graphj.at("edges"))
            undirected.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        const auto& condsj = graphj.at("node_conditions");
        int num_conditions = 0;
        std::vector<double> conds;
        if (static_cast<int>(condsj.size()) != n)
            throw ConfigError("dataset node_conditions row count mismatch");
        if (n > 0) num_conditions = static_cast<int>(condsj.at(0).size());
        for (const auto& row : condsj) {
            if (static_cast<int>(row.size()) != num_conditions)
                throw ConfigError("dataset condition rows differ in length");
            for (const auto& v : row) conds.push_back(v.get<double>());
        }
        System sys;
        sys.graph = build_mesh_graph(n, dim, std::move(pos), undirected,
                                     num_conditions, std::move(conds));
        for (const auto& snapj : sysj.at("snapshots")) {
            FieldState fs;
            fs.space = ds.space;
            fs.channels = static_cast<int>(snapj.size());
            fs.num_nodes = n;
            fs.values.resize(static_cast<std::size_t>(n) * fs.channels);
            for (int c = 0; c < fs.channels; ++c) {
                const auto& vals = snapj.at(c);
                if (static_cast<int>(vals.size()) != n)
                    throw ConfigError("snapshot channel has wrong node count");
                for (int i = 0; i < n; ++i)
                    fs.values[static_cast<std::size_t>(i) * fs.channels + c] =
                        vals.at(i).get<double>();
            }
            sys.snapshots.push_back(std::move(fs));
        }
        ds.systems.push_back(std::move(sys));
    }
    return ds;
}

void write_dataset(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open '" + path + "' for writing");
    out << dataset_to_json(ds).dump(1) << "\n";
    if (!out) throw MissingArtifactError("short write to '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open dataset '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed dataset '" + path + "': " + e.what());
    }
    try {
        return dataset_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("dataset '" + path + "' is missing fields: " + e.what());
    }
}

}  // namespace sargen
