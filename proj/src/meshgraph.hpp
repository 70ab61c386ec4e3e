/// meshgraph.hpp - mesh graphs, field snapshots, synthetic datasets.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace sargen {

/// Bidirectional graph over mesh nodes. Edges are stored directed, both
/// directions materialized, sorted lexicographically. Immutable after
/// construction; safe to share read-only across threads.
struct MeshGraph {
    int num_nodes = 0;
    int dim = 0;
    int num_conditions = 0;
    std::vector<double> positions;          // [num_nodes * dim]
    std::vector<std::pair<int, int>> edges; // directed (src, dst)
    std::vector<double> node_conditions;    // [num_nodes * num_conditions]
    std::vector<double> edge_displacements; // [edges.size() * dim], x_dst - x_src

    std::span<const double> position(int i) const {
        return {positions.data() + static_cast<std::size_t>(i) * dim,
                static_cast<std::size_t>(dim)};
    }
};

enum class FieldSpace { kPhysical, kLatent };

/// One snapshot of per-node channel values, row-major [num_nodes, channels].
struct FieldState {
    int num_nodes = 0;
    int channels = 0;
    FieldSpace space = FieldSpace::kPhysical;
    std::vector<double> values;

    double at(int node, int ch) const {
        return values[static_cast<std::size_t>(node) * channels + ch];
    }
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    bool empty() const { return mean.empty(); }
};

struct System {
    MeshGraph graph;
    std::vector<FieldState> snapshots;
};

struct Dataset {
    std::vector<System> systems;
    ChannelStats channel_stats;  // set once normalized
    FieldSpace space = FieldSpace::kPhysical;
    nlohmann::json meta = nlohmann::json::object();

    int channels() const;
    std::int64_t total_snapshots() const;
};

// ============================================================
// Construction and generators
// ============================================================

/// Validates indices, rejects self-loops and duplicate undirected edges, then
/// materializes both edge directions and displacement vectors.
MeshGraph build_mesh_graph(int num_nodes, int dim, std::vector<double> positions,
                           const std::vector<std::pair<int, int>>& undirected_edges,
                           int num_conditions, std::vector<double> node_conditions);

/// Rectangular nx x ny grid on the unit square, every cell split along the
/// same diagonal, row-major node ids. Conditions empty.
MeshGraph triangulated_grid(int nx, int ny);

/// Gaussian bump centered on the domain: g(x) = exp(-|x - x0|^2 / l^2) with
/// x0 the bounding-box center and l = 0.25 * bounding-box diagonal.
std::vector<double> field_envelope(const MeshGraph& graph);

/// Traveling-wave snapshots s_i = a sin(2 pi theta_t + phi(x_i)) g(x_i) with
/// theta_t ~ U[0,1), phi(x) = 2 pi x_1 / L. Per-node marginal: mean 0,
/// std a g(x_i) / sqrt(2).
Dataset gen_quasiperiodic(int grid_nx, int grid_ny, double amplitude_a,
                          int num_snapshots, std::uint64_t seed);

/// Two-mode snapshots s_i = sigma_t m g(x_i) + eps_i, sign sigma_t shared by
/// the whole snapshot, eps_i ~ N(0, noise_sigma^2).
Dataset gen_bimodal(int grid_nx, int grid_ny, double mode_m, double noise_sigma,
                    int num_snapshots, std::uint64_t seed);

// ============================================================
// Normalization
// ============================================================

/// Per-channel mean and population std over all systems and snapshots.
/// Raises NumericalError on a zero-variance channel.
ChannelStats compute_channel_stats(const Dataset& ds);

/// Standardizes every channel with freshly computed stats (stored in the
/// result).
Dataset normalize(const Dataset& ds);
/// Standardizes with the given stats (e.g. apply training stats to held-out
/// data).
Dataset normalize_with(const Dataset& ds, const ChannelStats& stats);

FieldState normalize_state(const FieldState& fs, const ChannelStats& stats);
FieldState denormalize(const FieldState& fs, const ChannelStats& stats);

// ============================================================
// Dataset JSON I/O
// ============================================================

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

nlohmann::json dataset_to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace sargen
