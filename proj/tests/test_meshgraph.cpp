// Mesh graph construction, synthetic generators, normalization, dataset I/O.
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "common.hpp"
#include "meshgraph.hpp"
#include "test_harness.hpp"

using namespace sargen;

namespace {

void construction_suite() {
    // Two nodes, one undirected edge: both directions materialize and the
    // displacement points from edge source to edge destination.
    MeshGraph g = build_mesh_graph(2, 2, {0, 0, 1, 0}, {{0, 1}}, 0, {});
    testh::record("pair.edge_count", g.edges.size() == 2);
    testh::record("pair.directions",
                  g.edges[0] == std::pair<int, int>(0, 1) &&
                      g.edges[1] == std::pair<int, int>(1, 0));
    testh::check_close("pair.disp01.x", g.edge_displacements[0], 1.0, 0.0);
    testh::check_close("pair.disp01.y", g.edge_displacements[1], 0.0, 0.0);
    testh::check_close("pair.disp10.x", g.edge_displacements[2], -1.0, 0.0);
    testh::check_close("pair.disp10.y", g.edge_displacements[3], 0.0, 0.0);

    MeshGraph tri =
        build_mesh_graph(3, 2, {0, 0, 1, 0, 0, 1}, {{0, 1}, {1, 2}, {0, 2}}, 0, {});
    testh::record("triangle.edge_count", tri.edges.size() == 6);
    bool sorted = std::is_sorted(tri.edges.begin(), tri.edges.end());
    testh::record("triangle.edges_sorted", sorted);

    testh::check_throws<std::invalid_argument>("reject.self_loop", [] {
        build_mesh_graph(2, 2, {0, 0, 1, 0}, {{0, 0}}, 0, {});
    });
    testh::check_throws<std::invalid_argument>("reject.duplicate", [] {
        build_mesh_graph(2, 2, {0, 0, 1, 0}, {{0, 1}, {0, 1}}, 0, {});
    });
    testh::check_throws<std::invalid_argument>("reject.reversed_duplicate", [] {
        build_mesh_graph(2, 2, {0, 0, 1, 0}, {{0, 1}, {1, 0}}, 0, {});
    });
    testh::check_throws<std::out_of_range>("reject.bad_index", [] {
        build_mesh_graph(2, 2, {0, 0, 1, 0}, {{0, 2}}, 0, {});
    });
    testh::check_throws<std::invalid_argument>("reject.position_size", [] {
        build_mesh_graph(2, 2, {0, 0, 1}, {{0, 1}}, 0, {});
    });
}

void grid_suite() {
    const int nx = 4, ny = 3;
    MeshGraph g = triangulated_grid(nx, ny);
    testh::record("grid.num_nodes", g.num_nodes == nx * ny);
    // Row-major ids: node (ix, iy) = iy*nx + ix at (ix/(nx-1), iy/(ny-1)).
    testh::check_close("grid.node5.x", g.positions[2 * 5 + 0], 1.0 / 3.0, 1e-15);
    testh::check_close("grid.node5.y", g.positions[2 * 5 + 1], 0.5, 1e-15);
    const std::size_t undirected =
        static_cast<std::size_t>((nx - 1) * ny + nx * (ny - 1) + (nx - 1) * (ny - 1));
    testh::record("grid.edge_count", g.edges.size() == 2 * undirected);
    // Every cell's diagonal runs from its low corner to its high corner.
    bool has_diag = false, has_anti = false;
    for (const auto& [a, b] : g.edges) {
        if (a == 0 && b == nx + 1) has_diag = true;
        if (a == 1 && b == nx) has_anti = true;
    }
    testh::record("grid.diagonal_orientation", has_diag && !has_anti);

    // Envelope peaks at the bounding-box center and follows
    // exp(-|x-x0|^2 / l^2) with l a quarter of the box diagonal.
    MeshGraph odd = triangulated_grid(5, 5);
    std::vector<double> env = field_envelope(odd);
    testh::check_close("envelope.center", env[2 * 5 + 2], 1.0, 1e-15);
    const double ell = 0.25 * std::sqrt(2.0);
    const double want_corner = std::exp(-0.5 / (ell * ell));
    testh::check_close("envelope.corner", env[0], want_corner, 1e-15);
}

void quasiperiodic_suite() {
    // Per-node marginal of a*sin(2*pi*theta + phi)*g is mean 0 and std
    // a*g/sqrt(2); Monte Carlo over 10^4 snapshots should land within a few
    // percent.
    const double a = 2.0;
    Dataset ds = gen_quasiperiodic(5, 5, a, 10000, 7);
    testh::record("qp.one_system", ds.systems.size() == 1);
    testh::record("qp.snapshot_count", ds.systems[0].snapshots.size() == 10000);
    testh::record("qp.condition_is_amplitude",
                  ds.systems[0].graph.num_conditions == 1 &&
                      ds.systems[0].graph.node_conditions[0] == a);

    const int center = 2 * 5 + 2;  // g = 1 there
    double sum = 0, sumsq = 0;
    for (const auto& fs : ds.systems[0].snapshots) {
        sum += fs.at(center, 0);
        sumsq += fs.at(center, 0) * fs.at(center, 0);
    }
    const double n = 10000;
    const double mean = sum / n;
    const double stddev = std::sqrt(sumsq / n - mean * mean);
    testh::check_close("qp.center_mean", mean, 0.0, 0.05 * a);
    testh::check_rel("qp.center_std", stddev, a / std::sqrt(2.0), 0.03);

    // Zero amplitude must be representable: every value is exactly zero.
    Dataset flat = gen_quasiperiodic(3, 3, 0.0, 4, 1);
    double max_abs = 0;
    for (const auto& fs : flat.systems[0].snapshots)
        for (double v : fs.values) max_abs = std::max(max_abs, std::abs(v));
    testh::check_close("qp.zero_amplitude", max_abs, 0.0, 0.0);

    // Same seed reproduces bitwise; different seed does not.
    Dataset again = gen_quasiperiodic(5, 5, a, 3, 7);
    Dataset other = gen_quasiperiodic(5, 5, a, 3, 8);
    testh::record("qp.seed_reproducible",
                  again.systems[0].snapshots[2].values ==
                      ds.systems[0].snapshots[2].values);
    testh::record("qp.seed_matters", other.systems[0].snapshots[0].values !=
                                         ds.systems[0].snapshots[0].values);
}

void bimodal_suite() {
    // Noise-free snapshots are sign * m * g exactly, one shared sign per
    // snapshot, and both signs appear over enough draws.
    const double m = 1.5;
    Dataset ds = gen_bimodal(5, 5, m, 0.0, 64, 3);
    const MeshGraph& g = ds.systems[0].graph;
    std::vector<double> env = field_envelope(g);
    int pos = 0, neg = 0;
    double max_err = 0;
    for (const auto& fs : ds.systems[0].snapshots) {
        const double sign = fs.at(2 * 5 + 2, 0) > 0 ? 1.0 : -1.0;
        (sign > 0 ? pos : neg)++;
        for (int i = 0; i < fs.num_nodes; ++i)
            max_err = std::max(max_err, std::abs(fs.at(i, 0) - sign * m * env[i]));
    }
    testh::check_close("bimodal.noise_free_shape", max_err, 0.0, 1e-15);
    testh::record("bimodal.both_signs", pos > 0 && neg > 0,
                  "pos=" + std::to_string(pos) + " neg=" + std::to_string(neg));
    testh::record("bimodal.condition_is_mode",
                  g.num_conditions == 1 && g.node_conditions[0] == m);

    // With noise, values differ from the clean shape but stay centered on it.
    Dataset noisy = gen_bimodal(5, 5, m, 0.1, 2000, 3);
    double dev_sumsq = 0;
    std::int64_t count = 0;
    for (const auto& fs : noisy.systems[0].snapshots) {
        const double sign = fs.at(2 * 5 + 2, 0) > 0 ? 1.0 : -1.0;
        for (int i = 0; i < fs.num_nodes; ++i) {
            const double d = fs.at(i, 0) - sign * m * env[i];
            dev_sumsq += d * d;
            ++count;
        }
    }
    testh::check_rel("bimodal.noise_std", std::sqrt(dev_sumsq / count), 0.1, 0.05);

    testh::check_throws<std::invalid_argument>("bimodal.reject_zero_mode",
                                               [] { gen_bimodal(3, 3, 0.0, 0.1, 4, 1); });
    testh::check_throws<std::invalid_argument>("bimodal.reject_negative_noise",
                                               [] { gen_bimodal(3, 3, 1.0, -0.1, 4, 1); });
}

void normalize_suite() {
    Dataset ds = gen_bimodal(4, 4, 2.0, 0.3, 50, 11);
    ChannelStats stats = compute_channel_stats(ds);
    Dataset normed = normalize(ds);
    testh::record("normalize.stats_attached", !normed.channel_stats.empty());

    // Standardized data has per-channel mean 0 and population std 1.
    double sum = 0, sumsq = 0;
    std::int64_t count = 0;
    for (const auto& sys : normed.systems)
        for (const auto& fs : sys.snapshots)
            for (double v : fs.values) {
                sum += v;
                sumsq += v * v;
                ++count;
            }
    testh::check_close("normalize.mean", sum / count, 0.0, 1e-12);
    testh::check_close("normalize.std",
                       std::sqrt(sumsq / count - (sum / count) * (sum / count)), 1.0,
                       1e-12);

    // Round trip through denormalize restores the raw values.
    double max_err = 0;
    for (std::size_t s = 0; s < ds.systems.size(); ++s)
        for (std::size_t t = 0; t < ds.systems[s].snapshots.size(); ++t) {
            FieldState back = denormalize(normed.systems[s].snapshots[t], stats);
            const FieldState& raw = ds.systems[s].snapshots[t];
            for (std::size_t i = 0; i < raw.values.size(); ++i)
                max_err = std::max(max_err, std::abs(back.values[i] - raw.values[i]));
        }
    testh::record("normalize.round_trip", max_err < 1e-12,
                  "max err " + std::to_string(max_err));

    FieldState one = ds.systems[0].snapshots[0];
    FieldState there = normalize_state(one, stats);
    FieldState back = denormalize(there, stats);
    double e = 0;
    for (std::size_t i = 0; i < one.values.size(); ++i)
        e = std::max(e, std::abs(back.values[i] - one.values[i]));
    testh::record("normalize.state_round_trip", e < 1e-12);

    // normalize_with applies foreign stats verbatim.
    ChannelStats fixed;
    fixed.mean = {1.0};
    fixed.stddev = {2.0};
    Dataset via = normalize_with(ds, fixed);
    testh::check_close("normalize.with_fixed_stats",
                       via.systems[0].snapshots[0].at(0, 0),
                       (ds.systems[0].snapshots[0].at(0, 0) - 1.0) / 2.0, 1e-15);

    // A constant channel cannot be standardized.
    testh::check_throws<NumericalError>("normalize.zero_variance", [] {
        Dataset flat = gen_quasiperiodic(3, 3, 0.0, 5, 1);
        compute_channel_stats(flat);
    });
}

void io_suite() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "sargen_meshgraph_test";
    fs::create_directories(dir);
    const std::string path = (dir / "ds.json").string();

    Dataset ds = normalize(gen_bimodal(3, 4, 1.0, 0.2, 6, 5));
    ds.meta["note"] = "round trip";
    write_dataset(path, ds);
    Dataset rt = read_dataset(path);

    testh::record("io.systems", rt.systems.size() == ds.systems.size());
    testh::record("io.space", rt.space == ds.space);
    testh::record("io.meta", rt.meta.at("note") == "round trip");
    testh::record("io.stats",
                  rt.channel_stats.mean == ds.channel_stats.mean &&
                      rt.channel_stats.stddev == ds.channel_stats.stddev);
    const MeshGraph& a = ds.systems[0].graph;
    const MeshGraph& b = rt.systems[0].graph;
    testh::record("io.graph", a.num_nodes == b.num_nodes && a.edges == b.edges &&
                                  a.positions == b.positions &&
                                  a.node_conditions == b.node_conditions &&
                                  a.edge_displacements == b.edge_displacements);
    bool snaps_equal = ds.systems[0].snapshots.size() == rt.systems[0].snapshots.size();
    double max_err = 0;
    for (std::size_t t = 0; snaps_equal && t < ds.systems[0].snapshots.size(); ++t) {
        const auto& x = ds.systems[0].snapshots[t].values;
        const auto& y = rt.systems[0].snapshots[t].values;
        snaps_equal = x.size() == y.size();
        for (std::size_t i = 0; snaps_equal && i < x.size(); ++i)
            max_err = std::max(max_err, std::abs(x[i] - y[i]));
    }
    testh::record("io.snapshots", snaps_equal && max_err < 1e-12,
                  "max err " + std::to_string(max_err));

    testh::check_throws<MissingArtifactError>(
        "io.missing_file", [&] { read_dataset((dir / "absent.json").string()); });
    {
        std::FILE* f = std::fopen((dir / "junk.json").string().c_str(), "w");
        std::fputs("{\"format\": \"something-else\"}", f);
        std::fclose(f);
    }
    testh::check_throws<ConfigError>(
        "io.wrong_format", [&] { read_dataset((dir / "junk.json").string()); });
    fs::remove_all(dir);
}

}  // namespace

int main() {
    return testh::run("meshgraph", [] {
        construction_suite();
        grid_suite();
        quasiperiodic_suite();
        bimodal_suite();
        normalize_suite();
        io_suite();
    });
}
