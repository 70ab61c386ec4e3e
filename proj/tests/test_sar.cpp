// Scale-autoregressive model: AR conditioning, flow-matching loss, Euler
// sampling, generation plumbing, and the training loop.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "fd_check.hpp"
#include "hierarchy.hpp"
#include "meshgraph.hpp"
#include "rng.hpp"
#include "sar.hpp"
#include "test_harness.hpp"

using namespace sargen;

namespace {

Tensor tile_rows(const Tensor& row, int n) {
    return matmul(Tensor::full(n, 1, 1.0), row);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            m = std::max(m, std::abs(a.at(i, j) - b.at(i, j)));
    return m;
}

/// Jitters every parameter so gates and attention paths are active. The
/// zero-initialized modulation outputs make fresh models exactly identity in
/// their conditioned blocks, which is the wrong regime for sensitivity and
/// gradient tests.
void wake(ParamStore& ps, double sigma, std::uint64_t seed) {
    Rng rng(seed, RngStream::kTest, 0);
    for (const auto& [name, t] : ps.entries()) {
        Tensor tt = t;
        double* v = tt.mutable_values();
        for (std::int64_t i = 0; i < tt.numel(); ++i) v[i] += sigma * rng.gaussian();
    }
}

std::vector<Tensor> all_params(const ParamStore& ps) {
    std::vector<Tensor> out;
    for (const auto& [name, t] : ps.entries()) out.push_back(t);
    return out;
}

MeshGraph path4() {
    return build_mesh_graph(4, 2, {0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0},
                            {{0, 1}, {1, 2}, {2, 3}}, 1, {0.5, 0.5, 0.5, 0.5});
}

SarConfig tiny_config(int num_scales) {
    SarConfig c;
    c.num_scales = num_scales;
    c.field_channels = 1;
    c.width = 8;
    c.emb_width = 8;
    c.num_heads = 2;
    c.num_slices = 3;
    c.cond_depth = 1;
    c.ar_depth = 1;
    c.sampler_depth = 1;
    c.pos_dim = 2;
    c.num_conditions = 1;
    c.latent_mode = false;
    return c;
}

/// 104-node graph whose 3-scale hierarchy has exactly |S| = (8, 24, 72).
/// Nodes 0..31 are centers, mutually non-adjacent; each group of four
/// consecutive centers shares one hub leaf (ids 32..39), which makes the
/// group a clique after one coarsening round; every center also carries two
/// private leaves (ids 40..103). Round one keeps all centers, round two keeps
/// the first center of each group.
MeshGraph clustered_graph() {
    const int n = 104;
    std::vector<double> pos;
    pos.reserve(2 * n);
    for (int i = 0; i < n; ++i) {
        pos.push_back(static_cast<double>(i % 13));
        pos.push_back(static_cast<double>(i / 13));
    }
    std::vector<std::pair<int, int>> edges;
    for (int g = 0; g < 8; ++g)
        for (int j = 0; j < 4; ++j) edges.push_back({4 * g + j, 32 + g});
    for (int c = 0; c < 32; ++c) {
        edges.push_back({c, 40 + 2 * c});
        edges.push_back({c, 41 + 2 * c});
    }
    return build_mesh_graph(n, 2, std::move(pos), edges, 1,
                            std::vector<double>(n, 1.0));
}

// ---------------------------------------------------------------- Euler

void euler_suite() {
    // For a point-mass target the exact velocity (s* - s)/(1 - r) reaches s*
    // in any number of left-endpoint Euler steps: each step closes 1/(n - m)
    // of the remaining gap, so the path telescopes.
    const double star = 1.3;
    for (int n : {1, 2, 3, 7, 10}) {
        Tensor s0 = Tensor::from_data(2, 1, {-0.4, 2.0});
        Tensor end = euler_integrate(s0, n, [&](const Tensor& s, double r) {
            return scale(add_scalar(scale(s, -1.0), star), 1.0 / (1.0 - r));
        });
        testh::check_close("euler.pointmass_n" + std::to_string(n),
                           std::max(std::abs(end.at(0, 0) - star),
                                    std::abs(end.at(1, 0) - star)),
                           0.0, 1e-12);
    }

    // Single step is literally s + u(s, 0).
    int calls = 0;
    Tensor s0 = Tensor::from_data(1, 1, {0.25});
    Tensor end = euler_integrate(s0, 1, [&](const Tensor& s, double r) {
        ++calls;
        testh::check_close("euler.single_step_time", r, 0.0, 0.0);
        return add_scalar(s, 1.0);
    });
    testh::record("euler.single_step_calls", calls == 1);
    testh::check_close("euler.single_step_value", end.at(0, 0), 0.25 + 1.25, 1e-15);

    testh::check_throws<ConfigError>("euler.zero_steps", [] {
        euler_integrate(Tensor::zeros(1, 1), 0,
                        [](const Tensor& s, double) { return s; });
    });
}

// ---------------------------------------------------------------- structure

void structure_suite() {
    MeshGraph grid = triangulated_grid(8, 8);
    Hierarchy h = build_hierarchy(grid, 3);
    ParamStore ps(3);
    SarConfig cfg = tiny_config(3);
    cfg.num_conditions = 0;  // plain grid carries no per-node conditions
    SarModel m = make_sar(ps, cfg);

    testh::record("structure.scale_emb_count", m.scale_emb.size() == 3);
    bool emb_small = true, emb_nonzero = false;
    for (int j = 0; j < m.mask_emb.cols(); ++j) {
        emb_small = emb_small && std::abs(m.mask_emb.at(0, j)) < 0.15;
        emb_nonzero = emb_nonzero || m.mask_emb.at(0, j) != 0.0;
    }
    testh::record("structure.mask_emb_init", emb_small && emb_nonzero);

    Tensor y = m.encode_conditions(grid, h);
    testh::record("structure.y_shape",
                  y.rows() == grid.num_nodes && y.cols() == 8);
    testh::check_close("structure.y_deterministic",
                       max_abs_diff(y, m.encode_conditions(grid, h)), 0.0, 0.0);

    // One output row per current-scale node, coarser rows discarded.
    Tensor z1 = m.ar_step(1, y, h, Tensor());
    testh::record("structure.z1_rows",
                  z1.rows() == static_cast<int>(h.partitions[0].size()));
    Rng vrng(1, RngStream::kTest, 1);
    Tensor v1 = Tensor::gaussian(z1.rows(), 1, vrng);
    Tensor z2 = m.ar_step(2, y, h, v1);
    testh::record("structure.z2_rows",
                  z2.rows() == static_cast<int>(h.partitions[1].size()));
    Tensor v12 = concat_rows({v1, Tensor::zeros(z2.rows(), 1)});
    Tensor z3 = m.ar_step(3, y, h, v12);
    testh::record("structure.z3_rows",
                  z3.rows() == static_cast<int>(h.partitions[2].size()));
    testh::record("structure.z_width", z2.cols() == 8 && z3.cols() == 8);

    testh::check_throws<ConfigError>("structure.k_zero",
                                     [&] { m.ar_step(0, y, h, Tensor()); });
    testh::check_throws<ConfigError>("structure.k_big",
                                     [&] { m.ar_step(4, y, h, v12); });
    testh::check_throws<ConfigError>("structure.missing_coarser",
                                     [&] { m.ar_step(2, y, h, Tensor()); });
    testh::check_throws<ConfigError>("structure.short_coarser", [&] {
        m.ar_step(3, y, h, v1);
    });

    // The loss can only be handed values for scales up to k: neither fewer
    // nor extra rows are accepted, so finer-scale values cannot leak in.
    Tensor full = Tensor::zeros(static_cast<int>(h.prefix(3).size()), 1);
    testh::check_throws<ConfigError>("structure.fm_rows_extra", [&] {
        fm_loss(m, grid, h, full, 2, 0);
    });
    testh::check_throws<ConfigError>("structure.fm_rows_short", [&] {
        fm_loss(m, grid, h, v1, 2, 0);
    });
}

// ---------------------------------------------------------------- masking

void masking_suite() {
    MeshGraph g = path4();
    Hierarchy h = build_hierarchy(g, 2);
    ParamStore ps(5);
    SarModel m = make_sar(ps, tiny_config(2));
    wake(ps, 0.1, 41);

    Tensor y = m.encode_conditions(g, h);
    Tensor base = Tensor::from_data(2, 1, {2.0, 1.0});
    Tensor bumped = Tensor::from_data(2, 1, {2.1, 1.0});
    Tensor za = m.ar_step(2, y, h, base);
    Tensor zb = m.ar_step(2, y, h, bumped);
    testh::record("masking.coarser_value_reaches_zk", max_abs_diff(za, zb) > 0.0);
    testh::check_close("masking.ar_deterministic",
                       max_abs_diff(za, m.ar_step(2, y, h, base)), 0.0, 0.0);

    // Same seed, same loss; the step index changes the draws.
    Tensor targets = Tensor::from_data(4, 1, {2.0, 1.0, -0.5, 0.25});
    const double l0 = fm_loss(m, g, h, targets, 2, 7, 0).scalar();
    const double l0b = fm_loss(m, g, h, targets, 2, 7, 0).scalar();
    const double l1 = fm_loss(m, g, h, targets, 2, 7, 1).scalar();
    testh::record("masking.fm_deterministic", l0 == l0b);
    testh::record("masking.fm_index_varies", l0 != l1);
    testh::record("masking.fm_finite", std::isfinite(l0) && l0 > 0.0);
}

// ---------------------------------------------------------------- sampler

void sampler_suite() {
    MeshGraph g = path4();
    Hierarchy h = build_hierarchy(g, 2);

    // At initialization every conditioned block is the identity, so the
    // velocity must be exactly head(lift([in-MLP output, time embedding])).
    {
        ParamStore ps(19);
        SarModel m = make_sar(ps, tiny_config(2));
        Tensor y = m.encode_conditions(g, h);
        Tensor coarser = Tensor::from_data(2, 1, {0.3, -0.8});
        Tensor z = m.ar_step(2, y, h, coarser);
        Tensor pos = scale_inputs(g, h, 2);
        Tensor y_k = row_select(y, h.partitions[1]);
        Tensor s = Tensor::from_data(2, 1, {0.1, 0.9});
        const double r = 0.4;

        Tensor remb = sinusoidal_embedding(r, 8);
        Tensor ctx = add(m.smp_pos.forward(pos), m.smp_cond.forward(y_k));
        Tensor vin = m.smp_in.forward(concat_cols({s, z, ctx}));
        Tensor manual = m.smp_head.forward(
            m.smp_lift.forward(concat_cols({vin, tile_rows(remb, 2)})));
        Tensor u = m.sampler_velocity(s, r, pos, y_k, z);
        testh::check_close("sampler.init_reduction", max_abs_diff(u, manual), 0.0,
                           0.0);

        // And sample_scale is then plain Euler under that reduced field.
        Rng rng_a(7, RngStream::kTest, 3);
        Tensor via_op = sample_scale(m, g, h, 2, y, coarser, 3, rng_a);
        Rng rng_b(7, RngStream::kTest, 3);
        Tensor state = Tensor::gaussian(2, 1, rng_b);
        for (int step = 0; step < 3; ++step) {
            const double t = static_cast<double>(step) / 3.0;
            Tensor e = sinusoidal_embedding(t, 8);
            Tensor vv = m.smp_in.forward(concat_cols({state, z, ctx}));
            Tensor uu = m.smp_head.forward(
                m.smp_lift.forward(concat_cols({vv, tile_rows(e, 2)})));
            state = add(state, scale(uu, 1.0 / 3.0));
        }
        testh::check_close("sampler.init_euler_reduction",
                           max_abs_diff(via_op, state), 0.0, 0.0);
    }

    ParamStore ps(23);
    SarModel m = make_sar(ps, tiny_config(2));
    wake(ps, 0.1, 59);
    Tensor y = m.encode_conditions(g, h);
    Tensor coarser = Tensor::from_data(2, 1, {0.3, -0.8});
    Tensor z = m.ar_step(2, y, h, coarser);
    Tensor pos = scale_inputs(g, h, 2);
    Tensor y_k = row_select(y, h.partitions[1]);
    Rng rng(31, RngStream::kTest, 9);
    Tensor s = Tensor::gaussian(2, 1, rng);

    Tensor u = m.sampler_velocity(s, 0.37, pos, y_k, z);
    testh::record("sampler.output_shape", u.rows() == 2 && u.cols() == 1);
    testh::check_close("sampler.deterministic",
                       max_abs_diff(u, m.sampler_velocity(s, 0.37, pos, y_k, z)),
                       0.0, 0.0);
    testh::check_throws<ConfigError>("sampler.bad_time", [&] {
        m.sampler_velocity(s, 1.5, pos, y_k, z);
    });

    // Swapping the two rows of every input swaps the two output rows.
    std::vector<int> swap{1, 0};
    Tensor u_sw = m.sampler_velocity(row_select(s, swap), 0.37,
                                     row_select(pos, swap), row_select(y_k, swap),
                                     row_select(z, swap));
    testh::check_close("sampler.permutation_equivariant",
                       max_abs_diff(u_sw, row_select(u, swap)), 0.0, 1e-10);
}

// ---------------------------------------------------------------- gradients

void gradient_suite() {
    MeshGraph g = path4();
    Hierarchy h = build_hierarchy(g, 2);
    ParamStore ps(29);
    SarModel m = make_sar(ps, tiny_config(2));
    wake(ps, 0.1, 67);

    // d(velocity loss)/d(state): the integrated variable itself. Conditioning
    // inputs are built detached so the probe tensor is the only leaf.
    {
        Tensor y, z, pos, y_k;
        {
            autograd::NoGradScope ng;
            y = m.encode_conditions(g, h);
            z = m.ar_step(2, y, h, Tensor::from_data(2, 1, {0.3, -0.8}));
            pos = scale_inputs(g, h, 2);
            y_k = row_select(y, h.partitions[1]);
        }
        Rng rng(3, RngStream::kTest, 2);
        Tensor s = Tensor::gaussian(2, 1, rng);
        s.set_requires_grad(true);
        const double err = testh::fd_max_rel_err(
            [&] { return mean_all(square(m.sampler_velocity(s, 0.37, pos, y_k, z))); },
            {s});
        testh::check_close("grad.velocity_wrt_state", err, 0.0, 1e-5);
    }

    // Full training loss against finite differences over sampled parameter
    // entries of every tensor in the store (fixed seed freezes the draws).
    Tensor targets = Tensor::from_data(4, 1, {2.0, 1.0, -0.5, 0.25});
    const double err = testh::fd_max_rel_err_sampled(
        [&] { return fm_loss(m, g, h, targets, 2, 13, 5); }, all_params(ps), 4);
    testh::check_close("grad.fm_loss_params", err, 0.0, 1e-5);
}

// ---------------------------------------------------------------- generate

void generate_suite() {
    MeshGraph g = path4();
    Hierarchy h = build_hierarchy(g, 2);
    ParamStore ps(37);
    SarModel m = make_sar(ps, tiny_config(2));
    wake(ps, 0.1, 71);

    GenerateResult a = generate(m, g, h, {2, 2}, 99);
    GenerateResult b = generate(m, g, h, {2, 2}, 99);
    testh::record("generate.deterministic", a.field.values == b.field.values);
    testh::record("generate.shape", a.field.num_nodes == 4 &&
                                        a.field.channels == 1 &&
                                        a.field.space == FieldSpace::kPhysical);
    testh::record("generate.evals", a.node_evaluations == 2 * 2 + 2 * 2);

    GenerateResult c = generate(m, g, h, {2, 2}, 100);
    testh::record("generate.seed_matters", a.field.values != c.field.values);

    Tensor y = m.encode_conditions(g, h);
    GenerateResult d = generate(m, g, h, {2, 2}, 99, 0, &y);
    testh::record("generate.cached_y_bitwise", a.field.values == d.field.values);

    GenerateResult e = generate(m, g, h, {2, 2}, 99, 1);
    testh::record("generate.sample_index_matters",
                  a.field.values != e.field.values);

    // Undoing training-time standardization is an affine map on the output.
    SarModel scaled = m;
    scaled.value_stats = ChannelStats{{1.0}, {2.0}};
    GenerateResult f = generate(scaled, g, h, {2, 2}, 99);
    double affine_err = 0.0;
    for (std::size_t i = 0; i < a.field.values.size(); ++i)
        affine_err = std::max(affine_err, std::abs(f.field.values[i] -
                                                   (2.0 * a.field.values[i] + 1.0)));
    testh::check_close("generate.value_stats_affine", affine_err, 0.0, 1e-12);

    testh::check_throws<ConfigError>("generate.schedule_length",
                                     [&] { generate(m, g, h, {2}, 99); });
    testh::check_throws<ConfigError>("generate.schedule_zero",
                                     [&] { generate(m, g, h, {2, 0}, 99); });

    // Latent mode demands its decoder; with one attached, output is physical
    // with the decoder's channel count.
    {
        ParamStore ps2(41);
        SarConfig lc = tiny_config(2);
        lc.latent_mode = true;
        SarModel lm = make_sar(ps2, lc);
        testh::check_throws<ConfigError>("generate.latent_needs_decoder",
                                         [&] { generate(lm, g, h, {1, 1}, 5); });
        ParamStore psv(43);
        VaeModel vae = make_vae(psv, "vae", 2, 1, 8, 2);
        lm.vae = &vae;
        GenerateResult lr = generate(lm, g, h, {1, 1}, 5);
        testh::record("generate.latent_decodes",
                      lr.field.space == FieldSpace::kPhysical &&
                          lr.field.channels == 2 && lr.field.num_nodes == 4);
    }

    // K=1 degenerates to a single flow-matching pass over all nodes.
    {
        ParamStore ps3(47);
        SarModel m1 = make_sar(ps3, tiny_config(1));
        Hierarchy h1 = build_hierarchy(g, 1);
        GenerateResult r1 = generate(m1, g, h1, {3}, 17);
        testh::record("generate.single_scale",
                      r1.field.num_nodes == 4 && r1.node_evaluations == 3 * 4);
    }
}

void cost_accounting_suite() {
    MeshGraph g = clustered_graph();
    Hierarchy h = build_hierarchy(g, 3);
    testh::record("cost.sizes_8_24_72", h.partitions[0].size() == 8 &&
                                            h.partitions[1].size() == 24 &&
                                            h.partitions[2].size() == 72);

    ParamStore ps(53);
    SarModel m = make_sar(ps, tiny_config(3));
    GenerateResult lean = generate(m, g, h, {10, 6, 1}, 1);
    GenerateResult flat = generate(m, g, h, {10, 10, 10}, 1);
    testh::record("cost.lean_296", lean.node_evaluations == 296,
                  std::to_string(lean.node_evaluations));
    testh::record("cost.flat_1040", flat.node_evaluations == 1040,
                  std::to_string(flat.node_evaluations));
}

// ---------------------------------------------------------------- training

void uniform_scale_draw_suite() {
    // Mirrors the training loop's per-step draw order (system, snapshot,
    // scale) and checks the scale marginal is uniform.
    const int n = 10000;
    int counts[3] = {0, 0, 0};
    for (int step = 0; step < n; ++step) {
        Rng pick(11, RngStream::kTrainSample, static_cast<std::uint64_t>(step));
        pick.uniform_int(3);
        pick.uniform_int(17);
        ++counts[pick.uniform_int(3)];
    }
    const double third = 1.0 / 3.0;
    const double band = 3.0 * std::sqrt(third * (1.0 - third) / n);
    for (int k = 0; k < 3; ++k)
        testh::record("train.uniform_k_scale" + std::to_string(k + 1),
                      std::abs(counts[k] / static_cast<double>(n) - third) <= band,
                      std::to_string(counts[k]));
}

void pointmass_training_suite() {
    // One node, one channel, every snapshot equal to s* = 0.7. The optimal
    // velocity the loss admits is (s* - s)/(1 - r); probe it at s = 0.3,
    // r = 0.5 where the training path density is high.
    MeshGraph g = build_mesh_graph(1, 2, {0.5, 0.5}, {}, 1, {1.0});
    System sys;
    sys.graph = g;
    FieldState snap;
    snap.num_nodes = 1;
    snap.channels = 1;
    snap.values = {0.7};
    sys.snapshots.assign(60, snap);
    Dataset ds;
    ds.systems.push_back(std::move(sys));
    ds.channel_stats = ChannelStats{{0.0}, {1.0}};  // identity, values are tame

    SarConfig mc = tiny_config(1);
    mc.width = 16;
    mc.emb_width = 16;
    mc.num_slices = 4;
    SarTrainConfig tc;
    tc.initial_lr = 1e-3;
    tc.patience_epochs = 4;
    tc.steps_per_epoch = 150;
    tc.max_epochs = 14;
    tc.seed = 5;
    TrainedSar trained = train_sar(ds, mc, tc);

    Hierarchy h = build_hierarchy(g, 1);
    autograd::NoGradScope ng;
    Tensor y = trained.model.encode_conditions(g, h);
    Tensor z = trained.model.ar_step(1, y, h, Tensor());
    Tensor pos = scale_inputs(g, h, 1);
    Tensor y_k = row_select(y, h.partitions[0]);
    Tensor u = trained.model.sampler_velocity(Tensor::from_data(1, 1, {0.3}), 0.5,
                                              pos, y_k, z);
    testh::check_rel("train.pointmass_velocity", u.at(0, 0),
                     (0.7 - 0.3) / (1.0 - 0.5), 0.10);
}

void training_suite() {
    Dataset raw = gen_bimodal(4, 4, 1.0, 0.05, 32, 3);
    Dataset ds = normalize(raw);

    SarConfig mc = tiny_config(2);
    mc.width = 16;
    mc.emb_width = 16;
    mc.num_slices = 4;
    SarTrainConfig tc;
    tc.initial_lr = 1e-3;
    tc.patience_epochs = 5;
    tc.steps_per_epoch = 100;
    tc.max_epochs = 2;
    tc.seed = 11;
    tc.metrics_csv = "sar_train_metrics.csv";

    TrainedSar t1 = train_sar(ds, mc, tc);
    testh::record("train.epochs_ran", t1.loss_history.size() == 2);
    testh::record("train.loss_decreases", t1.loss_history[1] < t1.loss_history[0],
                  std::to_string(t1.loss_history[0]) + " -> " +
                      std::to_string(t1.loss_history[1]));
    testh::record("train.stats_kept", !t1.model.value_stats.empty());

    std::ifstream csv(tc.metrics_csv);
    std::string line;
    int lines = 0;
    bool header = false;
    while (std::getline(csv, line)) {
        if (lines == 0) header = line == "step,loss,lr";
        ++lines;
    }
    testh::record("train.metrics_csv", header && lines == 1 + 200,
                  std::to_string(lines) + " lines");
    std::remove(tc.metrics_csv.c_str());

    TrainedSar t2 = train_sar(ds, mc, tc);
    std::remove(tc.metrics_csv.c_str());
    testh::record("train.bitwise_rerun", t1.loss_history == t2.loss_history);

    testh::check_throws<ConfigError>("train.needs_normalized",
                                     [&] { train_sar(raw, mc, tc); });
    SarConfig latent_mc = mc;
    latent_mc.latent_mode = true;
    testh::check_throws<ConfigError>("train.space_mismatch",
                                     [&] { train_sar(ds, latent_mc, tc); });
}

}  // namespace

int main() {
    return testh::run("sar", [] {
        euler_suite();
        structure_suite();
        masking_suite();
        sampler_suite();
        gradient_suite();
        generate_suite();
        cost_accounting_suite();
        uniform_scale_draw_suite();
        pointmass_training_suite();
        training_suite();
    });
}
