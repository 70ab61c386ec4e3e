/// sar.cpp - scale-autoregressive model assembly, training, and sampling.
#include "sar.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "common.hpp"

namespace sargen {

namespace {

Tensor tile_rows(const Tensor& row, int n) {
    return matmul(Tensor::full(n, 1, 1.0), row);
}

Tensor first_rows(const Tensor& x, int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    return row_select(x, idx);
}

Tensor last_rows(const Tensor& x, int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), x.rows() - n);
    return row_select(x, idx);
}

}  // namespace

Tensor NodewiseBlock::forward(const Tensor& x, const Tensor& emb) const {
    const Tensor m = mod.forward(emb);
    const Tensor alpha = add(alpha0, col_slice(m, 0, width));
    const Tensor beta = add(beta0, col_slice(m, width, width));
    const Tensor gamma = add(gamma0, col_slice(m, 2 * width, width));
    const Tensor h = add(mul(layer_norm(x), gamma), beta);
    return add(x, mul(alpha, mlp.forward(h)));
}

NodewiseBlock make_nodewise_block(ParamStore& ps, const std::string& name,
                                  int width, int emb_width) {
    NodewiseBlock b;
    b.width = width;
    b.mlp = make_mlp(ps, name + ".mlp", width, width, width);
    b.alpha0 = ps.constant(name + ".alpha0", 1, width, 0.0);
    b.beta0 = ps.constant(name + ".beta0", 1, width, 0.0);
    b.gamma0 = ps.constant(name + ".gamma0", 1, width, 1.0);
    b.mod = make_mlp(ps, name + ".mod", emb_width, width, 3 * width,
                     Activation::kGelu, /*zero_out=*/true);
    return b;
}

SarModel make_sar(ParamStore& ps, const SarConfig& c) {
    if (c.num_scales < 1)
        throw ConfigError("sar: num_scales must be at least 1");
    if (c.field_channels < 1 || c.width < 1 || c.pos_dim < 1)
        throw ConfigError("sar: channel, width and position dims must be positive");
    if (c.cond_depth < 0 || c.ar_depth < 0 || c.sampler_depth < 0 ||
        c.num_conditions < 0)
        throw ConfigError("sar: depths and condition count must be nonnegative");

    SarModel m;
    m.config = c;

    const int cond_in = c.pos_dim + c.num_conditions + c.num_scales;
    m.cond_lift = make_linear(ps, "cond.lift", cond_in, c.width);
    if (c.use_cond_encoder) {
        for (int i = 0; i < c.cond_depth; ++i)
            m.cond_blocks.push_back(make_transolver_block(
                ps, "cond.b" + std::to_string(i), c.width, c.num_heads, c.num_slices));
        m.cond_out = make_linear(ps, "cond.out", c.width, c.width);
    }

    m.value_lift = make_linear(ps, "ar.value_lift", c.field_channels, c.width);
    m.mask_emb = ps.normal("ar.mask_emb", 1, c.width, 0.02);
    for (int k = 1; k <= c.num_scales; ++k)
        m.scale_emb.push_back(
            ps.normal("ar.scale_emb" + std::to_string(k), 1, c.width, 0.02));
    m.ar_lift = make_linear(ps, "ar.lift", 2 * c.width, c.width);
    for (int i = 0; i < c.ar_depth; ++i)
        m.ar_blocks.push_back(make_adaln_block(ps, "ar.b" + std::to_string(i),
                                               c.width, c.num_heads, c.num_slices,
                                               c.width));
    m.ar_out = make_linear(ps, "ar.out", c.width, c.width);

    m.smp_pos = make_mlp(ps, "smp.pos", c.pos_dim + c.num_scales, c.width, c.width);
    m.smp_cond = make_mlp(ps, "smp.cond", c.width, c.width, c.width);
    m.smp_in = make_mlp(ps, "smp.in", c.field_channels + 2 * c.width, c.width,
                        c.width);
    m.smp_lift = make_linear(ps, "smp.lift", c.width + c.emb_width, c.width);
    for (int i = 0; i < c.sampler_depth; ++i) {
        const std::string name = "smp.b" + std::to_string(i);
        if (c.nodewise_sampler)
            m.smp_node_blocks.push_back(
                make_nodewise_block(ps, name, c.width, c.emb_width));
        else
            m.smp_blocks.push_back(make_adaln_block(ps, name, c.width, c.num_heads,
                                                    c.num_slices, c.emb_width));
    }
    m.smp_head = make_linear(ps, "smp.head", c.width, c.field_channels);
    return m;
}

Tensor condition_inputs(const MeshGraph& g, const Hierarchy& h) {
    if (static_cast<int>(h.scale_of.size()) != g.num_nodes)
        throw ConfigError("condition_inputs: hierarchy does not match the graph");
    const int cols = g.dim + g.num_conditions + h.num_scales;
    std::vector<double> rows(static_cast<std::size_t>(g.num_nodes) * cols, 0.0);
    for (int i = 0; i < g.num_nodes; ++i) {
        double* r = &rows[static_cast<std::size_t>(i) * cols];
        for (int d = 0; d < g.dim; ++d)
            r[d] = g.positions[static_cast<std::size_t>(i) * g.dim + d];
        for (int c = 0; c < g.num_conditions; ++c)
            r[g.dim + c] =
                g.node_conditions[static_cast<std::size_t>(i) * g.num_conditions + c];
        r[g.dim + g.num_conditions + (h.scale_of[i] - 1)] = 1.0;
    }
    return Tensor::from_data(g.num_nodes, cols, std::move(rows));
}

Tensor scale_inputs(const MeshGraph& g, const Hierarchy& h, int k) {
    if (k < 1 || k > h.num_scales)
        throw ConfigError("scale_inputs: scale " + std::to_string(k) +
                          " out of range");
    const auto& part = h.partitions[static_cast<std::size_t>(k - 1)];
    const int cols = g.dim + h.num_scales;
    std::vector<double> rows(part.size() * static_cast<std::size_t>(cols), 0.0);
    for (std::size_t i = 0; i < part.size(); ++i) {
        double* r = &rows[i * cols];
        for (int d = 0; d < g.dim; ++d)
            r[d] = g.positions[static_cast<std::size_t>(part[i]) * g.dim + d];
        r[g.dim + (k - 1)] = 1.0;
    }
    return Tensor::from_data(static_cast<int>(part.size()), cols, std::move(rows));
}

Tensor SarModel::encode_conditions(const MeshGraph& graph, const Hierarchy& h) const {
    Tensor v = cond_lift.forward(condition_inputs(graph, h));
    if (!config.use_cond_encoder) return v;
    for (const auto& b : cond_blocks) v = b.forward(v);
    return cond_out.forward(v);
}

Tensor SarModel::ar_step(int k, const Tensor& y, const Hierarchy& h,
                         const Tensor& coarser_values) const {
    if (k < 1 || k > config.num_scales || k > h.num_scales)
        throw ConfigError("ar_step: scale " + std::to_string(k) + " out of range");
    const auto prefix = h.prefix(k);
    const int n_k = static_cast<int>(h.partitions[static_cast<std::size_t>(k - 1)].size());
    const int n_prev = static_cast<int>(prefix.size()) - n_k;
    if (n_prev > 0 &&
        (!coarser_values.defined() || coarser_values.rows() != n_prev))
        throw ConfigError("ar_step: scale " + std::to_string(k) + " needs " +
                          std::to_string(n_prev) + " coarser-node values");

    const Tensor masked = tile_rows(mask_emb, n_k);
    const Tensor lifted =
        n_prev > 0 ? concat_rows({value_lift.forward(coarser_values), masked})
                   : masked;
    Tensor v = ar_lift.forward(concat_cols({lifted, row_select(y, prefix)}));
    const Tensor& emb = scale_emb[static_cast<std::size_t>(k - 1)];
    for (const auto& b : ar_blocks) v = b.forward(v, emb);
    return last_rows(ar_out.forward(v), n_k);
}

Tensor SarModel::sampler_velocity(const Tensor& s_kr, double r,
                                  const Tensor& pos_onehot, const Tensor& y_k,
                                  const Tensor& z_k) const {
    if (!(r >= 0.0 && r <= 1.0))
        throw ConfigError("sampler_velocity: denoising time must lie in [0, 1]");
    const Tensor remb = sinusoidal_embedding(r, config.emb_width);
    const Tensor ctx = add(smp_pos.forward(pos_onehot), smp_cond.forward(y_k));
    const Tensor v = smp_in.forward(concat_cols({s_kr, z_k, ctx}));
    Tensor hdn = smp_lift.forward(concat_cols({v, tile_rows(remb, v.rows())}));
    if (config.nodewise_sampler)
        for (const auto& b : smp_node_blocks) hdn = b.forward(hdn, remb);
    else
        for (const auto& b : smp_blocks) hdn = b.forward(hdn, remb);
    return smp_head.forward(hdn);
}

Tensor fm_loss(const SarModel& model, const MeshGraph& graph, const Hierarchy& h,
               const Tensor& target_values, int k, std::uint64_t seed,
               std::uint64_t index, double coarse_noise) {
    if (k < 1 || k > h.num_scales)
        throw ConfigError("fm_loss: scale " + std::to_string(k) + " out of range");
    const auto prefix = h.prefix(k);
    if (!target_values.defined() ||
        target_values.rows() != static_cast<int>(prefix.size()))
        throw ConfigError("fm_loss: target_values must cover scales 1.." +
                          std::to_string(k) + " (" +
                          std::to_string(prefix.size()) + " rows)");
    const auto& part = h.partitions[static_cast<std::size_t>(k - 1)];
    const int n_k = static_cast<int>(part.size());
    const int n_prev = static_cast<int>(prefix.size()) - n_k;

    const Tensor s1 = last_rows(target_values, n_k).detach();
    Tensor coarser;
    if (n_prev > 0) {
        coarser = first_rows(target_values, n_prev).detach();
        if (coarse_noise > 0.0) {
            Rng noise_rng(seed, RngStream::kCoarseNoise, index);
            coarser = add(coarser, Tensor::gaussian(n_prev, coarser.cols(),
                                                    noise_rng, coarse_noise));
        }
    }

    // One encoder and one AR evaluation, shared by all four time draws.
    const Tensor y = model.encode_conditions(graph, h);
    const Tensor z = model.ar_step(k, y, h, coarser);
    const Tensor pos = scale_inputs(graph, h, k);
    const Tensor y_k = row_select(y, part);

    Rng time_rng(seed, RngStream::kFlowTime, index);
    Rng eps_rng(seed, RngStream::kFlowNoise, index);
    Tensor total;
    for (int draw = 0; draw < 4; ++draw) {
        const double r = time_rng.uniform();
        const Tensor eps = Tensor::gaussian(n_k, s1.cols(), eps_rng);
        const Tensor s_r = add(scale(eps, 1.0 - r), scale(s1, r));
        const Tensor w = sub(s1, eps);
        const Tensor u = model.sampler_velocity(s_r, r, pos, y_k, z);
        const Tensor term = mean_all(square(sub(w, u)));
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, 0.25);
}

Tensor euler_integrate(Tensor state, int n_steps, const VelocityField& velocity) {
    if (n_steps < 1)
        throw ConfigError("euler_integrate: need at least one step");
    const double dt = 1.0 / n_steps;
    for (int m = 0; m < n_steps; ++m) {
        const double r = static_cast<double>(m) / n_steps;
        state = add(state, scale(velocity(state, r), dt));
    }
    return state;
}

Tensor sample_scale(const SarModel& model, const MeshGraph& graph,
                    const Hierarchy& h, int k, const Tensor& y,
                    const Tensor& coarser_values, int n_steps, Rng& init_rng) {
    if (k < 1 || k > h.num_scales)
        throw ConfigError("sample_scale: scale " + std::to_string(k) +
                          " out of range");
    autograd::NoGradScope guard;
    const auto& part = h.partitions[static_cast<std::size_t>(k - 1)];
    const Tensor z = model.ar_step(k, y, h, coarser_values);
    const Tensor pos = scale_inputs(graph, h, k);
    const Tensor y_k = row_select(y, part);
    Tensor s = Tensor::gaussian(static_cast<int>(part.size()),
                                model.config.field_channels, init_rng);
    return euler_integrate(std::move(s), n_steps, [&](const Tensor& st, double r) {
        return model.sampler_velocity(st, r, pos, y_k, z);
    });
}

GenerateResult generate(const SarModel& model, const MeshGraph& graph,
                        const Hierarchy& h, const std::vector<int>& schedule,
                        std::uint64_t seed, std::uint64_t sample_index,
                        const Tensor* y_cache) {
    const int num_scales = h.num_scales;
    if (model.config.num_scales != num_scales)
        throw ConfigError("generate: model expects " +
                          std::to_string(model.config.num_scales) +
                          " scales, hierarchy has " + std::to_string(num_scales));
    if (static_cast<int>(schedule.size()) != num_scales)
        throw ConfigError("generate: schedule has " +
                          std::to_string(schedule.size()) + " entries for " +
                          std::to_string(num_scales) + " scales");
    for (int steps : schedule)
        if (steps < 1)
            throw ConfigError("generate: every schedule entry must be >= 1");
    if (model.config.latent_mode && model.vae == nullptr)
        throw ConfigError("generate: latent mode requires the companion decoder");

    autograd::NoGradScope guard;
    const Tensor y = y_cache ? *y_cache : model.encode_conditions(graph, h);

    Tensor assembled;
    std::int64_t evals = 0;
    for (int k = 1; k <= num_scales; ++k) {
        Rng init_rng(seed, RngStream::kSampleInit,
                     sample_index * static_cast<std::uint64_t>(num_scales) +
                         static_cast<std::uint64_t>(k - 1));
        Tensor s_k = sample_scale(model, graph, h, k, y, assembled,
                                  schedule[static_cast<std::size_t>(k - 1)],
                                  init_rng);
        evals += static_cast<std::int64_t>(schedule[static_cast<std::size_t>(k - 1)]) *
                 static_cast<std::int64_t>(
                     h.partitions[static_cast<std::size_t>(k - 1)].size());
        assembled = assembled.defined() ? concat_rows({assembled, s_k}) : s_k;
    }

    // Prefix (scale-major) order back to original node order.
    const auto order = h.prefix(num_scales);
    const int channels = model.config.field_channels;
    std::vector<double> node_vals(
        static_cast<std::size_t>(graph.num_nodes) * channels, 0.0);
    for (std::size_t i = 0; i < order.size(); ++i)
        for (int c = 0; c < channels; ++c)
            node_vals[static_cast<std::size_t>(order[i]) * channels + c] =
                assembled.at(static_cast<int>(i), c);

    FieldState values;
    values.num_nodes = graph.num_nodes;
    values.channels = channels;
    values.space = model.config.latent_mode ? FieldSpace::kLatent
                                            : FieldSpace::kPhysical;
    values.values = std::move(node_vals);
    if (!model.value_stats.empty()) values = denormalize(values, model.value_stats);

    GenerateResult out;
    out.node_evaluations = evals;
    if (model.config.latent_mode) {
        FieldState decoded = decode_state(*model.vae, graph, values);
        if (!model.field_stats.empty())
            decoded = denormalize(decoded, model.field_stats);
        out.field = std::move(decoded);
    } else {
        out.field = std::move(values);
    }
    return out;
}

TrainedSar train_sar(const Dataset& data, const SarConfig& model_config,
                     const SarTrainConfig& tc) {
    if (data.channel_stats.empty())
        throw ConfigError("train_sar expects a normalized dataset");
    if (data.systems.empty() || data.total_snapshots() == 0)
        throw ConfigError("train_sar: dataset has no snapshots");
    const bool latent_data = data.space == FieldSpace::kLatent;
    if (latent_data != model_config.latent_mode)
        throw ConfigError("train_sar: dataset space does not match latent_mode");
    if (data.channels() != model_config.field_channels)
        throw ConfigError("train_sar: dataset has " +
                          std::to_string(data.channels()) +
                          " channels, model expects " +
                          std::to_string(model_config.field_channels));
    for (const auto& sys : data.systems)
        if (sys.graph.dim != model_config.pos_dim ||
            sys.graph.num_conditions != model_config.num_conditions)
            throw ConfigError("train_sar: graph geometry does not match the model");

    std::vector<Hierarchy> hierarchies;
    hierarchies.reserve(data.systems.size());
    for (const auto& sys : data.systems)
        hierarchies.push_back(build_hierarchy(sys.graph, model_config.num_scales));

    // Snapshot values re-ordered scale-major once up front; fm_loss slices the
    // first prefix(k) rows per drawn scale.
    std::vector<std::vector<Tensor>> targets(data.systems.size());
    std::vector<std::vector<int>> prefix_rows(data.systems.size());
    for (std::size_t s = 0; s < data.systems.size(); ++s) {
        const auto order = hierarchies[s].prefix(model_config.num_scales);
        prefix_rows[s].resize(static_cast<std::size_t>(model_config.num_scales));
        for (int k = 1; k <= model_config.num_scales; ++k)
            prefix_rows[s][static_cast<std::size_t>(k - 1)] =
                static_cast<int>(hierarchies[s].prefix(k).size());
        targets[s].reserve(data.systems[s].snapshots.size());
        for (const auto& snap : data.systems[s].snapshots) {
            std::vector<double> rows(order.size() *
                                     static_cast<std::size_t>(snap.channels));
            for (std::size_t i = 0; i < order.size(); ++i)
                for (int c = 0; c < snap.channels; ++c)
                    rows[i * snap.channels + c] = snap.at(order[i], c);
            targets[s].push_back(Tensor::from_data(static_cast<int>(order.size()),
                                                   snap.channels, std::move(rows)));
        }
    }

    TrainedSar out{ParamStore(tc.seed), {}, {}};
    out.model = make_sar(out.params, model_config);
    out.model.value_stats = data.channel_stats;
    AdamOptimizer opt(out.params);
    PlateauSchedule sched({tc.initial_lr, 10.0, tc.patience_epochs, tc.floor_lr,
                           1e-4});

    std::ofstream csv;
    if (!tc.metrics_csv.empty()) {
        csv.open(tc.metrics_csv);
        if (!csv)
            throw ConfigError("train_sar: cannot write metrics file " +
                              tc.metrics_csv);
        csv << "step,loss,lr\n";
    }

    std::uint64_t step = 0;
    for (int epoch = 0; epoch < tc.max_epochs && !sched.stopped(); ++epoch) {
        double total = 0.0;
        for (int i = 0; i < tc.steps_per_epoch; ++i, ++step) {
            Rng pick(tc.seed, RngStream::kTrainSample, step);
            const auto sys = static_cast<std::size_t>(
                pick.uniform_int(data.systems.size()));
            const auto snap = static_cast<std::size_t>(
                pick.uniform_int(targets[sys].size()));
            const int k = 1 + static_cast<int>(pick.uniform_int(
                                  static_cast<std::uint64_t>(model_config.num_scales)));

            const Tensor target = first_rows(
                targets[sys][snap], prefix_rows[sys][static_cast<std::size_t>(k - 1)]);
            Tensor loss = fm_loss(out.model, data.systems[sys].graph,
                                  hierarchies[sys], target, k, tc.seed, step,
                                  tc.coarse_noise);
            const double lv = loss.scalar();
            if (!std::isfinite(lv))
                throw NumericalError(
                    "SAR training diverged (non-finite loss) at step " +
                    std::to_string(step));
            opt.zero_grad();
            backward(loss);
            opt.step(sched.lr());
            total += lv;
            if (csv.is_open())
                csv << step << ',' << lv << ',' << sched.lr() << '\n';
        }
        const double epoch_loss = total / static_cast<double>(tc.steps_per_epoch);
        out.loss_history.push_back(epoch_loss);
        sched.observe(epoch_loss);
        if (tc.verbose)
            std::printf("sar epoch %4d  loss %.6e  lr %.1e\n", epoch, epoch_loss,
                        sched.lr());
    }
    return out;
}

}  // namespace sargen
