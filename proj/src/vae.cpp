#include "vae.hpp"

#include <cmath>
#include <cstdio>

#include "common.hpp"

namespace sargen {

Tensor field_to_tensor(const FieldState& fs) {
    return Tensor::from_span(fs.num_nodes, fs.channels, fs.values);
}

FieldState tensor_to_state(const Tensor& t, FieldSpace space) {
    FieldState fs;
    fs.num_nodes = t.rows();
    fs.channels = t.cols();
    fs.space = space;
    fs.values.assign(t.values().begin(), t.values().end());
    return fs;
}

Tensor displacements_to_tensor(const MeshGraph& graph) {
    return Tensor::from_span(static_cast<int>(graph.edges.size()), graph.dim,
                             graph.edge_displacements);
}

Tensor aggregate_incoming(const Tensor& edge_feats,
                          std::span<const std::pair<int, int>> edges,
                          int num_nodes) {
    std::vector<int> dst(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) dst[e] = edges[e].second;
    return index_add_rows(Tensor::zeros(num_nodes, edge_feats.cols()), dst,
                          edge_feats);
}

std::pair<Tensor, Tensor> MessagePassingLayer::forward(
    const Tensor& nodes, const Tensor& edges,
    std::span<const std::pair<int, int>> edge_list) const {
    std::vector<int> src(edge_list.size()), dst(edge_list.size());
    for (std::size_t e = 0; e < edge_list.size(); ++e) {
        src[e] = edge_list[e].first;
        dst[e] = edge_list[e].second;
    }
    const Tensor vi = row_select(nodes, src);
    const Tensor vj = row_select(nodes, dst);
    const Tensor e_new =
        add(edge_residual.forward(edges),
            edge_mlp.forward(edge_norm.forward(concat_cols({edges, vi, vj}))));
    const Tensor ebar = aggregate_incoming(e_new, edge_list, nodes.rows());
    const Tensor v_new =
        add(node_residual.forward(nodes),
            node_mlp.forward(node_norm.forward(concat_cols({ebar, nodes}))));
    return {v_new, e_new};
}

MessagePassingLayer make_mp_layer(ParamStore& ps, const std::string& name,
                                  int width) {
    MessagePassingLayer mp;
    mp.width = width;
    mp.edge_residual = make_linear(ps, name + ".we", width, width, /*with_bias=*/false);
    mp.node_residual = make_linear(ps, name + ".wv", width, width, /*with_bias=*/false);
    mp.edge_norm = make_layer_norm(ps, name + ".ln_e", 3 * width);
    mp.node_norm = make_layer_norm(ps, name + ".ln_v", 2 * width);
    mp.edge_mlp = make_mlp(ps, name + ".mlp_e", 3 * width, width, width,
                           Activation::kSelu);
    mp.node_mlp = make_mlp(ps, name + ".mlp_v", 2 * width, width, width,
                           Activation::kSelu);
    return mp;
}

namespace {

void require_finite(const Tensor& t, const char* what) {
    for (double v : t.values())
        if (!std::isfinite(v))
            throw NumericalError(std::string(what) + " produced a non-finite value");
}

}  // namespace

std::pair<Tensor, Tensor> VaeModel::encode(const MeshGraph& graph,
                                           const Tensor& fields) const {
    Tensor v = enc_node_lift.forward(fields);
    Tensor e = enc_edge_lift.forward(displacements_to_tensor(graph));
    for (const auto& mp : encoder) std::tie(v, e) = mp.forward(v, e, graph.edges);
    Tensor mu = mu_head.forward(v);
    Tensor log_sigma = log_sigma_head.forward(v);
    require_finite(mu, "encoder mean");
    require_finite(log_sigma, "encoder log-sigma");
    return {mu, log_sigma};
}

Tensor VaeModel::decode(const MeshGraph& graph, const Tensor& latents) const {
    Tensor v = dec_node_lift.forward(latents);
    Tensor e = dec_edge_lift.forward(displacements_to_tensor(graph));
    for (const auto& mp : decoder) std::tie(v, e) = mp.forward(v, e, graph.edges);
    return out_head.forward(v);
}

VaeModel make_vae(ParamStore& ps, const std::string& name, int field_channels,
                  int latent_dim, int width, int pos_dim) {
    if (field_channels < 1 || latent_dim < 1 || width < 1 || pos_dim < 1)
        throw ConfigError("make_vae: all dimensions must be positive");
    VaeModel m;
    m.field_channels = field_channels;
    m.latent_dim = latent_dim;
    m.width = width;
    m.pos_dim = pos_dim;
    m.enc_node_lift = make_linear(ps, name + ".enc.node_lift", field_channels, width);
    m.enc_edge_lift = make_linear(ps, name + ".enc.edge_lift", pos_dim, width);
    for (int l = 0; l < kVaeCoderLayers; ++l)
        m.encoder.push_back(
            make_mp_layer(ps, name + ".enc.mp" + std::to_string(l), width));
    m.mu_head = make_linear(ps, name + ".enc.mu", width, latent_dim);
    m.log_sigma_head = make_linear(ps, name + ".enc.log_sigma", width, latent_dim);
    m.dec_node_lift = make_linear(ps, name + ".dec.node_lift", latent_dim, width);
    m.dec_edge_lift = make_linear(ps, name + ".dec.edge_lift", pos_dim, width);
    for (int l = 0; l < kVaeCoderLayers; ++l)
        m.decoder.push_back(
            make_mp_layer(ps, name + ".dec.mp" + std::to_string(l), width));
    m.out_head = make_linear(ps, name + ".dec.out", width, field_channels);
    return m;
}

Tensor reparameterize(const Tensor& mu, const Tensor& log_sigma, Rng& rng) {
    Tensor eps = Tensor::gaussian(mu.rows(), mu.cols(), rng);
    return add(mu, mul(sargen::exp(log_sigma), eps));
}

Tensor vae_kl(const Tensor& mu, const Tensor& log_sigma) {
    const Tensor two_log_sigma = scale(log_sigma, 2.0);
    const Tensor inner = sub(sub(add_scalar(two_log_sigma, 1.0), square(mu)),
                             sargen::exp(two_log_sigma));
    return scale(sum_all(inner), -0.5 / mu.rows());
}

Tensor vae_loss(const Tensor& x, const Tensor& x_rec, const Tensor& mu,
                const Tensor& log_sigma, double kl_weight) {
    const Tensor mse = mean_all(square(sub(x_rec, x)));
    return add(mse, scale(vae_kl(mu, log_sigma), kl_weight));
}

FieldState encode_state(const VaeModel& model, const MeshGraph& graph,
                        const FieldState& fs, EncodeMode mode, Rng* rng) {
    autograd::NoGradScope ng;
    auto [mu, log_sigma] = model.encode(graph, field_to_tensor(fs));
    if (mode == EncodeMode::kDeterministic)
        return tensor_to_state(mu, FieldSpace::kLatent);
    if (rng == nullptr)
        throw ConfigError("encode_state: sampled mode needs an RNG");
    return tensor_to_state(reparameterize(mu, log_sigma, *rng),
                           FieldSpace::kLatent);
}

FieldState decode_state(const VaeModel& model, const MeshGraph& graph,
                        const FieldState& latent) {
    autograd::NoGradScope ng;
    FieldState out =
        tensor_to_state(model.decode(graph, field_to_tensor(latent)),
                        FieldSpace::kPhysical);
    return out;
}

Dataset encode_dataset(const VaeModel& model, const Dataset& physical) {
    Dataset out;
    out.space = FieldSpace::kLatent;
    out.meta = physical.meta;
    for (const auto& sys : physical.systems) {
        System lsys;
        lsys.graph = sys.graph;
        for (const auto& fs : sys.snapshots)
            lsys.snapshots.push_back(
                encode_state(model, sys.graph, fs, EncodeMode::kDeterministic));
        out.systems.push_back(std::move(lsys));
    }
    return out;
}

double reconstruction_r2(const VaeModel& model, const Dataset& ds) {
    autograd::NoGradScope ng;
    const int channels = ds.channels();
    std::vector<double> sum(channels, 0.0);
    std::int64_t count = 0;
    for (const auto& sys : ds.systems)
        for (const auto& fs : sys.snapshots) {
            for (int i = 0; i < fs.num_nodes; ++i)
                for (int c = 0; c < channels; ++c) sum[c] += fs.at(i, c);
            count += fs.num_nodes;
        }
    std::vector<double> mean(channels);
    for (int c = 0; c < channels; ++c) mean[c] = sum[c] / count;

    double ss_res = 0.0, ss_tot = 0.0;
    for (const auto& sys : ds.systems)
        for (const auto& fs : sys.snapshots) {
            FieldState rec = decode_state(
                model, sys.graph,
                encode_state(model, sys.graph, fs, EncodeMode::kDeterministic));
            for (int i = 0; i < fs.num_nodes; ++i)
                for (int c = 0; c < channels; ++c) {
                    const double d = rec.at(i, c) - fs.at(i, c);
                    const double t = fs.at(i, c) - mean[c];
                    ss_res += d * d;
                    ss_tot += t * t;
                }
        }
    return 1.0 - ss_res / ss_tot;
}

TrainedVae train_vae(const Dataset& ds, const VaeTrainConfig& cfg) {
    if (ds.channel_stats.empty())
        throw ConfigError("train_vae expects a normalized dataset");
    if (ds.systems.empty() || ds.total_snapshots() == 0)
        throw ConfigError("train_vae: dataset has no snapshots");

    TrainedVae tv{ParamStore(cfg.seed), {}, {}};
    tv.model = make_vae(tv.params, "vae", ds.channels(), cfg.latent_dim, cfg.width,
                        ds.systems.front().graph.dim);
    AdamOptimizer opt(tv.params);
    PlateauSchedule sched({cfg.initial_lr, 10.0, cfg.patience_epochs, cfg.floor_lr,
                           1e-4});

    struct Example {
        const MeshGraph* graph;
        Tensor fields;
    };
    std::vector<Example> examples;
    for (const auto& sys : ds.systems)
        for (const auto& fs : sys.snapshots)
            examples.push_back({&sys.graph, field_to_tensor(fs)});

    std::uint64_t step = 0;
    for (int epoch = 0; epoch < cfg.max_epochs && !sched.stopped(); ++epoch) {
        double total = 0.0;
        for (const auto& ex : examples) {
            Rng reparam_rng(cfg.seed, RngStream::kReparam, step);
            Rng noise_rng(cfg.seed, RngStream::kLatentNoise, step);
            auto [mu, log_sigma] = tv.model.encode(*ex.graph, ex.fields);
            Tensor z = reparameterize(mu, log_sigma, reparam_rng);
            if (cfg.train_noise > 0)
                z = add(z, Tensor::gaussian(z.rows(), z.cols(), noise_rng,
                                            cfg.train_noise));
            Tensor rec = tv.model.decode(*ex.graph, z);
            Tensor loss = vae_loss(ex.fields, rec, mu, log_sigma, cfg.kl_weight);
            const double lv = loss.scalar();
            if (!std::isfinite(lv))
                throw NumericalError("VAE training diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch) + ", step " +
                                     std::to_string(step));
            opt.zero_grad();
            backward(loss);
            opt.step(sched.lr());
            total += lv;
            ++step;
        }
        const double epoch_loss = total / static_cast<double>(examples.size());
        tv.loss_history.push_back(epoch_loss);
        sched.observe(epoch_loss);
        if (cfg.verbose)
            std::printf("vae epoch %4d  loss %.6e  lr %.1e\n", epoch, epoch_loss,
                        sched.lr());
    }
    return tv;
}

}  // namespace sargen
