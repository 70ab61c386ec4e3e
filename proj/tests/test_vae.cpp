// Message passing, posterior sampling, the VAE loss, and a short training
// smoke run.
#include <cmath>
#include <vector>

#include "common.hpp"
#include "fd_check.hpp"
#include "test_harness.hpp"
#include "vae.hpp"

using namespace sargen;

namespace {

void aggregate_suite() {
    // Edge rows land on their destination; untouched nodes stay zero.
    Tensor ef = Tensor::from_data(2, 2, {1.0, 2.0, 10.0, 20.0});
    std::vector<std::pair<int, int>> edges = {{0, 1}, {2, 1}};
    Tensor agg = aggregate_incoming(ef, edges, 3);
    testh::record("agg.sum", agg.at(1, 0) == 11.0 && agg.at(1, 1) == 22.0);
    testh::record("agg.isolated_rows_zero",
                  agg.at(0, 0) == 0.0 && agg.at(0, 1) == 0.0 &&
                      agg.at(2, 0) == 0.0 && agg.at(2, 1) == 0.0);

    // A duplicated edge counts twice.
    std::vector<std::pair<int, int>> dup = {{0, 1}, {0, 1}};
    Tensor ef2 = Tensor::from_data(2, 2, {1.5, -2.0, 1.5, -2.0});
    Tensor agg2 = aggregate_incoming(ef2, dup, 2);
    testh::record("agg.duplicate_edge", agg2.at(1, 0) == 3.0 && agg2.at(1, 1) == -4.0);
}

void mp_layer_suite() {
    const int w = 4;
    ParamStore ps(31);
    MessagePassingLayer mp = make_mp_layer(ps, "mp", w);
    Rng rng(1, RngStream::kTest, 10);

    // Nothing points into node 0, so its update reads only its own features:
    // changing the other nodes leaves row 0 untouched.
    std::vector<std::pair<int, int>> edges = {{0, 1}, {1, 2}, {2, 1}};
    Tensor e = Tensor::gaussian(3, w, rng);
    Tensor va = Tensor::gaussian(3, w, rng);
    std::vector<double> vb_data(va.values().begin(), va.values().end());
    for (int i = 1; i < 3; ++i)
        for (int c = 0; c < w; ++c) vb_data[static_cast<std::size_t>(i) * w + c] += 0.7;
    Tensor vb = Tensor::from_data(3, w, std::move(vb_data));

    Tensor row0_a = mp.forward(va, e, edges).first;
    Tensor row0_b = mp.forward(vb, e, edges).first;
    double diff0 = 0, diff1 = 0;
    for (int c = 0; c < w; ++c) {
        diff0 = std::max(diff0, std::abs(row0_a.at(0, c) - row0_b.at(0, c)));
        diff1 = std::max(diff1, std::abs(row0_a.at(1, c) - row0_b.at(1, c)));
    }
    testh::record("mp.no_incoming_is_local", diff0 == 0.0);
    testh::record("mp.connected_nodes_move", diff1 > 1e-6);

    // Consistent node relabeling permutes the outputs.
    const int n = 5;
    std::vector<std::pair<int, int>> el = {{0, 1}, {1, 2}, {3, 2}, {4, 0}, {2, 4}};
    Tensor nodes = Tensor::gaussian(n, w, rng);
    Tensor ef = Tensor::gaussian(static_cast<int>(el.size()), w, rng);
    std::vector<int> to_new = {2, 0, 4, 1, 3};
    std::vector<int> old_at_new(n);
    for (int i = 0; i < n; ++i) old_at_new[to_new[i]] = i;
    Tensor nodes_p = row_select(nodes, old_at_new).detach();
    std::vector<std::pair<int, int>> el_p;
    for (const auto& [a, b] : el) el_p.emplace_back(to_new[a], to_new[b]);

    auto [vn, en] = mp.forward(nodes, ef, el);
    auto [vp, ep] = mp.forward(nodes_p, ef, el_p);
    double worst = 0;
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < w; ++c)
            worst = std::max(worst, std::abs(vp.at(to_new[i], c) - vn.at(i, c)));
    for (int r = 0; r < en.rows(); ++r)
        for (int c = 0; c < w; ++c)
            worst = std::max(worst, std::abs(ep.at(r, c) - en.at(r, c)));
    testh::check_close("mp.permutation_equivariant", worst, 0.0, 1e-12);

    // Gradients through the full layer on a 3-node graph.
    Tensor xg = Tensor::gaussian(3, w, rng);
    xg.set_requires_grad(true);
    Tensor eg = Tensor::gaussian(3, w, rng);
    eg.set_requires_grad(true);
    std::vector<Tensor> params;
    for (const auto& [nm, t] : ps.entries()) params.push_back(t);
    params.push_back(xg);
    params.push_back(eg);
    double err = testh::fd_max_rel_err(
        [&] {
            auto [v2, e2] = mp.forward(xg, eg, edges);
            return add(mean_all(square(v2)), mean_all(square(e2)));
        },
        params);
    testh::record("mp.gradients", err < 1e-5, "max rel err " + std::to_string(err));
}

void structure_suite() {
    ParamStore ps(37);
    VaeModel m = make_vae(ps, "vae", 1, 2, 8, 2);
    testh::record("vae.two_layer_encoder",
                  m.encoder.size() == static_cast<std::size_t>(kVaeCoderLayers));
    testh::record("vae.two_layer_decoder",
                  m.decoder.size() == static_cast<std::size_t>(kVaeCoderLayers));

    MeshGraph g = triangulated_grid(3, 3);
    Rng rng(2, RngStream::kTest, 11);
    Tensor x = Tensor::gaussian(g.num_nodes, 1, rng);
    auto [mu, ls] = m.encode(g, x);
    testh::record("vae.posterior_shape", mu.rows() == g.num_nodes && mu.cols() == 2 &&
                                             ls.rows() == g.num_nodes && ls.cols() == 2);
    Tensor rec = m.decode(g, mu);
    testh::record("vae.decode_shape", rec.rows() == g.num_nodes && rec.cols() == 1);

    // Decoding is a pure function of the latent.
    FieldState z = tensor_to_state(mu, FieldSpace::kLatent);
    FieldState r1 = decode_state(m, g, z);
    FieldState r2 = decode_state(m, g, z);
    testh::record("vae.decode_deterministic", r1.values == r2.values);

    // Non-finite inputs are caught at the encoder boundary.
    testh::check_throws<NumericalError>("vae.nonfinite_detected", [&] {
        Tensor bad = Tensor::full(g.num_nodes, 1,
                                  std::numeric_limits<double>::infinity());
        m.encode(g, bad);
    });

    // Small latent perturbations produce proportionally small output changes.
    // The ratio bound is a regression pin from the first run of this test.
    Rng prng(3, RngStream::kTest, 12);
    Tensor dz = Tensor::gaussian(mu.rows(), mu.cols(), prng, 1e-4);
    Tensor rec2 = m.decode(g, add(mu, dz));
    double dout = 0, din = 0;
    for (int i = 0; i < rec.rows(); ++i) dout += std::pow(rec2.at(i, 0) - rec.at(i, 0), 2);
    for (std::int64_t i = 0; i < dz.numel(); ++i) din += dz.values()[i] * dz.values()[i];
    const double ratio = std::sqrt(dout / din);
    testh::record("vae.decode_smooth", ratio < 10.0,
                  "amplification " + std::to_string(ratio));
}

void reparam_suite() {
    Rng rng(4, RngStream::kTest, 13);
    Tensor mu = Tensor::full(1, 1, 3.0);
    Tensor tiny = Tensor::full(1, 1, -40.0);  // log sigma -> sigma ~ 4e-18
    Tensor z0 = reparameterize(mu, tiny, rng);
    testh::check_close("reparam.sigma_zero_limit", z0.at(0, 0), 3.0, 1e-12);

    const double sigma = 0.7;
    Tensor ls = Tensor::full(1, 1, std::log(sigma));
    double sum = 0, sumsq = 0;
    const int draws = 10000;
    for (int t = 0; t < draws; ++t) {
        const double z = reparameterize(mu, ls, rng).at(0, 0);
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / draws;
    const double sd = std::sqrt(sumsq / draws - mean * mean);
    testh::check_rel("reparam.monte_carlo_std", sd, sigma, 0.03);
    testh::check_close("reparam.monte_carlo_mean", mean, 3.0, 0.03);

    // encode_state deterministic mode returns the posterior mean exactly.
    ParamStore ps(41);
    VaeModel m = make_vae(ps, "vae", 1, 2, 8, 2);
    MeshGraph g = triangulated_grid(3, 3);
    FieldState fs;
    fs.num_nodes = g.num_nodes;
    fs.channels = 1;
    fs.values.assign(g.num_nodes, 0.5);
    auto [mu2, ls2] = m.encode(g, field_to_tensor(fs));
    FieldState det = encode_state(m, g, fs, EncodeMode::kDeterministic);
    bool equal = true;
    for (int i = 0; i < g.num_nodes; ++i)
        for (int c = 0; c < 2; ++c) equal = equal && det.at(i, c) == mu2.at(i, c);
    testh::record("reparam.deterministic_is_mu", equal);
    testh::record("reparam.latent_tagged", det.space == FieldSpace::kLatent);
}

void loss_suite() {
    // Perfect reconstruction with a standard-normal posterior costs nothing.
    Tensor x = Tensor::from_data(2, 1, {0.3, -0.8});
    Tensor mu0 = Tensor::zeros(2, 2);
    Tensor ls0 = Tensor::zeros(2, 2);
    testh::check_close("loss.zero_at_prior", vae_loss(x, x, mu0, ls0).scalar(), 0.0,
                       1e-18);

    // mu=1, sigma=1: KL is half per latent channel.
    Tensor mu1 = Tensor::full(2, 3, 1.0);
    Tensor ls1 = Tensor::zeros(2, 3);
    testh::check_rel("loss.unit_mean_kl", vae_loss(x, x, mu1, ls1, 1e-6).scalar(),
                     1e-6 * 0.5 * 3, 1e-12);

    // Closed form check against an independent loop, and non-negativity.
    Rng rng(6, RngStream::kTest, 14);
    Tensor mur = Tensor::gaussian(4, 3, rng);
    Tensor lsr = Tensor::gaussian(4, 3, rng, 0.5);
    double want = 0;
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c) {
            const double m = mur.at(i, c), l = lsr.at(i, c);
            want += 1.0 + 2.0 * l - m * m - std::exp(2.0 * l);
        }
    want *= -0.5 / 4;
    testh::check_close("loss.kl_closed_form", vae_kl(mur, lsr).scalar(), want, 1e-10);
    testh::record("loss.kl_nonnegative", vae_kl(mur, lsr).scalar() >= 0.0);

    // Reconstruction term is the plain MSE.
    Tensor rec = Tensor::from_data(2, 1, {0.5, -0.8});
    testh::check_close("loss.mse_term", vae_loss(x, rec, mu0, ls0).scalar(),
                       0.04 / 2, 1e-15);

    // Full-loss gradients.
    ParamStore ps(43);
    VaeModel m = make_vae(ps, "vae", 1, 1, 4, 2);
    MeshGraph g = triangulated_grid(2, 2);
    Tensor xf = Tensor::gaussian(g.num_nodes, 1, rng);
    Rng fixed_eps(7, RngStream::kTest, 15);
    Tensor eps = Tensor::gaussian(g.num_nodes, 1, fixed_eps);
    std::vector<Tensor> params;
    for (const auto& [nm, t] : ps.entries()) params.push_back(t);
    double err = testh::fd_max_rel_err(
        [&] {
            auto [mu, ls] = m.encode(g, xf);
            Tensor z = add(mu, mul(sargen::exp(ls), eps));
            Tensor r = m.decode(g, z);
            return vae_loss(xf, r, mu, ls, 1e-6);
        },
        params);
    testh::record("loss.gradients", err < 1e-5, "max rel err " + std::to_string(err));
}

void training_suite() {
    Dataset raw = gen_quasiperiodic(4, 4, 1.0, 64, 2024);
    testh::check_throws<ConfigError>("train.requires_normalized",
                                     [&] { train_vae(raw, {}); });

    Dataset ds = normalize(raw);
    VaeTrainConfig cfg;
    cfg.width = 16;
    cfg.latent_dim = 1;
    cfg.initial_lr = 1e-3;
    cfg.patience_epochs = 6;
    cfg.max_epochs = 40;
    cfg.seed = 7;
    TrainedVae tv = train_vae(ds, cfg);

    testh::record("train.ran_epochs", !tv.loss_history.empty() &&
                                          tv.loss_history.size() <= 40);
    const double first = tv.loss_history.front();
    const double last = tv.loss_history.back();
    testh::record("train.loss_decreased", last < 0.5 * first,
                  "first " + std::to_string(first) + " last " + std::to_string(last));
    const double r2 = reconstruction_r2(tv.model, ds);
    testh::record("train.reconstruction_improves", r2 > 0.5,
                  "r2 " + std::to_string(r2));

    // Same seed, same data: training is reproducible bit for bit.
    TrainedVae tv2 = train_vae(ds, cfg);
    testh::record("train.deterministic", tv.loss_history == tv2.loss_history);

    // encode_dataset produces a latent-space dataset over the same graphs.
    Dataset lat = encode_dataset(tv.model, ds);
    testh::record("train.latents_tagged", lat.space == FieldSpace::kLatent &&
                                              lat.channels() == 1 &&
                                              lat.total_snapshots() == 64);
}

}  // namespace

int main() {
    return testh::run("vae", [] {
        aggregate_suite();
        mp_layer_suite();
        structure_suite();
        reparam_suite();
        loss_suite();
        training_suite();
    });
}
