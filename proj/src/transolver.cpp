#include "transolver.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "common.hpp"

namespace sargen {

LinearLayer make_linear(ParamStore& ps, const std::string& name, int in, int out,
                        bool with_bias) {
    LinearLayer l;
    l.weight = ps.uniform_fan_in(name + ".w", out, in, in);
    if (with_bias) l.bias = ps.uniform_fan_in(name + ".b", 1, out, in);
    return l;
}

LinearLayer make_zero_linear(ParamStore& ps, const std::string& name, int in,
                             int out) {
    LinearLayer l;
    l.weight = ps.constant(name + ".w", out, in, 0.0);
    l.bias = ps.constant(name + ".b", 1, out, 0.0);
    return l;
}

Tensor MlpLayer::forward(const Tensor& x) const {
    Tensor h = hidden.forward(x);
    h = act == Activation::kSelu ? selu(h) : gelu(h);
    return out.forward(h);
}

MlpLayer make_mlp(ParamStore& ps, const std::string& name, int in, int hidden,
                  int out, Activation act, bool zero_out) {
    MlpLayer m;
    m.hidden = make_linear(ps, name + ".hidden", in, hidden);
    m.out = zero_out ? make_zero_linear(ps, name + ".out", hidden, out)
                     : make_linear(ps, name + ".out", hidden, out);
    m.act = act;
    return m;
}

LayerNormLayer make_layer_norm(ParamStore& ps, const std::string& name, int width) {
    LayerNormLayer ln;
    ln.gain = ps.constant(name + ".gain", 1, width, 1.0);
    ln.shift = ps.constant(name + ".shift", 1, width, 0.0);
    return ln;
}

Tensor slice_weights(const Tensor& logits, const Tensor& tau) {
    return softmax(div_cols(logits, tau));
}

Tensor PhysicsAttention::forward(const Tensor& x) const {
    const int n = x.rows();
    const int dh = head_dim();
    const Tensor feats = head_split.forward(x);
    const Tensor ones = Tensor::full(n, 1, 1.0);
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<Tensor> merged;
    merged.reserve(num_heads);
    for (int h = 0; h < num_heads; ++h) {
        const Tensor vh = col_slice(feats, h * dh, dh);  // [N, Dh]
        const Tensor logits = slice_logits[h].forward(vh);
        const Tensor tau = sargen::exp(temperature[h].forward(vh));  // [N, 1]
        const Tensor w = slice_weights(logits, tau);                 // [N, |P|]

        // Weighted slice aggregation. A slice nothing maps to (total weight
        // below 1e-12) contributes a zero feature instead of 0/0.
        const Tensor mass = matmul_tn(w, ones);                       // [|P|, 1]
        const Tensor p = div_cols(matmul_tn(w, vh), mass, 1e-12);     // [|P|, Dh]

        // Plain self-attention among the slice tokens.
        const Tensor q = query.forward(p);
        const Tensor k = key.forward(p);
        const Tensor v = value.forward(p);
        const Tensor att = softmax(scale(matmul_nt(q, k), inv_sqrt_dh));
        const Tensor z = attn_out.forward(matmul(att, v));

        merged.push_back(matmul(w, z));  // back to [N, Dh]
    }
    return head_merge.forward(concat_cols(merged));
}

PhysicsAttention make_physics_attention(ParamStore& ps, const std::string& name,
                                        int width, int num_heads, int num_slices) {
    if (num_heads < 1 || width % num_heads != 0)
        throw ConfigError("attention width " + std::to_string(width) +
                          " is not divisible by " + std::to_string(num_heads) +
                          " heads");
    if (num_slices < 1) throw ConfigError("attention needs at least one slice");
    PhysicsAttention pa;
    pa.width = width;
    pa.num_heads = num_heads;
    pa.num_slices = num_slices;
    const int dh = width / num_heads;
    pa.head_split = make_linear(ps, name + ".split", width, width);
    for (int h = 0; h < num_heads; ++h) {
        const std::string hn = name + ".head" + std::to_string(h);
        pa.slice_logits.push_back(make_linear(ps, hn + ".slice", dh, num_slices));
        // Zero weights make the temperature exp(0) = 1 at first, so early
        // training sees an ordinary softmax.
        pa.temperature.push_back(make_zero_linear(ps, hn + ".temp", dh, 1));
    }
    pa.query = make_linear(ps, name + ".q", dh, dh);
    pa.key = make_linear(ps, name + ".k", dh, dh);
    pa.value = make_linear(ps, name + ".v", dh, dh);
    pa.attn_out = make_linear(ps, name + ".attn_out", dh, dh);
    pa.head_merge = make_linear(ps, name + ".merge", width, width);
    return pa;
}

Tensor TransolverBlock::forward(const Tensor& x) const {
    Tensor v = add(x, attn.forward(norm_attn.forward(x)));
    return add(v, mlp.forward(norm_mlp.forward(v)));
}

TransolverBlock make_transolver_block(ParamStore& ps, const std::string& name,
                                      int width, int num_heads, int num_slices) {
    TransolverBlock b;
    b.norm_attn = make_layer_norm(ps, name + ".ln_attn", width);
    b.norm_mlp = make_layer_norm(ps, name + ".ln_mlp", width);
    b.attn = make_physics_attention(ps, name + ".attn", width, num_heads, num_slices);
    b.mlp = make_mlp(ps, name + ".mlp", width, width, width);
    return b;
}

namespace {

Tensor modulated_residual(const Tensor& x, const Tensor& emb, const MlpLayer& mod,
                          const Tensor& alpha0, const Tensor& beta0,
                          const Tensor& gamma0, int width,
                          const std::function<Tensor(const Tensor&)>& sublayer) {
    const Tensor m = mod.forward(emb);  // [1, 3*width]
    const Tensor alpha = add(alpha0, col_slice(m, 0, width));
    const Tensor beta = add(beta0, col_slice(m, width, width));
    const Tensor gamma = add(gamma0, col_slice(m, 2 * width, width));
    const Tensor h = add(mul(layer_norm(x), gamma), beta);
    return add(x, mul(alpha, sublayer(h)));
}

}  // namespace

Tensor AdaLnZeroBlock::forward(const Tensor& x, const Tensor& emb) const {
    Tensor v = modulated_residual(
        x, emb, attn_mod, attn_alpha0, attn_beta0, attn_gamma0, width,
        [this](const Tensor& h) { return attn.forward(h); });
    return modulated_residual(
        v, emb, mlp_mod, mlp_alpha0, mlp_beta0, mlp_gamma0, width,
        [this](const Tensor& h) { return mlp.forward(h); });
}

AdaLnZeroBlock make_adaln_block(ParamStore& ps, const std::string& name, int width,
                                int num_heads, int num_slices, int emb_width) {
    if (emb_width <= 0) emb_width = width;
    AdaLnZeroBlock b;
    b.width = width;
    b.attn = make_physics_attention(ps, name + ".attn", width, num_heads, num_slices);
    b.mlp = make_mlp(ps, name + ".mlp", width, width, width);
    b.attn_alpha0 = ps.constant(name + ".attn_alpha0", 1, width, 0.0);
    b.attn_beta0 = ps.constant(name + ".attn_beta0", 1, width, 0.0);
    b.attn_gamma0 = ps.constant(name + ".attn_gamma0", 1, width, 1.0);
    b.mlp_alpha0 = ps.constant(name + ".mlp_alpha0", 1, width, 0.0);
    b.mlp_beta0 = ps.constant(name + ".mlp_beta0", 1, width, 0.0);
    b.mlp_gamma0 = ps.constant(name + ".mlp_gamma0", 1, width, 1.0);
    b.attn_mod = make_mlp(ps, name + ".attn_mod", emb_width, width, 3 * width,
                          Activation::kGelu, /*zero_out=*/true);
    b.mlp_mod = make_mlp(ps, name + ".mlp_mod", emb_width, width, 3 * width,
                         Activation::kGelu, /*zero_out=*/true);
    return b;
}

Tensor sinusoidal_embedding(double r, int width) {
    if (width < 2 || width % 2 != 0)
        throw ConfigError("sinusoidal embedding width must be even, got " +
                          std::to_string(width));
    const int m = width / 2;
    std::vector<double> out(static_cast<std::size_t>(width));
    for (int n = 0; n < m; ++n) {
        const double omega =
            m == 1 ? 1.0 : std::exp(-std::log(10000.0) / (m - 1) * n);
        out[n] = std::sin(omega * r);
        out[m + n] = std::cos(omega * r);
    }
    return Tensor::from_data(1, width, std::move(out));
}

}  // namespace sargen
