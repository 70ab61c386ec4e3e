/// transolver.hpp - attention building blocks: slice-token physics attention
/// with adaptive temperature, pre-norm residual blocks, and the AdaLN-Zero
/// conditioned variant used by conditional stacks.
#pragma once

#include <string>
#include <vector>

#include "optim.hpp"
#include "tensor.hpp"

namespace sargen {

enum class Activation { kGelu, kSelu };

/// y = x W^T + b. Parameters live in the ParamStore that built the layer.
struct LinearLayer {
    Tensor weight;  // [out, in]
    Tensor bias;    // [1, out]; undefined for bias-free layers

    Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
    int out_dim() const { return weight.rows(); }
};

LinearLayer make_linear(ParamStore& ps, const std::string& name, int in, int out,
                        bool with_bias = true);
/// Weight and bias start at zero; the layer's output is identically zero
/// until trained (used for gates and final heads that must start inert).
LinearLayer make_zero_linear(ParamStore& ps, const std::string& name, int in,
                             int out);

/// Single-hidden-layer MLP.
struct MlpLayer {
    LinearLayer hidden;
    LinearLayer out;
    Activation act = Activation::kGelu;

    Tensor forward(const Tensor& x) const;
};

MlpLayer make_mlp(ParamStore& ps, const std::string& name, int in, int hidden,
                  int out, Activation act = Activation::kGelu,
                  bool zero_out = false);

/// Row-wise layer norm with learnable gain and shift.
struct LayerNormLayer {
    Tensor gain;   // [1, F]
    Tensor shift;  // [1, F]

    Tensor forward(const Tensor& x) const {
        return add(mul(layer_norm(x), gain), shift);
    }
};

LayerNormLayer make_layer_norm(ParamStore& ps, const std::string& name, int width);

/// Per-node softmax over slice logits, sharpened or flattened by a per-node
/// positive temperature: w_i = softmax(logits_i / tau_i). Rows sum to one and
/// every weight is positive.
Tensor slice_weights(const Tensor& logits, const Tensor& tau);

/// Attention over a small fixed set of learned slice tokens. Each node
/// distributes itself across the slices by a per-head softmax with adaptive
/// temperature; slices exchange information through ordinary self-attention;
/// nodes read back their mixture. Cost is linear in the node count for a
/// fixed slice count.
struct PhysicsAttention {
    int width = 0;       // feature width, divisible by num_heads
    int num_heads = 0;
    int num_slices = 0;

    LinearLayer head_split;                 // width -> width
    std::vector<LinearLayer> slice_logits;  // per head: head_dim -> num_slices
    std::vector<LinearLayer> temperature;   // per head: head_dim -> 1, zero-init
    LinearLayer query, key, value, attn_out;  // head_dim -> head_dim, shared
    LinearLayer head_merge;                 // width -> width

    Tensor forward(const Tensor& x) const;
    int head_dim() const { return width / num_heads; }
};

PhysicsAttention make_physics_attention(ParamStore& ps, const std::string& name,
                                        int width, int num_heads, int num_slices);

/// Pre-norm residual block: V += Attn(LN(V)); V += MLP(LN(V)).
struct TransolverBlock {
    LayerNormLayer norm_attn, norm_mlp;
    PhysicsAttention attn;
    MlpLayer mlp;

    Tensor forward(const Tensor& x) const;
};

TransolverBlock make_transolver_block(ParamStore& ps, const std::string& name,
                                      int width, int num_heads, int num_slices);

/// Conditioned block. Each sub-layer's normalization is modulated by a gain
/// and shift derived from the conditioning embedding, and its residual branch
/// is gated:
///   (alpha, beta, gamma) = base + MLP(emb)
///   V += alpha * SubLayer(LN(V) * gamma + beta)
/// Bases start at (0, 0, 1) and the modulation MLP output starts at zero, so
/// the whole block is the identity map at initialization.
struct AdaLnZeroBlock {
    int width = 0;
    PhysicsAttention attn;
    MlpLayer mlp;
    Tensor attn_alpha0, attn_beta0, attn_gamma0;  // [1, width] each
    Tensor mlp_alpha0, mlp_beta0, mlp_gamma0;
    MlpLayer attn_mod, mlp_mod;  // emb width -> 3 * width, zero-init output

    Tensor forward(const Tensor& x, const Tensor& emb) const;
};

/// emb_width sizes the modulation MLP input; 0 means "same as width".
AdaLnZeroBlock make_adaln_block(ParamStore& ps, const std::string& name, int width,
                                int num_heads, int num_slices, int emb_width = 0);

/// Half sines, half cosines of geometrically spaced frequencies from 1 down
/// to 1/10000: [sin(w_0 r), .., sin(w_{M-1} r), cos(w_0 r), .., cos(w_{M-1} r)]
/// with M = width/2. Constant (non-trainable) [1, width] row. Throws
/// ConfigError on odd width.
Tensor sinusoidal_embedding(double r, int width);

}  // namespace sargen
