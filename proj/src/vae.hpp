/// vae.hpp - graph variational autoencoder over mesh fields. Two
/// message-passing layers on each side, one latent vector per node (no node
/// compression), trained with a lightly weighted KL term and latent noise
/// injection for robustness.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "meshgraph.hpp"
#include "optim.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "transolver.hpp"

namespace sargen {

/// Encoder and decoder depth. Structural, not tunable.
inline constexpr int kVaeCoderLayers = 2;

/// [num_nodes, channels] tensor view of a snapshot (constant leaf).
Tensor field_to_tensor(const FieldState& fs);
FieldState tensor_to_state(const Tensor& t, FieldSpace space);
/// [num_edges, dim] tensor of a graph's edge displacement vectors.
Tensor displacements_to_tensor(const MeshGraph& graph);

/// Sum of incoming edge features per node: out[j] = sum over edges (i,j) of
/// edge_feats[row of (i,j)]. Nodes with no incoming edges get a zero row;
/// duplicate edges contribute once per occurrence.
Tensor aggregate_incoming(const Tensor& edge_feats,
                          std::span<const std::pair<int, int>> edges,
                          int num_nodes);

/// Residual interaction-network layer:
///   e_ij <- W_e e_ij + MLP_e(LN([e_ij | v_i | v_j]))
///   ebar_j <- sum of updated incoming e_ij
///   v_j  <- W_v v_j + MLP_v(LN([ebar_j | v_j]))
/// Feature widths are preserved. The residual maps W_e, W_v are bias-free.
struct MessagePassingLayer {
    int width = 0;
    LinearLayer edge_residual, node_residual;  // bias-free
    LayerNormLayer edge_norm;                  // over [e|v_i|v_j]
    LayerNormLayer node_norm;                  // over [ebar|v]
    MlpLayer edge_mlp, node_mlp;               // SELU

    std::pair<Tensor, Tensor> forward(const Tensor& nodes, const Tensor& edges,
                                      std::span<const std::pair<int, int>> edge_list)
        const;
};

MessagePassingLayer make_mp_layer(ParamStore& ps, const std::string& name,
                                  int width);

struct VaeModel {
    int field_channels = 0;  // physical channels F
    int latent_dim = 0;      // per-node latent width
    int width = 0;           // hidden width of node/edge features
    int pos_dim = 0;         // edge displacement dimensionality

    LinearLayer enc_node_lift, enc_edge_lift;
    std::vector<MessagePassingLayer> encoder;  // kVaeCoderLayers deep
    LinearLayer mu_head, log_sigma_head;

    LinearLayer dec_node_lift, dec_edge_lift;
    std::vector<MessagePassingLayer> decoder;  // kVaeCoderLayers deep
    LinearLayer out_head;

    /// Per-node Gaussian posterior parameters, each [N, latent_dim].
    /// Throws NumericalError if either output contains NaN or Inf.
    std::pair<Tensor, Tensor> encode(const MeshGraph& graph,
                                     const Tensor& fields) const;
    /// Latents [N, latent_dim] back to physical channels [N, F].
    Tensor decode(const MeshGraph& graph, const Tensor& latents) const;
};

VaeModel make_vae(ParamStore& ps, const std::string& name, int field_channels,
                  int latent_dim, int width, int pos_dim);

/// z = mu + exp(log_sigma) * eps with eps ~ N(0,1); differentiable in mu and
/// log_sigma.
Tensor reparameterize(const Tensor& mu, const Tensor& log_sigma, Rng& rng);

/// Node-mean KL(N(mu, sigma^2) || N(0,1)), channels summed:
/// -1/(2N) sum_i sum_c (1 + 2 log sigma - mu^2 - sigma^2). Always >= 0.
Tensor vae_kl(const Tensor& mu, const Tensor& log_sigma);

/// Mean squared reconstruction error plus kl_weight * vae_kl.
Tensor vae_loss(const Tensor& x, const Tensor& x_rec, const Tensor& mu,
                const Tensor& log_sigma, double kl_weight = 1e-6);

// ============================================================
// Inference helpers (no tape)
// ============================================================

enum class EncodeMode { kDeterministic, kSampled };

/// Posterior mean latents (kDeterministic) or a reparameterized draw.
FieldState encode_state(const VaeModel& model, const MeshGraph& graph,
                        const FieldState& fs, EncodeMode mode, Rng* rng = nullptr);
FieldState decode_state(const VaeModel& model, const MeshGraph& graph,
                        const FieldState& latent);

/// Posterior-mean latents for every snapshot; result is a latent-space
/// Dataset over the same graphs, without channel stats.
Dataset encode_dataset(const VaeModel& model, const Dataset& physical);

/// Pooled coefficient of determination of deterministic round trips over the
/// whole dataset (per-channel centering).
double reconstruction_r2(const VaeModel& model, const Dataset& ds);

// ============================================================
// Training
// ============================================================

struct VaeTrainConfig {
    int width = 64;       // F_VAE
    int latent_dim = 1;   // F_L
    double initial_lr = 1e-4;
    int patience_epochs = 20;
    double floor_lr = 1e-6;
    double kl_weight = 1e-6;
    double train_noise = 0.01;  // sigma of noise added to sampled latents
    int max_epochs = 100000;
    std::uint64_t seed = 0;
    bool verbose = false;
};

struct TrainedVae {
    ParamStore params;
    VaeModel model;
    std::vector<double> loss_history;
};

/// Trains on a normalized dataset until the plateau schedule stops (lr under
/// floor_lr) or max_epochs is hit. Throws NumericalError if the loss stops
/// being finite, ConfigError on an unnormalized or empty dataset.
TrainedVae train_vae(const Dataset& ds, const VaeTrainConfig& cfg);

}  // namespace sargen
