/// sar.hpp - scale-autoregressive generation over mesh hierarchies.
///
/// A field is generated coarse-to-fine: scale 1 is sampled first, then each
/// finer scale is sampled conditioned on everything coarser. Three networks
/// cooperate: a condition encoder turns per-node geometry and system
/// conditions into a context Y (computed once per system, cacheable), an
/// autoregressive module summarizes the already-generated coarser values into
/// per-node conditioning Z_k for the current scale, and a flow-matching
/// sampler integrates a learned velocity field from Gaussian noise to the
/// scale's values.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hierarchy.hpp"
#include "meshgraph.hpp"
#include "transolver.hpp"
#include "vae.hpp"

namespace sargen {

struct SarConfig {
    int num_scales = 3;      // hierarchy depth K
    int field_channels = 1;  // channels the sampler generates (latent width in latent mode)
    int width = 64;          // shared feature width of all three networks
    int emb_width = 64;      // denoising-time embedding width
    int num_heads = 4;
    int num_slices = 32;
    int cond_depth = 2;     // condition-encoder blocks
    int ar_depth = 2;       // autoregressive-module blocks
    int sampler_depth = 2;  // sampler blocks
    int pos_dim = 2;
    int num_conditions = 1;
    bool latent_mode = true;
    // Ablations. nodewise_sampler swaps the sampler's attention blocks for
    // per-node MLP blocks of equal width; with use_cond_encoder off, Y is just
    // a linear lift of the raw node inputs.
    bool nodewise_sampler = false;
    bool use_cond_encoder = true;
};

/// Conditioned residual block without attention: V += alpha * MLP(LN(V) *
/// gamma + beta), modulation as in AdaLnZeroBlock. Nodes never exchange
/// information, which is exactly the deficiency the nodewise-sampler ablation
/// is meant to expose.
struct NodewiseBlock {
    int width = 0;
    MlpLayer mlp;
    Tensor alpha0, beta0, gamma0;  // [1, width]
    MlpLayer mod;                  // emb -> 3 * width, zero-init output

    Tensor forward(const Tensor& x, const Tensor& emb) const;
};

NodewiseBlock make_nodewise_block(ParamStore& ps, const std::string& name,
                                  int width, int emb_width);

struct SarModel {
    SarConfig config;

    // Condition encoder: [x_i, v_c_i, onehot(scale_i)] -> y_i.
    LinearLayer cond_lift;
    std::vector<TransolverBlock> cond_blocks;  // empty when !use_cond_encoder
    LinearLayer cond_out;

    // Autoregressive module. Coarser nodes enter as [Linear(s_i), y_i],
    // current-scale nodes as [mask, y_j]; blocks are conditioned on a
    // learnable embedding of the scale being generated.
    LinearLayer value_lift;
    Tensor mask_emb;               // [1, width]
    std::vector<Tensor> scale_emb; // one [1, width] row per scale
    LinearLayer ar_lift;
    std::vector<AdaLnZeroBlock> ar_blocks;
    LinearLayer ar_out;

    // Sampler. Per-node input [MLP([s_j, z_j, MLP([x_j, onehot]) + MLP(y_j)]),
    // time-embedding], lifted to the model width; blocks conditioned on the
    // time embedding; head projects to field channels.
    MlpLayer smp_pos;   // [x, onehot] -> width
    MlpLayer smp_cond;  // y -> width
    MlpLayer smp_in;    // [s, z, smp_pos + smp_cond] -> width
    LinearLayer smp_lift;
    std::vector<AdaLnZeroBlock> smp_blocks;       // default sampler
    std::vector<NodewiseBlock> smp_node_blocks;   // nodewise ablation
    LinearLayer smp_head;

    // Companions wired in by the pipeline. The decoder maps generated latents
    // back to (normalized) physical fields; the stats undo the normalizations
    // applied during training. Either stats field may be empty, meaning "no
    // rescaling".
    const VaeModel* vae = nullptr;
    ChannelStats value_stats;  // sampler-space (latent or physical) stats
    ChannelStats field_stats;  // physical stats applied after decoding

    /// Context rows for every node of the graph, original node order.
    /// Deterministic, so callers may compute it once per system and reuse it
    /// across samples.
    Tensor encode_conditions(const MeshGraph& graph, const Hierarchy& h) const;

    /// Conditioning for scale k. coarser_values holds the values of scales
    /// 1..k-1 in prefix order (each scale's block ascending by node id); for
    /// k = 1 it is ignored and may be an undefined Tensor. Returns one row
    /// per node of scale k; rows computed for coarser nodes are discarded.
    Tensor ar_step(int k, const Tensor& y, const Hierarchy& h,
                   const Tensor& coarser_values) const;

    /// Velocity at denoising time r for the current scale's nodes. s_kr is
    /// the partially integrated state [n_k, channels]; pos_onehot, y_k and
    /// z_k are per-node rows aligned with it.
    Tensor sampler_velocity(const Tensor& s_kr, double r, const Tensor& pos_onehot,
                            const Tensor& y_k, const Tensor& z_k) const;
};

SarModel make_sar(ParamStore& ps, const SarConfig& config);

/// Per-node encoder input [x_i, v_c_i, onehot(scale_i)], original node order.
Tensor condition_inputs(const MeshGraph& graph, const Hierarchy& h);

/// Per-node sampler geometry input [x_j, onehot(scale_j)] for scale k's
/// nodes, ascending node id.
Tensor scale_inputs(const MeshGraph& graph, const Hierarchy& h, int k);

/// Flow-matching loss for one (snapshot, scale) pair. target_values holds the
/// snapshot's values on scales 1..k in prefix order. The path point is
/// s_r = (1-r) eps + r s1 with velocity target s1 - eps; the loss averages
/// ||target - predicted||^2 over four independent r ~ U[0,1] (fresh eps per
/// draw), over nodes, and over channels. All four sampler evaluations reuse
/// one encoder and one AR evaluation. Coarser-scale inputs are perturbed by
/// N(0, coarse_noise^2) — training-time regularization only, pass 0 to
/// disable. seed/index select the RNG streams (index is the training step).
Tensor fm_loss(const SarModel& model, const MeshGraph& graph, const Hierarchy& h,
               const Tensor& target_values, int k, std::uint64_t seed,
               std::uint64_t index = 0, double coarse_noise = 1e-2);

using VelocityField = std::function<Tensor(const Tensor&, double)>;

/// Forward Euler over the unit time interval with left-endpoint times:
/// for m = 0..n-1: state += (1/n) * velocity(state, m/n).
Tensor euler_integrate(Tensor state, int n_steps, const VelocityField& velocity);

/// Draws S ~ N(0, I) on scale k's nodes from init_rng and integrates the
/// model's velocity field over n_steps Euler steps. Returns [n_k, channels].
Tensor sample_scale(const SarModel& model, const MeshGraph& graph,
                    const Hierarchy& h, int k, const Tensor& y,
                    const Tensor& coarser_values, int n_steps, Rng& init_rng);

struct GenerateResult {
    FieldState field;  // physical space, original node order
    std::int64_t node_evaluations = 0;  // sum over scales of steps_k * |S_k|
};

/// Generates one sample coarse-to-fine. schedule holds one Euler step count
/// per scale. In latent mode the assembled latents are decoded through the
/// companion VAE; otherwise the assembled field is returned directly. Values
/// are mapped back through value_stats/field_stats when present. y_cache, if
/// given, must be the model's encode_conditions output for this graph;
/// sampling is bitwise identical with or without it. sample_index
/// distinguishes RNG streams when drawing many samples under one seed.
GenerateResult generate(const SarModel& model, const MeshGraph& graph,
                        const Hierarchy& h, const std::vector<int>& schedule,
                        std::uint64_t seed, std::uint64_t sample_index = 0,
                        const Tensor* y_cache = nullptr);

struct SarTrainConfig {
    double initial_lr = 1e-3;
    int patience_epochs = 20;
    int steps_per_epoch = 200;  // plateau schedule observes epoch-mean loss
    double floor_lr = 1e-6;
    double coarse_noise = 1e-2;
    int max_epochs = 100000;
    std::uint64_t seed = 0;
    bool verbose = false;
    std::string metrics_csv;  // when set, appends "step,loss,lr" rows
};

struct TrainedSar {
    ParamStore params;
    SarModel model;
    std::vector<double> loss_history;  // per-epoch mean loss
};

/// Trains on a normalized dataset (latent or physical per model_config).
/// Each step draws (system, snapshot, scale) uniformly, evaluates fm_loss,
/// and applies one Adam update under a plateau learning-rate schedule.
/// Throws NumericalError the moment the loss turns non-finite.
TrainedSar train_sar(const Dataset& data, const SarConfig& model_config,
                     const SarTrainConfig& train_config);

}  // namespace sargen
