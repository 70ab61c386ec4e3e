/// config.hpp - run configuration: hyperparameters, paths, ablation switches.
///
/// Configs live in JSON files; command-line flags override individual fields
/// afterwards. Parsing rejects unknown keys so typos fail loudly instead of
/// silently running defaults. The canonical serialization feeds a 64-bit hash
/// that every artifact manifest records, which is what ties checkpoints,
/// samples, and metric files back to the exact run that produced them.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace sargen {

/// Name of the environment variable holding the default directory searched
/// for config files given by bare name.
inline constexpr const char* kConfigDirEnv = "SARGEN_CONFIG_DIR";

struct RunConfig {
    // Model size. JSON keys keep the capitalized names (F_model, F_emb,
    // F_VAE, F_L, L_cond, L_AR, L_sampler, K, H, slices).
    int f_model = 128;    // shared feature width
    int f_emb = 128;      // denoising-time embedding width
    int f_vae = 128;      // VAE hidden width
    int f_latent = 1;     // per-node latent channels
    int l_cond = 2;       // condition-encoder depth
    int l_ar = 2;         // AR-module depth
    int l_sampler = 2;    // sampler depth
    int num_scales = 3;   // hierarchy depth K
    int heads = 4;
    int slices = 32;

    std::vector<int> steps_per_scale{10, 10, 10};

    // No default seed: every run states its entropy explicitly.
    std::optional<std::uint64_t> seed;

    // Artifact paths.
    std::string data;
    std::string samples;  // generated sample set, consumed by eval
    std::string hierarchy;
    std::string vae_checkpoint;
    std::string sar_checkpoint;
    std::string out;

    // Synthetic data generation.
    std::string generator = "quasiperiodic";  // or "bimodal"
    int grid = 8;
    int snapshots = 512;
    double amplitude = 1.0;  // quasiperiodic wave amplitude
    double mode = 1.0;       // bimodal mode magnitude
    double noise = 0.01;     // bimodal per-node noise sigma

    // Training loop sizing. Learning rates, plateau factor, KL weight and
    // noise injections are fixed constants of the training recipes, not
    // configuration.
    int patience = 20;
    int steps_per_epoch = 200;
    int max_epochs = 100000;

    // Sampling and evaluation.
    int num_samples = 200;

    // Ablations.
    bool latent = true;
    bool nodewise_sampler = false;
    bool cond_encoder = true;

    // Runtime.
    std::string precision = "fp64";  // or "fp32"
    int threads = 1;
    bool verbose = false;
};

/// Parses a config object, rejecting unknown keys and ill-typed values.
/// Does not validate ranges; callers apply flag overrides first and then
/// call validate_config.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Canonical serialization: every field, keys in nlohmann's sorted order.
/// Seed is emitted only when set.
nlohmann::json run_config_to_json(const RunConfig& c);

/// Reads and parses a config file. A bare relative path that does not exist
/// is also tried under $SARGEN_CONFIG_DIR. Missing file raises
/// MissingArtifactError, malformed JSON raises ConfigError.
RunConfig load_run_config(const std::string& path);

/// Range checks (positive widths and counts, known generator and precision
/// names, seed present). Schedule length is checked against the model's
/// scale count by the commands that sample, where the model is known.
/// Throws ConfigError.
void validate_config(const RunConfig& c);

/// FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfig& c);

/// "10,6,1" -> {10, 6, 1}. Throws ConfigError on anything but a comma list
/// of positive integers.
std::vector<int> parse_step_list(const std::string& text);

}  // namespace sargen
