/// config.cpp - JSON parsing, validation, hashing.
#include "config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common.hpp"

namespace sargen {

RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: root must be a JSON object");
    RunConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "F_model") c.f_model = value.get<int>();
            else if (key == "F_emb") c.f_emb = value.get<int>();
            else if (key == "F_VAE") c.f_vae = value.get<int>();
            else if (key == "F_L") c.f_latent = value.get<int>();
            else if (key == "L_cond") c.l_cond = value.get<int>();
            else if (key == "L_AR") c.l_ar = value.get<int>();
            else if (key == "L_sampler") c.l_sampler = value.get<int>();
            else if (key == "K") c.num_scales = value.get<int>();
            else if (key == "H") c.heads = value.get<int>();
            else if (key == "slices") c.slices = value.get<int>();
            else if (key == "steps_per_scale") c.steps_per_scale = value.get<std::vector<int>>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "data") c.data = value.get<std::string>();
            else if (key == "samples") c.samples = value.get<std::string>();
            else if (key == "hierarchy") c.hierarchy = value.get<std::string>();
            else if (key == "vae_checkpoint") c.vae_checkpoint = value.get<std::string>();
            else if (key == "sar_checkpoint") c.sar_checkpoint = value.get<std::string>();
            else if (key == "out") c.out = value.get<std::string>();
            else if (key == "generator") c.generator = value.get<std::string>();
            else if (key == "grid") c.grid = value.get<int>();
            else if (key == "snapshots") c.snapshots = value.get<int>();
            else if (key == "amplitude") c.amplitude = value.get<double>();
            else if (key == "mode") c.mode = value.get<double>();
            else if (key == "noise") c.noise = value.get<double>();
            else if (key == "patience") c.patience = value.get<int>();
            else if (key == "steps_per_epoch") c.steps_per_epoch = value.get<int>();
            else if (key == "max_epochs") c.max_epochs = value.get<int>();
            else if (key == "num_samples") c.num_samples = value.get<int>();
            else if (key == "latent") c.latent = value.get<bool>();
            else if (key == "nodewise_sampler") c.nodewise_sampler = value.get<bool>();
            else if (key == "cond_encoder") c.cond_encoder = value.get<bool>();
            else if (key == "precision") c.precision = value.get<std::string>();
            else if (key == "threads") c.threads = value.get<int>();
            else if (key == "verbose") c.verbose = value.get<bool>();
            else throw ConfigError("config: unknown key \"" + key + "\"");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config: bad value for \"" + key + "\": " + e.what());
        }
    }
    return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j{
        {"F_model", c.f_model},
        {"F_emb", c.f_emb},
        {"F_VAE", c.f_vae},
        {"F_L", c.f_latent},
        {"L_cond", c.l_cond},
        {"L_AR", c.l_ar},
        {"L_sampler", c.l_sampler},
        {"K", c.num_scales},
        {"H", c.heads},
        {"slices", c.slices},
        {"steps_per_scale", c.steps_per_scale},
        {"data", c.data},
        {"samples", c.samples},
        {"hierarchy", c.hierarchy},
        {"vae_checkpoint", c.vae_checkpoint},
        {"sar_checkpoint", c.sar_checkpoint},
        {"out", c.out},
        {"generator", c.generator},
        {"grid", c.grid},
        {"snapshots", c.snapshots},
        {"amplitude", c.amplitude},
        {"mode", c.mode},
        {"noise", c.noise},
        {"patience", c.patience},
        {"steps_per_epoch", c.steps_per_epoch},
        {"max_epochs", c.max_epochs},
        {"num_samples", c.num_samples},
        {"latent", c.latent},
        {"nodewise_sampler", c.nodewise_sampler},
        {"cond_encoder", c.cond_encoder},
        {"precision", c.precision},
        {"threads", c.threads},
        {"verbose", c.verbose},
    };
    if (c.seed) j["seed"] = *c.seed;
    return j;
}

RunConfig load_run_config(const std::string& path) {
    namespace fs = std::filesystem;
    fs::path p(path);
    if (!fs::exists(p) && p.is_relative()) {
        if (const char* dir = std::getenv(kConfigDirEnv); dir && *dir)
            p = fs::path(dir) / p;
    }
    std::ifstream in(p);
    if (!in) throw MissingArtifactError("config file not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: failed to parse " + p.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

void validate_config(const RunConfig& c) {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    positive(c.f_model, "F_model");
    positive(c.f_emb, "F_emb");
    positive(c.f_vae, "F_VAE");
    positive(c.f_latent, "F_L");
    positive(c.num_scales, "K");
    positive(c.heads, "H");
    positive(c.slices, "slices");
    if (c.l_cond < 0 || c.l_ar < 0 || c.l_sampler < 0)
        throw ConfigError("config: block depths must be nonnegative");
    if (c.f_emb % 2 != 0)
        throw ConfigError("config: F_emb must be even for the sinusoidal embedding");
    if (!c.seed) throw ConfigError("config: seed is required");
    if (c.steps_per_scale.empty())
        throw ConfigError("config: steps_per_scale must not be empty");
    for (int s : c.steps_per_scale)
        if (s < 1) throw ConfigError("config: steps_per_scale entries must be >= 1");
    if (c.generator != "quasiperiodic" && c.generator != "bimodal")
        throw ConfigError("config: unknown generator \"" + c.generator + "\"");
    if (c.grid < 2) throw ConfigError("config: grid must be at least 2");
    if (c.amplitude <= 0.0) throw ConfigError("config: amplitude must be positive");
    if (c.noise < 0.0) throw ConfigError("config: noise must be nonnegative");
    positive(c.snapshots, "snapshots");
    positive(c.patience, "patience");
    positive(c.steps_per_epoch, "steps_per_epoch");
    positive(c.max_epochs, "max_epochs");
    positive(c.num_samples, "num_samples");
    if (c.precision != "fp64" && c.precision != "fp32")
        throw ConfigError("config: precision must be fp64 or fp32");
    positive(c.threads, "threads");
}

std::string config_hash(const RunConfig& c) {
    const std::string text = run_config_to_json(c).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<int> parse_step_list(const std::string& text) {
    std::vector<int> steps;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument(item);
            steps.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("config: bad step count \"" + item + "\" in \"" + text + "\"");
        }
    }
    if (steps.empty()) throw ConfigError("config: empty step schedule \"" + text + "\"");
    return steps;
}

}  // namespace sargen
