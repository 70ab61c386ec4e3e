/// checkpoint.hpp - model persistence.
///
/// A checkpoint is a pair of files: <path>.json, the manifest (parameter
/// names, shapes, blob offsets, optimizer state layout, plus a caller-owned
/// "extra" object for config and normalization stats), and <path>.bin, a flat
/// little-endian blob of doubles. Deterministic byte-for-byte given the same
/// model state.
#pragma once

#include <string>

#include "json.hpp"
#include "optim.hpp"

namespace sargen {

inline constexpr const char* kCheckpointFormat = "sargen-checkpoint-v1";

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamOptimizer* optimizer, const nlohmann::json& extra);

/// Loads values (and optimizer moments when requested) into an existing
/// store. The stored parameter set must match the store exactly; mismatches
/// raise ConfigError. Returns the manifest's "extra" payload.
nlohmann::json load_checkpoint(const std::string& path, ParamStore& params,
                               AdamOptimizer* optimizer);

/// Manifest without touching the blob.
nlohmann::json read_checkpoint_manifest(const std::string& path);

}  // namespace sargen
