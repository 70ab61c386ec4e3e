/// pipeline.hpp - command implementations behind the sargen binary.
///
/// Each command reads its inputs according to the RunConfig, writes its
/// outputs, and drops a sidecar manifest "<out>.manifest.json" holding the
/// command name, config hash, seed, version, output list, and the full
/// resolved config, so any artifact can be traced back to (and rerun from)
/// the configuration that produced it. Manifests carry no timestamps;
/// rerunning a command with the same inputs reproduces every output byte.
///
/// Artifact flow:
///   gen-data        config -> dataset JSON (raw physical units)
///   hierarchy       dataset -> multiscale partition JSON
///   train-vae       dataset -> VAE checkpoint (+ loss CSV); normalization
///                   stats are stored in the checkpoint
///   encode-latents  dataset + VAE checkpoint -> latent dataset
///                   (posterior means, unscaled)
///   train-sar       dataset (latent or physical) -> SAR checkpoint
///                   (+ loss CSV); stores sampler-space stats, physical
///                   stats, and the VAE checkpoint path in latent mode
///   sample          SAR checkpoint + dataset geometry -> sample dataset in
///                   raw physical units
///   eval            reference dataset + samples -> metric JSON/CSV files;
///                   both sides are normalized with the reference stats
///   bench           SAR checkpoint + reference -> per-schedule cost/quality
///                   CSV
///   plot            metric CSV -> SVG chart
#pragma once

#include <string>

#include "config.hpp"

namespace sargen {

void run_gen_data(const RunConfig& c);
void run_hierarchy(const RunConfig& c);
void run_train_vae(const RunConfig& c);
void run_encode_latents(const RunConfig& c);
void run_train_sar(const RunConfig& c);
void run_sample(const RunConfig& c);
void run_eval(const RunConfig& c);
void run_bench(const RunConfig& c);
/// Renders the CSV at c.data to an SVG at c.out; bar_chart selects the
/// categorical form (first column labels), otherwise a line chart.
void run_plot(const RunConfig& c, bool bar_chart);

/// argv-level entry point: parses flags, loads the config file named by
/// --config (plus overrides), validates, applies thread/precision settings,
/// and dispatches. Returns the process exit code: 0 success, 2 configuration
/// error, 3 missing prerequisite artifact, 4 numerical failure.
int cli_main(int argc, const char* const* argv);

}  // namespace sargen
