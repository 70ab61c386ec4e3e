/// pipeline.cpp - command implementations and CLI dispatch.
#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checkpoint.hpp"
#include "common.hpp"
#include "eval.hpp"
#include "hierarchy.hpp"
#include "kernels.hpp"
#include "meshgraph.hpp"
#include "sar.hpp"
#include "svgplot.hpp"
#include "vae.hpp"

namespace sargen {

namespace {

void require_path(const std::string& value, const char* what) {
    if (value.empty())
        throw ConfigError(std::string("config: ") + what + " path is required");
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw MissingArtifactError("short write to '" + path + "'");
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

nlohmann::json stats_to_json(const ChannelStats& s) {
    nlohmann::json j = nlohmann::json::object();
    j["mean"] = s.mean;
    j["stddev"] = s.stddev;
    return j;
}

ChannelStats stats_from_json(const nlohmann::json& j) {
    ChannelStats s;
    s.mean = j.at("mean").get<std::vector<double>>();
    s.stddev = j.at("stddev").get<std::vector<double>>();
    return s;
}

/// Sidecar manifest next to the command's primary output.
void write_manifest(const std::string& out_path, const std::string& command,
                    const RunConfig& c, nlohmann::json extras) {
    extras["format"] = "sargen-manifest-v1";
    extras["version"] = kVersion;
    extras["command"] = command;
    extras["config_hash"] = config_hash(c);
    if (c.seed) extras["seed"] = *c.seed;
    extras["config"] = run_config_to_json(c);
    write_text(out_path + ".manifest.json", extras.dump(1) + "\n");
}

const System& primary_system(const Dataset& ds) {
    if (ds.systems.empty()) throw ConfigError("dataset holds no systems");
    return ds.systems.front();
}

// ------------------------------------------------------------ checkpoints

struct LoadedVae {
    ParamStore params;
    VaeModel model;
    nlohmann::json extra;
};

LoadedVae load_vae_checkpoint(const std::string& path) {
    const nlohmann::json manifest = read_checkpoint_manifest(path);
    const nlohmann::json extra = manifest.at("extra");
    if (extra.value("kind", "") != "vae")
        throw ConfigError("'" + path + "' is not a VAE checkpoint");
    LoadedVae lv{ParamStore(0), VaeModel{}, extra};
    lv.model = make_vae(lv.params, "vae", extra.at("field_channels").get<int>(),
                        extra.at("latent_dim").get<int>(),
                        extra.at("width").get<int>(), extra.at("pos_dim").get<int>());
    load_checkpoint(path, lv.params, nullptr);
    return lv;
}

nlohmann::json sar_config_to_json(const SarConfig& sc) {
    nlohmann::json j = nlohmann::json::object();
    j["num_scales"] = sc.num_scales;
    j["field_channels"] = sc.field_channels;
    j["width"] = sc.width;
    j["emb_width"] = sc.emb_width;
    j["num_heads"] = sc.num_heads;
    j["num_slices"] = sc.num_slices;
    j["cond_depth"] = sc.cond_depth;
    j["ar_depth"] = sc.ar_depth;
    j["sampler_depth"] = sc.sampler_depth;
    j["pos_dim"] = sc.pos_dim;
    j["num_conditions"] = sc.num_conditions;
    j["latent_mode"] = sc.latent_mode;
    j["nodewise_sampler"] = sc.nodewise_sampler;
    j["use_cond_encoder"] = sc.use_cond_encoder;
    return j;
}

SarConfig sar_config_from_json(const nlohmann::json& j) {
    SarConfig sc;
    sc.num_scales = j.at("num_scales").get<int>();
    sc.field_channels = j.at("field_channels").get<int>();
    sc.width = j.at("width").get<int>();
    sc.emb_width = j.at("emb_width").get<int>();
    sc.num_heads = j.at("num_heads").get<int>();
    sc.num_slices = j.at("num_slices").get<int>();
    sc.cond_depth = j.at("cond_depth").get<int>();
    sc.ar_depth = j.at("ar_depth").get<int>();
    sc.sampler_depth = j.at("sampler_depth").get<int>();
    sc.pos_dim = j.at("pos_dim").get<int>();
    sc.num_conditions = j.at("num_conditions").get<int>();
    sc.latent_mode = j.at("latent_mode").get<bool>();
    sc.nodewise_sampler = j.at("nodewise_sampler").get<bool>();
    sc.use_cond_encoder = j.at("use_cond_encoder").get<bool>();
    return sc;
}

struct LoadedSar {
    ParamStore params;
    SarModel model;
    nlohmann::json extra;
};

LoadedSar load_sar_checkpoint(const std::string& path) {
    const nlohmann::json manifest = read_checkpoint_manifest(path);
    const nlohmann::json extra = manifest.at("extra");
    if (extra.value("kind", "") != "sar")
        throw ConfigError("'" + path + "' is not a SAR checkpoint");
    LoadedSar ls{ParamStore(0), SarModel{}, extra};
    ls.model = make_sar(ls.params, sar_config_from_json(extra.at("model")));
    load_checkpoint(path, ls.params, nullptr);
    ls.model.value_stats = stats_from_json(extra.at("value_stats"));
    ls.model.field_stats = stats_from_json(extra.at("field_stats"));
    return ls;
}

Hierarchy load_or_build_hierarchy(const RunConfig& c, const MeshGraph& graph,
                                  int num_scales) {
    if (c.hierarchy.empty()) return build_hierarchy(graph, num_scales);
    Hierarchy h = read_hierarchy(c.hierarchy);
    if (static_cast<int>(h.scale_of.size()) != graph.num_nodes)
        throw ConfigError("hierarchy '" + c.hierarchy +
                          "' was built for a different graph (" +
                          std::to_string(h.scale_of.size()) + " nodes vs " +
                          std::to_string(graph.num_nodes) + ")");
    if (h.num_scales != num_scales)
        throw ConfigError("hierarchy '" + c.hierarchy + "' has " +
                          std::to_string(h.num_scales) + " scales, expected " +
                          std::to_string(num_scales));
    return h;
}

std::vector<FieldState> normalized_snapshots(const System& sys,
                                             const ChannelStats& stats) {
    std::vector<FieldState> out;
    out.reserve(sys.snapshots.size());
    for (const FieldState& fs : sys.snapshots)
        out.push_back(normalize_state(fs, stats));
    return out;
}

double mean_best_match_r2(const SampleSet& gen, const SampleSet& ref) {
    double total = 0.0;
    for (const FieldState& fs : gen.fields) total += r2_best_match(fs, ref.fields);
    return total / static_cast<double>(gen.fields.size());
}

}  // namespace

// ------------------------------------------------------------ commands

void run_gen_data(const RunConfig& c) {
    require_path(c.out, "out");
    Dataset ds = c.generator == "bimodal"
                     ? gen_bimodal(c.grid, c.grid, c.mode, c.noise, c.snapshots,
                                   *c.seed)
                     : gen_quasiperiodic(c.grid, c.grid, c.amplitude, c.snapshots,
                                         *c.seed);
    ds.meta["generator"] = c.generator;
    ds.meta["seed"] = *c.seed;
    write_dataset(c.out, ds);
    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out});
    extras["snapshots"] = c.snapshots;
    extras["nodes"] = primary_system(ds).graph.num_nodes;
    write_manifest(c.out, "gen-data", c, extras);
}

void run_hierarchy(const RunConfig& c) {
    require_path(c.data, "data");
    require_path(c.out, "out");
    const Dataset ds = read_dataset(c.data);
    const Hierarchy h = build_hierarchy(primary_system(ds).graph, c.num_scales);
    write_hierarchy(c.out, h);
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto& part : h.partitions) sizes.push_back(part.size());
    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out});
    extras["num_scales"] = h.num_scales;
    extras["scale_sizes"] = sizes;
    write_manifest(c.out, "hierarchy", c, extras);
}

void run_train_vae(const RunConfig& c) {
    require_path(c.data, "data");
    require_path(c.out, "out");
    const Dataset raw = read_dataset(c.data);
    if (raw.space != FieldSpace::kPhysical)
        throw ConfigError("train-vae expects a physical dataset");
    const Dataset ds = raw.channel_stats.empty() ? normalize(raw) : raw;

    VaeTrainConfig tc;
    tc.width = c.f_vae;
    tc.latent_dim = c.f_latent;
    tc.patience_epochs = c.patience;
    tc.max_epochs = c.max_epochs;
    tc.seed = *c.seed;
    tc.verbose = c.verbose;
    TrainedVae tv = train_vae(ds, tc);
    const double r2 = reconstruction_r2(tv.model, ds);

    nlohmann::json extra = nlohmann::json::object();
    extra["kind"] = "vae";
    extra["field_channels"] = tv.model.field_channels;
    extra["latent_dim"] = tv.model.latent_dim;
    extra["width"] = tv.model.width;
    extra["pos_dim"] = tv.model.pos_dim;
    extra["channel_stats"] = stats_to_json(ds.channel_stats);
    extra["config_hash"] = config_hash(c);
    extra["reconstruction_r2"] = r2;
    save_checkpoint(c.out, tv.params, nullptr, extra);

    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < tv.loss_history.size(); ++e)
        csv += std::to_string(e) + "," + fmt(tv.loss_history[e]) + "\n";
    const std::string csv_path = c.out + "_loss.csv";
    write_text(csv_path, csv);

    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out + ".json", c.out + ".bin", csv_path});
    extras["epochs"] = tv.loss_history.size();
    extras["reconstruction_r2"] = r2;
    write_manifest(c.out, "train-vae", c, extras);
}

void run_encode_latents(const RunConfig& c) {
    require_path(c.data, "data");
    require_path(c.vae_checkpoint, "vae_checkpoint");
    require_path(c.out, "out");
    const Dataset raw = read_dataset(c.data);
    if (raw.space != FieldSpace::kPhysical || !raw.channel_stats.empty())
        throw ConfigError("encode-latents expects an unnormalized physical dataset");
    const LoadedVae vae = load_vae_checkpoint(c.vae_checkpoint);
    const ChannelStats stats = stats_from_json(vae.extra.at("channel_stats"));
    const Dataset normalized = normalize_with(raw, stats);

    Dataset latents = encode_dataset(vae.model, normalized);
    latents.meta["vae_checkpoint"] = c.vae_checkpoint;
    latents.meta["source_data"] = c.data;
    write_dataset(c.out, latents);

    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out});
    extras["latent_dim"] = vae.model.latent_dim;
    extras["snapshots"] = latents.total_snapshots();
    write_manifest(c.out, "encode-latents", c, extras);
}

void run_train_sar(const RunConfig& c) {
    require_path(c.data, "data");
    require_path(c.out, "out");
    const Dataset raw = read_dataset(c.data);

    std::optional<LoadedVae> vae;
    std::string vae_path;
    if (c.latent) {
        if (raw.space != FieldSpace::kLatent)
            throw ConfigError(
                "train-sar in latent mode expects an encoded dataset "
                "(run encode-latents first, or pass --no-latent)");
        vae_path = c.vae_checkpoint.empty() ? raw.meta.value("vae_checkpoint", "")
                                            : c.vae_checkpoint;
        if (vae_path.empty())
            throw ConfigError("train-sar in latent mode needs a VAE checkpoint");
        vae.emplace(load_vae_checkpoint(vae_path));
        if (vae->model.latent_dim != raw.channels())
            throw ConfigError("latent dataset has " + std::to_string(raw.channels()) +
                              " channels but the VAE produces " +
                              std::to_string(vae->model.latent_dim));
    } else if (raw.space != FieldSpace::kPhysical) {
        throw ConfigError("train-sar without latent mode expects a physical dataset");
    }

    const Dataset ds = raw.channel_stats.empty() ? normalize(raw) : raw;
    const MeshGraph& graph = primary_system(ds).graph;

    SarConfig sc;
    sc.num_scales = c.num_scales;
    sc.field_channels = ds.channels();
    sc.width = c.f_model;
    sc.emb_width = c.f_emb;
    sc.num_heads = c.heads;
    sc.num_slices = c.slices;
    sc.cond_depth = c.l_cond;
    sc.ar_depth = c.l_ar;
    sc.sampler_depth = c.l_sampler;
    sc.pos_dim = graph.dim;
    sc.num_conditions = graph.num_conditions;
    sc.latent_mode = c.latent;
    sc.nodewise_sampler = c.nodewise_sampler;
    sc.use_cond_encoder = c.cond_encoder;

    SarTrainConfig tc;
    tc.patience_epochs = c.patience;
    tc.steps_per_epoch = c.steps_per_epoch;
    tc.max_epochs = c.max_epochs;
    tc.seed = *c.seed;
    tc.verbose = c.verbose;
    const std::string csv_path = c.out + "_loss.csv";
    tc.metrics_csv = csv_path;

    TrainedSar ts = train_sar(ds, sc, tc);

    nlohmann::json extra = nlohmann::json::object();
    extra["kind"] = "sar";
    extra["model"] = sar_config_to_json(ts.model.config);
    extra["value_stats"] = stats_to_json(ts.model.value_stats);
    extra["field_stats"] =
        vae ? vae->extra.at("channel_stats") : stats_to_json(ChannelStats{});
    extra["vae_checkpoint"] = vae_path;
    extra["config_hash"] = config_hash(c);
    save_checkpoint(c.out, ts.params, nullptr, extra);

    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out + ".json", c.out + ".bin", csv_path});
    extras["epochs"] = ts.loss_history.size();
    extras["final_loss"] = ts.loss_history.empty() ? 0.0 : ts.loss_history.back();
    write_manifest(c.out, "train-sar", c, extras);
}

void run_sample(const RunConfig& c) {
    require_path(c.sar_checkpoint, "sar_checkpoint");
    require_path(c.data, "data");
    require_path(c.out, "out");
    LoadedSar sar = load_sar_checkpoint(c.sar_checkpoint);
    const int model_scales = sar.model.config.num_scales;
    if (static_cast<int>(c.steps_per_scale.size()) != model_scales)
        throw ConfigError("schedule has " + std::to_string(c.steps_per_scale.size()) +
                          " entries but the model generates " +
                          std::to_string(model_scales) + " scales");

    std::optional<LoadedVae> vae;
    if (sar.model.config.latent_mode) {
        const std::string vp = c.vae_checkpoint.empty()
                                   ? sar.extra.value("vae_checkpoint", "")
                                   : c.vae_checkpoint;
        if (vp.empty())
            throw ConfigError("sampling a latent-mode model needs a VAE checkpoint");
        vae.emplace(load_vae_checkpoint(vp));
        sar.model.vae = &vae->model;
    }

    const Dataset geometry = read_dataset(c.data);
    const System& sys = primary_system(geometry);
    const Hierarchy h = load_or_build_hierarchy(c, sys.graph, model_scales);
    const Tensor y = sar.model.encode_conditions(sys.graph, h);

    System out_sys;
    out_sys.graph = sys.graph;
    out_sys.snapshots.reserve(static_cast<std::size_t>(c.num_samples));
    std::int64_t evals_per_sample = 0;
    for (int i = 0; i < c.num_samples; ++i) {
        GenerateResult g = generate(sar.model, sys.graph, h, c.steps_per_scale,
                                    *c.seed, static_cast<std::uint64_t>(i), &y);
        evals_per_sample = g.node_evaluations;
        out_sys.snapshots.push_back(std::move(g.field));
    }

    Dataset out_ds;
    out_ds.systems.push_back(std::move(out_sys));
    out_ds.space = FieldSpace::kPhysical;
    out_ds.meta["kind"] = "samples";
    out_ds.meta["sar_checkpoint"] = c.sar_checkpoint;
    out_ds.meta["train_config_hash"] = sar.extra.value("config_hash", "");
    out_ds.meta["steps_per_scale"] = c.steps_per_scale;
    out_ds.meta["seed"] = *c.seed;
    out_ds.meta["node_evaluations_per_sample"] = evals_per_sample;
    write_dataset(c.out, out_ds);

    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out});
    extras["num_samples"] = c.num_samples;
    extras["steps_per_scale"] = c.steps_per_scale;
    extras["node_evaluations_per_sample"] = evals_per_sample;
    extras["node_evaluations_total"] = evals_per_sample * c.num_samples;
    extras["train_config_hash"] = sar.extra.value("config_hash", "");
    write_manifest(c.out, "sample", c, extras);
}

void run_eval(const RunConfig& c) {
    require_path(c.data, "data");
    require_path(c.samples, "samples");
    require_path(c.out, "out");
    const Dataset ref = read_dataset(c.data);
    const Dataset gen = read_dataset(c.samples);
    if (ref.space != FieldSpace::kPhysical || !ref.channel_stats.empty() ||
        gen.space != FieldSpace::kPhysical || !gen.channel_stats.empty())
        throw ConfigError("eval expects raw physical datasets on both sides");
    const System& rs = primary_system(ref);
    const System& gs = primary_system(gen);
    if (rs.graph.num_nodes != gs.graph.num_nodes || ref.channels() != gen.channels())
        throw ConfigError("eval: reference and samples disagree on geometry");

    // Both sides are standardized with the reference statistics so the
    // distances are measured in reference units.
    const ChannelStats stats = compute_channel_stats(ref);
    const SampleSet ref_set =
        make_sample_set(normalized_snapshots(rs, stats), "ground-truth");
    const SampleSet gen_set =
        make_sample_set(normalized_snapshots(gs, stats), "generated");

    const double w2 = w2_distance(gen_set, ref_set);
    const double r2 = mean_best_match_r2(gen_set, ref_set);
    const double sign_gen = sign_agreement(gen_set);
    const double sign_ref = sign_agreement(ref_set);
    const double pos_gen = positive_fraction(gen_set);
    const double pos_ref = positive_fraction(ref_set);

    const int n_gen = static_cast<int>(gen_set.fields.size());
    const int n_ref = static_cast<int>(ref_set.fields.size());
    nlohmann::json reports = nlohmann::json::array();
    auto add_scalar = [&](const std::string& name, double value) {
        MetricReport r;
        r.name = name;
        r.scalar = value;
        r.samples_a = n_gen;
        r.samples_b = n_ref;
        reports.push_back(metric_report_to_json(r));
    };
    add_scalar("w2", w2);
    add_scalar("r2_best_match", r2);
    add_scalar("sign_agreement_generated", sign_gen);
    add_scalar("sign_agreement_reference", sign_ref);
    add_scalar("positive_fraction_generated", pos_gen);
    add_scalar("positive_fraction_reference", pos_ref);

    std::string scalars_csv = "metric,value\n";
    scalars_csv += "w2," + fmt(w2) + "\n";
    scalars_csv += "r2_best_match," + fmt(r2) + "\n";
    scalars_csv += "sign_agreement_generated," + fmt(sign_gen) + "\n";
    scalars_csv += "sign_agreement_reference," + fmt(sign_ref) + "\n";
    scalars_csv += "positive_fraction_generated," + fmt(pos_gen) + "\n";
    scalars_csv += "positive_fraction_reference," + fmt(pos_ref) + "\n";

    std::vector<std::string> outputs{c.out + ".json", c.out + "_scalars.csv"};
    write_text(c.out + "_scalars.csv", scalars_csv);

    // Per-node statistics and the PDF at the most active node need two or
    // more samples on each side.
    if (n_gen >= 2 && n_ref >= 2) {
        const PerNodeStats pr = per_node_stats(ref_set);
        const PerNodeStats pg = per_node_stats(gen_set);
        const int channels = ref.channels();
        std::string pernode = "node";
        for (int ch = 0; ch < channels; ++ch) {
            const std::string suffix = std::to_string(ch);
            pernode += ",mean_ref_" + suffix + ",mean_gen_" + suffix +
                       ",std_ref_" + suffix + ",std_gen_" + suffix;
        }
        pernode += "\n";
        for (int i = 0; i < rs.graph.num_nodes; ++i) {
            pernode += std::to_string(i);
            for (int ch = 0; ch < channels; ++ch) {
                pernode += "," + fmt(pr.mean.at(i, ch)) + "," + fmt(pg.mean.at(i, ch)) +
                           "," + fmt(pr.stddev.at(i, ch)) + "," + fmt(pg.stddev.at(i, ch));
            }
            pernode += "\n";
        }
        write_text(c.out + "_pernode.csv", pernode);
        outputs.push_back(c.out + "_pernode.csv");

        int busiest = 0;
        for (int i = 1; i < rs.graph.num_nodes; ++i)
            if (pr.stddev.at(i, 0) > pr.stddev.at(busiest, 0)) busiest = i;
        constexpr int kPdfBins = 32;
        auto histogram_csv = [&](const SampleSet& set) {
            const Histogram hist = pdf_histogram(set, busiest, 0, kPdfBins);
            std::string csv = "value,density\n";
            for (std::size_t b = 0; b < hist.density.size(); ++b) {
                const double center = hist.lo + (static_cast<double>(b) + 0.5) * hist.bin_width;
                csv += fmt(center) + "," + fmt(hist.density[b]) + "\n";
            }
            return csv;
        };
        write_text(c.out + "_pdf_ref.csv", histogram_csv(ref_set));
        write_text(c.out + "_pdf_gen.csv", histogram_csv(gen_set));
        outputs.push_back(c.out + "_pdf_ref.csv");
        outputs.push_back(c.out + "_pdf_gen.csv");

        MetricReport hist_report;
        hist_report.name = "pdf_node";
        hist_report.scalar = busiest;
        hist_report.samples_a = n_gen;
        hist_report.samples_b = n_ref;
        hist_report.config["bins"] = kPdfBins;
        hist_report.config["node"] = busiest;
        reports.push_back(metric_report_to_json(hist_report));
    }

    nlohmann::json summary = nlohmann::json::object();
    summary["metrics"] = reports;
    write_text(c.out + ".json", summary.dump(1) + "\n");

    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = outputs;
    extras["w2"] = w2;
    extras["r2_best_match"] = r2;
    write_manifest(c.out, "eval", c, extras);
}

void run_bench(const RunConfig& c) {
    require_path(c.sar_checkpoint, "sar_checkpoint");
    require_path(c.data, "data");
    require_path(c.out, "out");
    LoadedSar sar = load_sar_checkpoint(c.sar_checkpoint);
    const int model_scales = sar.model.config.num_scales;

    std::optional<LoadedVae> vae;
    if (sar.model.config.latent_mode) {
        const std::string vp = c.vae_checkpoint.empty()
                                   ? sar.extra.value("vae_checkpoint", "")
                                   : c.vae_checkpoint;
        if (vp.empty())
            throw ConfigError("benchmarking a latent-mode model needs a VAE checkpoint");
        vae.emplace(load_vae_checkpoint(vp));
        sar.model.vae = &vae->model;
    }

    const Dataset ref = read_dataset(c.data);
    if (ref.space != FieldSpace::kPhysical || !ref.channel_stats.empty())
        throw ConfigError("bench expects a raw physical reference dataset");
    const System& sys = primary_system(ref);
    const Hierarchy h = load_or_build_hierarchy(c, sys.graph, model_scales);
    const ChannelStats stats = compute_channel_stats(ref);
    const SampleSet ref_set =
        make_sample_set(normalized_snapshots(sys, stats), "ground-truth");
    const Tensor y = sar.model.encode_conditions(sys.graph, h);

    // Flat schedules plus a fine-lean taper: coarse scales afford many steps
    // because they touch few nodes.
    std::vector<std::vector<int>> schedules;
    for (int n : {1, 2, 4, 10})
        schedules.emplace_back(static_cast<std::size_t>(model_scales), n);
    if (model_scales > 1) {
        std::vector<int> taper(static_cast<std::size_t>(model_scales));
        for (int k = 0; k < model_scales; ++k)
            taper[static_cast<std::size_t>(k)] = std::max(
                1, static_cast<int>(std::lround(10.0 - 9.0 * k / (model_scales - 1))));
        schedules.push_back(std::move(taper));
    }

    std::string csv = "node_evals,wall_clock_s,w2,r2,schedule\n";
    for (const std::vector<int>& schedule : schedules) {
        std::string label;
        for (std::size_t i = 0; i < schedule.size(); ++i)
            label += (i ? "|" : "") + std::to_string(schedule[i]);
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<FieldState> fields;
        fields.reserve(static_cast<std::size_t>(c.num_samples));
        std::int64_t evals = 0;
        for (int i = 0; i < c.num_samples; ++i) {
            GenerateResult g = generate(sar.model, sys.graph, h, schedule, *c.seed,
                                        static_cast<std::uint64_t>(i), &y);
            evals = g.node_evaluations;
            fields.push_back(normalize_state(g.field, stats));
        }
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        const SampleSet gen_set = make_sample_set(std::move(fields), "generated");
        const double w2 = w2_distance(gen_set, ref_set);
        const double r2 = mean_best_match_r2(gen_set, ref_set);
        csv += std::to_string(evals) + "," + fmt(wall) + "," + fmt(w2) + "," +
               fmt(r2) + "," + label + "\n";
    }
    write_text(c.out, csv);

    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out});
    extras["num_samples"] = c.num_samples;
    write_manifest(c.out, "bench", c, extras);
}

void run_plot(const RunConfig& c, bool bar_chart) {
    require_path(c.data, "data");
    require_path(c.out, "out");
    const std::string text = slurp(c.data);
    const std::string title = std::filesystem::path(c.out).stem().string();
    std::string svg;
    if (bar_chart) {
        svg = bar_chart_svg(title, "value", csv_to_bars(text));
    } else {
        const std::vector<Series> series = csv_to_series(text);
        const std::string x_label = text.substr(0, text.find_first_of(",\r\n"));
        const std::string y_label = series.size() == 1 ? series[0].label : "value";
        svg = line_chart_svg(title, x_label, y_label, series);
    }
    write_text(c.out, svg);
    nlohmann::json extras = nlohmann::json::object();
    extras["outputs"] = nlohmann::json::array({c.out});
    extras["bar_chart"] = bar_chart;
    write_manifest(c.out, "plot", c, extras);
}

// ------------------------------------------------------------ CLI

int cli_main(int argc, const char* const* argv) {
    // The config file must be applied before flag overrides, so --config is
    // resolved in a pre-scan.
    RunConfig c;
    try {
        for (int i = 1; i < argc; ++i) {
            const std::string arg = argv[i];
            if (arg == "--config" && i + 1 < argc) {
                c = load_run_config(argv[i + 1]);
                break;
            }
            if (arg.rfind("--config=", 0) == 0) {
                c = load_run_config(arg.substr(9));
                break;
            }
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    }

    CLI::App app{"scale-autoregressive generation of fields on mesh graphs"};
    app.require_subcommand(1);

    std::string config_path, steps_text;
    std::uint64_t seed_holder = 0;
    bool no_latent = false, nodewise = false, no_cond = false;
    bool bar_chart = false, verbose = false;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed_holder, "master RNG seed (required)");
    app.add_option("--threads", c.threads, "kernel threads; 1 is the test contract");
    app.add_option("--precision", c.precision, "fp64 | fp32");
    app.add_option("--data", c.data, "input dataset (or CSV for plot)");
    app.add_option("--in", c.data, "alias for --data");
    app.add_option("--samples", c.samples, "generated sample dataset (eval)");
    app.add_option("--hierarchy", c.hierarchy, "hierarchy JSON path");
    app.add_option("--vae-checkpoint", c.vae_checkpoint, "VAE checkpoint base path");
    app.add_option("--sar-checkpoint", c.sar_checkpoint, "SAR checkpoint base path");
    app.add_option("--out", c.out, "output path (base name for multi-file outputs)");
    app.add_option("--generator", c.generator, "quasiperiodic | bimodal");
    app.add_option("--grid", c.grid, "grid side length for gen-data");
    app.add_option("--snapshots", c.snapshots, "snapshot count for gen-data");
    app.add_option("--amplitude", c.amplitude, "quasiperiodic wave amplitude");
    app.add_option("--mode", c.mode, "bimodal mode magnitude");
    app.add_option("--noise", c.noise, "bimodal noise sigma");
    app.add_option("--patience", c.patience, "plateau patience (epochs)");
    app.add_option("--steps-per-epoch", c.steps_per_epoch, "SAR steps per epoch");
    app.add_option("--max-epochs", c.max_epochs, "training epoch cap");
    app.add_option("--num-samples", c.num_samples, "samples to generate / evaluate");
    app.add_option("--steps", steps_text, "per-scale Euler steps, e.g. 10,6,1");
    app.add_option("--scales", c.num_scales, "hierarchy depth K");
    app.add_option("--f-model", c.f_model, "feature width F_model");
    app.add_option("--f-emb", c.f_emb, "time-embedding width F_emb");
    app.add_option("--f-vae", c.f_vae, "VAE width F_VAE");
    app.add_option("--f-latent", c.f_latent, "latent channels F_L");
    app.add_option("--l-cond", c.l_cond, "condition-encoder depth L_cond");
    app.add_option("--l-ar", c.l_ar, "AR-module depth L_AR");
    app.add_option("--l-sampler", c.l_sampler, "sampler depth L_sampler");
    app.add_option("--heads", c.heads, "attention heads");
    app.add_option("--slices", c.slices, "physics-attention slices");
    app.add_flag("--no-latent", no_latent, "train and sample in physical space");
    app.add_flag("--nodewise-sampler", nodewise,
                 "replace sampler attention with per-node MLP blocks");
    app.add_flag("--no-cond-encoder", no_cond,
                 "replace the condition encoder with a linear lift");
    app.add_flag("--bar", bar_chart, "plot: render a bar chart");
    app.add_flag("--verbose", verbose, "print training progress");

    const char* kCommands[] = {"gen-data",    "hierarchy", "train-vae",
                               "encode-latents", "train-sar", "sample",
                               "eval",        "bench",     "plot"};
    const char* kDescriptions[] = {
        "generate a synthetic dataset",
        "build the multiscale node partition",
        "train the graph VAE",
        "encode a dataset to posterior-mean latents",
        "train the scale-autoregressive model",
        "generate samples from a trained model",
        "compute metrics between samples and a reference",
        "sweep step schedules and report cost/quality",
        "render a metric CSV to SVG"};
    for (std::size_t i = 0; i < std::size(kCommands); ++i)
        app.add_subcommand(kCommands[i], kDescriptions[i])->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.count("--seed")) c.seed = seed_holder;
        if (app.count("--steps")) c.steps_per_scale = parse_step_list(steps_text);
        if (no_latent) c.latent = false;
        if (nodewise) c.nodewise_sampler = true;
        if (no_cond) c.cond_encoder = false;
        if (verbose) c.verbose = true;
        validate_config(c);
        kernels::set_threads(c.threads);
        kernels::set_fp32_emulation(c.precision == "fp32");

        if (app.got_subcommand("gen-data")) run_gen_data(c);
        else if (app.got_subcommand("hierarchy")) run_hierarchy(c);
        else if (app.got_subcommand("train-vae")) run_train_vae(c);
        else if (app.got_subcommand("encode-latents")) run_encode_latents(c);
        else if (app.got_subcommand("train-sar")) run_train_sar(c);
        else if (app.got_subcommand("sample")) run_sample(c);
        else if (app.got_subcommand("eval")) run_eval(c);
        else if (app.got_subcommand("bench")) run_bench(c);
        else if (app.got_subcommand("plot")) run_plot(c, bar_chart);
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    }
}

}  // namespace sargen
