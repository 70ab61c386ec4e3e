#include "checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian doubles");

namespace sargen {

namespace {

void write_file(const std::string& path, const char* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw MissingArtifactError("cannot open '" + path + "' for writing");
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw MissingArtifactError("short write to '" + path + "'");
}

std::vector<double> read_blob(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw MissingArtifactError("cannot open checkpoint blob '" + path + "'");
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes % sizeof(double) != 0)
        throw ConfigError("checkpoint blob '" + path + "' has a torn size");
    std::vector<double> data(bytes / sizeof(double));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw MissingArtifactError("short read from '" + path + "'");
    return data;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamOptimizer* optimizer, const nlohmann::json& extra) {
    nlohmann::json manifest;
    manifest["format"] = kCheckpointFormat;
    manifest["version"] = kVersion;

    std::vector<double> blob;
    auto append = [&blob](std::span<const double> vals) {
        const std::size_t offset = blob.size();
        blob.insert(blob.end(), vals.begin(), vals.end());
        return offset;
    };

    nlohmann::json plist = nlohmann::json::array();
    for (const auto& [name, t] : params.entries()) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["rows"] = t.rows();
        entry["cols"] = t.cols();
        entry["offset"] = append(t.values());
        plist.push_back(std::move(entry));
    }
    manifest["params"] = std::move(plist);

    if (optimizer) {
        const AdamState& st = optimizer->state();
        nlohmann::json opt;
        opt["type"] = "adam";
        opt["step"] = st.step;
        nlohmann::json moffs = nlohmann::json::array();
        nlohmann::json voffs = nlohmann::json::array();
        for (const auto& m : st.m) moffs.push_back(append(m));
        for (const auto& v : st.v) voffs.push_back(append(v));
        opt["m_offsets"] = std::move(moffs);
        opt["v_offsets"] = std::move(voffs);
        manifest["optimizer"] = std::move(opt);
    }

    manifest["extra"] = extra;

    const std::string text = manifest.dump(2) + "\n";
    write_file(path + ".json", text.data(), text.size());
    write_file(path + ".bin", reinterpret_cast<const char*>(blob.data()),
               blob.size() * sizeof(double));
}

nlohmann::json read_checkpoint_manifest(const std::string& path) {
    std::ifstream in(path + ".json");
    if (!in)
        throw MissingArtifactError("cannot open checkpoint manifest '" + path +
                                   ".json'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed checkpoint manifest '" + path +
                          ".json': " + e.what());
    }
    if (manifest.value("format", "") != kCheckpointFormat)
        throw ConfigError("'" + path + "' is not a " + kCheckpointFormat + " file");
    return manifest;
}

nlohmann::json load_checkpoint(const std::string& path, ParamStore& params,
                               AdamOptimizer* optimizer) {
    const nlohmann::json manifest = read_checkpoint_manifest(path);
    const std::vector<double> blob = read_blob(path + ".bin");

    const auto& plist = manifest.at("params");
    if (plist.size() != params.entries().size())
        throw ConfigError("checkpoint '" + path + "' holds " +
                          std::to_string(plist.size()) + " parameters, model has " +
                          std::to_string(params.entries().size()));

    auto copy_from = [&blob, &path](std::size_t offset, double* dst, std::size_t n) {
        if (offset + n > blob.size())
            throw ConfigError("checkpoint '" + path + "' blob is truncated");
        std::memcpy(dst, blob.data() + offset, n * sizeof(double));
    };

    for (const auto& entry : plist) {
        const std::string name = entry.at("name");
        Tensor* t = params.find(name);
        if (!t)
            throw ConfigError("checkpoint parameter '" + name +
                              "' does not exist in the model");
        if (entry.at("rows") != t->rows() || entry.at("cols") != t->cols())
            throw ConfigError("checkpoint parameter '" + name + "' has shape " +
                              entry.at("rows").dump() + "x" + entry.at("cols").dump() +
                              ", model expects " + std::to_string(t->rows()) + "x" +
                              std::to_string(t->cols()));
        copy_from(entry.at("offset"), t->mutable_values(),
                static_cast<std::size_t>(t->numel()));
    }

    if (optimizer && manifest.contains("optimizer")) {
        const auto& opt = manifest.at("optimizer");
        AdamState st;
        st.step = opt.at("step");
        const auto& moffs = opt.at("m_offsets");
        const auto& voffs = opt.at("v_offsets");
        const auto& entries = params.entries();
        if (moffs.size() != entries.size() || voffs.size() != entries.size())
            throw ConfigError("checkpoint optimizer state does not match model");
        for (std::size_t p = 0; p < entries.size(); ++p) {
            const auto n = static_cast<std::size_t>(entries[p].second.numel());
            st.m.emplace_back(n);
            st.v.emplace_back(n);
            copy_from(moffs[p], st.m.back().data(), n);
            copy_from(voffs[p], st.v.back().data(), n);
        }
        optimizer->restore(std::move(st));
    }

    return manifest.value("extra", nlohmann::json::object());
}

}  // namespace sargen
