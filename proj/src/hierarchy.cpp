#include "hierarchy.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "common.hpp"

namespace sargen {

std::vector<int> guillard_mask(const std::vector<std::pair<int, int>>& edges,
                               int num_nodes) {
    // Adjacency as CSR over the directed edge list.
    std::vector<int> degree(num_nodes, 0);
    for (const auto& [src, dst] : edges) {
        (void)src;
        ++degree[dst];
    }
    std::vector<int> offset(num_nodes + 1, 0);
    for (int i = 0; i < num_nodes; ++i) offset[i + 1] = offset[i] + degree[i];
    std::vector<int> in_neighbors(edges.size());
    std::vector<int> cursor(offset.begin(), offset.end() - 1);
    for (const auto& [src, dst] : edges) in_neighbors[cursor[dst]++] = src;

    std::vector<char> masked(num_nodes, 0);
    std::vector<int> kept;
    for (int i = 0; i < num_nodes; ++i) {
        if (masked[i]) continue;
        kept.push_back(i);
        for (int e = offset[i]; e < offset[i + 1]; ++e) masked[in_neighbors[e]] = 1;
    }
    return kept;
}

std::vector<std::pair<int, int>> coarsen_edges(
    const std::vector<std::pair<int, int>>& edges, int num_nodes,
    const std::vector<int>& kept) {
    std::vector<std::vector<int>> adj(num_nodes);
    for (const auto& [src, dst] : edges) adj[src].push_back(dst);
    std::vector<char> is_kept(num_nodes, 0);
    for (int k : kept) is_kept[k] = 1;

    std::set<std::pair<int, int>> out;
    for (int a : kept) {
        // One and two hops out from a; any intermediate node counts.
        for (int b : adj[a]) {
            if (b != a && is_kept[b]) out.insert({std::min(a, b), std::max(a, b)});
            for (int c : adj[b]) {
                if (c != a && is_kept[c]) out.insert({std::min(a, c), std::max(a, c)});
            }
        }
    }
    return {out.begin(), out.end()};
}

Hierarchy build_hierarchy(const MeshGraph& graph, int num_scales) {
    if (num_scales < 1)
        throw std::invalid_argument("build_hierarchy: need at least one scale");

    // Peel K-1 times. Level 0 is the full graph; level_nodes[l] maps the
    // level's compact indices back to original node ids.
    std::vector<std::vector<int>> level_nodes(1);
    level_nodes[0].resize(graph.num_nodes);
    for (int i = 0; i < graph.num_nodes; ++i) level_nodes[0][i] = i;

    std::vector<std::pair<int, int>> cur_edges = graph.edges;
    int cur_n = graph.num_nodes;
    std::vector<std::vector<int>> dropped_at;  // [sweep][original ids]
    for (int sweep = 0; sweep + 1 < num_scales; ++sweep) {
        const std::vector<int> kept = guillard_mask(cur_edges, cur_n);
        std::vector<char> is_kept(cur_n, 0);
        for (int k : kept) is_kept[k] = 1;
        std::vector<int> dropped;
        for (int i = 0; i < cur_n; ++i)
            if (!is_kept[i]) dropped.push_back(level_nodes.back()[i]);
        dropped_at.push_back(std::move(dropped));

        const auto coarse_undirected = coarsen_edges(cur_edges, cur_n, kept);
        // Compact re-index for the next level.
        std::vector<int> compact(cur_n, -1);
        std::vector<int> next_nodes(kept.size());
        for (std::size_t c = 0; c < kept.size(); ++c) {
            compact[kept[c]] = static_cast<int>(c);
            next_nodes[c] = level_nodes.back()[kept[c]];
        }
        std::vector<std::pair<int, int>> next_edges;
        next_edges.reserve(coarse_undirected.size() * 2);
        for (const auto& [a, b] : coarse_undirected) {
            next_edges.emplace_back(compact[a], compact[b]);
            next_edges.emplace_back(compact[b], compact[a]);
        }
        std::sort(next_edges.begin(), next_edges.end());
        level_nodes.push_back(std::move(next_nodes));
        cur_edges = std::move(next_edges);
        cur_n = static_cast<int>(level_nodes.back().size());
    }

    // Scale 1 = nodes surviving all sweeps; scale K+1-l = nodes dropped at
    // sweep l, so the generation order runs coarsest to finest.
    Hierarchy h;
    h.num_scales = num_scales;
    h.partitions.resize(num_scales);
    h.partitions[0] = level_nodes.back();
    std::sort(h.partitions[0].begin(), h.partitions[0].end());
    for (int sweep = 0; sweep + 1 < num_scales; ++sweep) {
        auto& part = h.partitions[num_scales - 1 - sweep];
        part = std::move(dropped_at[sweep]);
        std::sort(part.begin(), part.end());
    }
    for (int k = 0; k < num_scales; ++k)
        if (h.partitions[k].empty())
            throw NumericalError("hierarchy scale " + std::to_string(k + 1) +
                                 " is empty; the mesh is too small for " +
                                 std::to_string(num_scales) + " scales");
    h.scale_of.assign(graph.num_nodes, 0);
    for (int k = 0; k < num_scales; ++k)
        for (int id : h.partitions[k]) h.scale_of[id] = k + 1;
    return h;
}

std::vector<int> Hierarchy::prefix(int k) const {
    if (k < 1 || k > num_scales) throw std::out_of_range("Hierarchy::prefix");
    std::vector<int> out;
    for (int s = 0; s < k; ++s)
        out.insert(out.end(), partitions[s].begin(), partitions[s].end());
    return out;
}

std::vector<double> scale_onehot(const Hierarchy& h) {
    const int n = static_cast<int>(h.scale_of.size());
    std::vector<double> out(static_cast<std::size_t>(n) * h.num_scales, 0.0);
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i) * h.num_scales + (h.scale_of[i] - 1)] = 1.0;
    return out;
}

namespace {
constexpr const char* kHierarchyFormat = "sargen-hierarchy-v1";
}

nlohmann::json hierarchy_to_json(const Hierarchy& h) {
    nlohmann::json j;
    j["format"] = kHierarchyFormat;
    j["num_scales"] = h.num_scales;
    j["partitions"] = h.partitions;
    return j;
}

Hierarchy hierarchy_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != kHierarchyFormat)
        throw ConfigError("not a " + std::string(kHierarchyFormat) + " document");
    Hierarchy h;
    h.num_scales = j.at("num_scales").get<int>();
    h.partitions = j.at("partitions").get<std::vector<std::vector<int>>>();
    if (static_cast<int>(h.partitions.size()) != h.num_scales)
        throw ConfigError("hierarchy partition count does not match num_scales");
    int n = 0;
    for (const auto& part : h.partitions) n += static_cast<int>(part.size());
    h.scale_of.assign(n, 0);
    for (int k = 0; k < h.num_scales; ++k)
        for (int id : h.partitions[k]) {
            if (id < 0 || id >= n || h.scale_of[id] != 0)
                throw ConfigError("hierarchy partitions are not a disjoint cover");
            h.scale_of[id] = k + 1;
        }
    return h;
}

void write_hierarchy(const std::string& path, const Hierarchy& h) {
    std::ofstream out(path);
    if (!out) throw MissingArtifactError("cannot open '" + path + "' for writing");
    out << hierarchy_to_json(h).dump(1) << "\n";
}

Hierarchy read_hierarchy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open hierarchy '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed hierarchy '" + path + "': " + e.what());
    }
    try {
        return hierarchy_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("hierarchy '" + path + "' is missing fields: " + e.what());
    }
}

}  // namespace sargen
