/// hierarchy.hpp - coarse-to-fine node hierarchies over mesh graphs.
#pragma once

#include <utility>
#include <vector>

#include "json.hpp"
#include "meshgraph.hpp"

namespace sargen {

/// Greedy maximal-independent-set coarsening sweep. Nodes are visited in
/// ascending index order; a still-unmasked node is kept and all of its
/// unmasked in-neighbors are dropped. Returns the kept node indices,
/// ascending. The kept set is independent and dominating in the input graph.
std::vector<int> guillard_mask(const std::vector<std::pair<int, int>>& edges,
                               int num_nodes);

/// Edges of the coarsened graph: two kept nodes are connected iff they are
/// within two hops of each other in the current-level graph. Indices are in
/// the current level's node numbering; callers re-map to the compact
/// next-level numbering. Returned undirected, (a, b) with a < b, sorted.
std::vector<std::pair<int, int>> coarsen_edges(
    const std::vector<std::pair<int, int>>& edges, int num_nodes,
    const std::vector<int>& kept);

/// K-scale partition of a graph's nodes. Scale 1 is the coarsest: the nodes
/// that survive every coarsening sweep. Scale K holds the nodes dropped by
/// the very first sweep. partitions[k-1] lists original node ids, ascending.
struct Hierarchy {
    int num_scales = 0;
    std::vector<std::vector<int>> partitions;  // [K][...], original node ids
    std::vector<int> scale_of;                 // [num_nodes], 1-based scale

    /// Original node ids of scales 1..k concatenated scale-major, each
    /// scale's block ascending. prefix(K) covers every node.
    std::vector<int> prefix(int k) const;
};

/// Applies guillard_mask K-1 times, then re-labels so that scale 1 is the
/// final (coarsest) survivor set. Throws NumericalError if any scale ends
/// up empty (the graph ran out of nodes before K levels).
Hierarchy build_hierarchy(const MeshGraph& graph, int num_scales);

/// One-hot row per node over scales, [num_nodes, num_scales] row-major.
std::vector<double> scale_onehot(const Hierarchy& h);

nlohmann::json hierarchy_to_json(const Hierarchy& h);
Hierarchy hierarchy_from_json(const nlohmann::json& j);
void write_hierarchy(const std::string& path, const Hierarchy& h);
Hierarchy read_hierarchy(const std::string& path);

}  // namespace sargen
