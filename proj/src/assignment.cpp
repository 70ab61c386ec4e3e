/// assignment.cpp - Kuhn-Munkres matching and successive-shortest-path flow.
#include "assignment.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace sargen {

std::vector<int> hungarian(const std::vector<double>& cost, int n) {
    if (n <= 0) throw ConfigError("hungarian: matrix side must be positive");
    if (cost.size() != static_cast<std::size_t>(n) * n)
        throw ConfigError("hungarian: cost matrix size mismatch");
    const double inf = std::numeric_limits<double>::infinity();

    // 1-indexed potentials; p[j] is the row matched to column j, p[0] is the
    // row currently being inserted.
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            const double* row = &cost[static_cast<std::size_t>(i0 - 1) * n];
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = row[j - 1] - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] +=
                        delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        // Augment along the alternating path back to the free column.
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> match(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        match[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return match;
}

namespace {

/// Successive shortest paths with Johnson potentials: Dijkstra runs on
/// reduced costs, which stay nonnegative up to rounding and are clamped at
/// zero, so every label pass terminates regardless of floating-point noise.
struct MinCostFlow {
    struct Arc {
        int to;
        std::int64_t cap;
        double cost;
        std::size_t rev;
    };

    explicit MinCostFlow(int n) : adj(static_cast<std::size_t>(n)) {}

    void add_edge(int a, int b, std::int64_t cap, double cost) {
        adj[static_cast<std::size_t>(a)].push_back(
            {b, cap, cost, adj[static_cast<std::size_t>(b)].size()});
        adj[static_cast<std::size_t>(b)].push_back(
            {a, 0, -cost, adj[static_cast<std::size_t>(a)].size() - 1});
    }

    double run(int s, int t, std::int64_t target_flow) {
        const double inf = std::numeric_limits<double>::infinity();
        const int n = static_cast<int>(adj.size());
        std::vector<double> potential(static_cast<std::size_t>(n), 0.0);
        double total_cost = 0.0;
        std::int64_t flow = 0;
        while (flow < target_flow) {
            std::vector<double> dist(static_cast<std::size_t>(n), inf);
            std::vector<int> prev_node(static_cast<std::size_t>(n), -1);
            std::vector<std::size_t> prev_arc(static_cast<std::size_t>(n), 0);
            std::vector<char> done(static_cast<std::size_t>(n), 0);
            using Item = std::pair<double, int>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
            dist[static_cast<std::size_t>(s)] = 0.0;
            heap.emplace(0.0, s);
            while (!heap.empty()) {
                const int a = heap.top().second;
                heap.pop();
                if (done[static_cast<std::size_t>(a)]) continue;
                done[static_cast<std::size_t>(a)] = 1;
                for (std::size_t e = 0; e < adj[static_cast<std::size_t>(a)].size();
                     ++e) {
                    const Arc& arc = adj[static_cast<std::size_t>(a)][e];
                    if (arc.cap <= 0 || done[static_cast<std::size_t>(arc.to)])
                        continue;
                    const double reduced =
                        std::max(arc.cost + potential[static_cast<std::size_t>(a)] -
                                     potential[static_cast<std::size_t>(arc.to)],
                                 0.0);
                    const double nd = dist[static_cast<std::size_t>(a)] + reduced;
                    if (nd < dist[static_cast<std::size_t>(arc.to)]) {
                        dist[static_cast<std::size_t>(arc.to)] = nd;
                        prev_node[static_cast<std::size_t>(arc.to)] = a;
                        prev_arc[static_cast<std::size_t>(arc.to)] = e;
                        heap.emplace(nd, arc.to);
                    }
                }
            }
            if (dist[static_cast<std::size_t>(t)] == inf)
                throw NumericalError("transport: flow network is infeasible");
            for (int a = 0; a < n; ++a)
                if (dist[static_cast<std::size_t>(a)] < inf)
                    potential[static_cast<std::size_t>(a)] +=
                        dist[static_cast<std::size_t>(a)];
            std::int64_t push = target_flow - flow;
            for (int a = t; a != s; a = prev_node[static_cast<std::size_t>(a)]) {
                const Arc& arc = adj[static_cast<std::size_t>(
                    prev_node[static_cast<std::size_t>(a)])]
                                     [prev_arc[static_cast<std::size_t>(a)]];
                push = std::min(push, arc.cap);
            }
            for (int a = t; a != s; a = prev_node[static_cast<std::size_t>(a)]) {
                Arc& arc = adj[static_cast<std::size_t>(
                    prev_node[static_cast<std::size_t>(a)])]
                               [prev_arc[static_cast<std::size_t>(a)]];
                arc.cap -= push;
                adj[static_cast<std::size_t>(a)][arc.rev].cap += push;
                total_cost += push * arc.cost;
            }
            flow += push;
        }
        return total_cost;
    }

    std::vector<std::vector<Arc>> adj;
};

}  // namespace

double transport_cost(const std::vector<double>& cost, int n_a, int n_b) {
    if (n_a <= 0 || n_b <= 0)
        throw ConfigError("transport: both supports must be nonempty");
    if (cost.size() != static_cast<std::size_t>(n_a) * n_b)
        throw ConfigError("transport: cost matrix size mismatch");

    if (n_a == n_b) {
        const std::vector<int> match = hungarian(cost, n_a);
        double total = 0.0;
        for (int i = 0; i < n_a; ++i)
            total += cost[static_cast<std::size_t>(i) * n_b + match[static_cast<std::size_t>(i)]];
        return total / n_a;
    }

    const std::int64_t g = std::gcd(n_a, n_b);
    const std::int64_t supply = n_b / g;  // per row
    const std::int64_t demand = n_a / g;  // per column
    const int source = n_a + n_b;
    const int sink = n_a + n_b + 1;
    MinCostFlow flow(n_a + n_b + 2);
    for (int i = 0; i < n_a; ++i) flow.add_edge(source, i, supply, 0.0);
    for (int j = 0; j < n_b; ++j) flow.add_edge(n_a + j, sink, demand, 0.0);
    for (int i = 0; i < n_a; ++i)
        for (int j = 0; j < n_b; ++j)
            flow.add_edge(i, n_a + j, supply,
                          cost[static_cast<std::size_t>(i) * n_b + j]);
    const std::int64_t units = static_cast<std::int64_t>(n_a) * n_b / g;
    const double total = flow.run(source, sink, units);
    return total * static_cast<double>(g) /
           (static_cast<double>(n_a) * static_cast<double>(n_b));
}

}  // namespace sargen
