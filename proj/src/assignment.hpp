/// assignment.hpp - exact solvers for optimal matching and uniform-marginal
/// transport on dense cost matrices. Desk-scale sizes (a few hundred points
/// per side), no approximation.
#pragma once

#include <vector>

namespace sargen {

/// Minimum-cost perfect matching on an n x n cost matrix (row-major).
/// Kuhn-Munkres with row/column potentials, O(n^3). Returns the column
/// assigned to each row.
std::vector<int> hungarian(const std::vector<double>& cost, int n);

/// Optimal-transport cost between two uniform discrete distributions with
/// supports of size n_a and n_b and pairwise costs cost[i * n_b + j]. Returns
/// the plan-weighted mean cost (total plan mass 1). Balanced inputs reduce to
/// the matching above; otherwise an exact min-cost flow runs on integer
/// supplies n_b/g per row and n_a/g per column, g = gcd(n_a, n_b).
double transport_cost(const std::vector<double>& cost, int n_a, int n_b);

}  // namespace sargen
