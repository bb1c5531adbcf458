#pragma once

#include <vector>

#include <Eigen/Core>

namespace maskdet::train {

/// Minimum-cost assignment on a rectangular cost matrix. Returns, for every
/// row, the assigned column or -1 when the row is left unassigned (only
/// possible when rows > cols). Throws InvalidInput on non-finite costs.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Total cost of an assignment returned by solve_assignment.
double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col);

}  // namespace maskdet::train
