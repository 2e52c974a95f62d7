#pragma once

#include <vector>

#include "msreid/numerics.hpp"

namespace msreid {

// Minimum-cost bipartite assignment of rows to columns.
// Rectangular inputs match min(rows, cols) pairs; unmatched entries are -1.
struct AssignmentResult {
    std::vector<int> row_to_col;
    std::vector<int> col_to_row;
    double total_cost = 0.0;
};

AssignmentResult linear_assignment(const Mat& cost);

}  // namespace msreid
