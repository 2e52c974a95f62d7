#include "msreid/assignment.hpp"

#include <algorithm>
#include <limits>

namespace msreid {

// Kuhn-Munkres with potentials, O(n^3). Rectangular matrices are padded to
// square with zero-cost dummy entries; dummy pairings are stripped at the end,
// which leaves exactly min(rows, cols) real pairs.
AssignmentResult linear_assignment(const Mat& cost) {
    const int rows = static_cast<int>(cost.rows);
    const int cols = static_cast<int>(cost.cols);
    if (rows == 0 || cols == 0) throw ShapeError("linear_assignment: empty cost matrix");
    const int n = std::max(rows, cols);
    constexpr double kInf = std::numeric_limits<double>::infinity();

    auto c = [&](int i, int j) -> double {
        if (i < rows && j < cols) return cost.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        return 0.0;  // dummy padding
    };

    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    AssignmentResult res;
    res.row_to_col.assign(static_cast<std::size_t>(rows), -1);
    res.col_to_row.assign(static_cast<std::size_t>(cols), -1);
    for (int j = 1; j <= n; ++j) {
        const int i = p[j] - 1;
        const int col = j - 1;
        if (i < rows && col < cols) {
            res.row_to_col[static_cast<std::size_t>(i)] = col;
            res.col_to_row[static_cast<std::size_t>(col)] = i;
            res.total_cost += cost.at(static_cast<std::size_t>(i), static_cast<std::size_t>(col));
        }
    }
    return res;
}

}  // namespace msreid
