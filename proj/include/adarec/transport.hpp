#pragma once

#include <vector>

#include "adarec/tensor.hpp"

namespace adarec::distill {

// Optimal flow for one transportation instance. Row/column duals are kept
// so callers can re-verify optimality via complementary slackness.
struct TransportPlan {
    Tensor flow;  // N x K, nonnegative
    Tensor cost;  // N x K
    double work = 0.0;
    double total_flow = 0.0;
    std::vector<double> row_duals;
    std::vector<double> col_duals;

    // basis support as a stability fingerprint: arcs carrying flow > tol
    std::vector<std::pair<int, int>> support(double tol = 1e-12) const;
};

// Exact transportation simplex for min sum f.d subject to
//   f >= 0, row sums <= w_row, col sums <= w_col,
//   sum f = min(sum w_row, sum w_col).
// Unbalanced instances are handled with a zero-cost dummy node. The result
// is certified internally: feasibility within 1e-10 and reduced costs
// >= -1e-9 under the recovered duals, otherwise NumericError.
TransportPlan solve_transport(const std::vector<double>& w_row,
                              const std::vector<double>& w_col,
                              const Tensor& cost);

// Work normalized by total flow. Zero total flow is rejected.
double emd(const TransportPlan& plan);

}  // namespace adarec::distill
