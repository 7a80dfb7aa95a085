#include "adarec/transport.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

namespace adarec::distill {

namespace {

constexpr double kPivotTol = 1e-12;
constexpr double kOptTol = 1e-9;
constexpr double kFeasTol = 1e-10;

// Balanced transportation simplex over n supplies and m demands.
// Basis is maintained as a spanning tree of the bipartite supply/demand
// graph; pivots follow Bland's rule so degenerate instances terminate.
class Simplex {
public:
    Simplex(std::vector<double> supply, std::vector<double> demand,
            const std::vector<double>& cost, int n, int m)
        : n_(n), m_(m), supply_(std::move(supply)), demand_(std::move(demand)),
          cost_(cost), flow_(static_cast<size_t>(n) * m, 0.0),
          in_basis_(static_cast<size_t>(n) * m, false) {}

    void solve() {
        northwest_corner();
        const int max_pivots = 50000;
        for (int iter = 0; iter < max_pivots; ++iter) {
            compute_duals();
            int ei = -1, ej = -1;
            for (int i = 0; i < n_ && ei < 0; ++i) {
                for (int j = 0; j < m_; ++j) {
                    if (in_basis_[idx(i, j)]) continue;
                    double r = cost_[idx(i, j)] - u_[static_cast<size_t>(i)] -
                               v_[static_cast<size_t>(j)];
                    if (r < -kPivotTol) {
                        ei = i;
                        ej = j;
                        break;
                    }
                }
            }
            if (ei < 0) return;  // optimal
            pivot(ei, ej);
        }
        throw NumericError("transport solver failed to converge");
    }

    double flow_at(int i, int j) const { return flow_[idx(i, j)]; }
    double dual_u(int i) const { return u_[static_cast<size_t>(i)]; }
    double dual_v(int j) const { return v_[static_cast<size_t>(j)]; }

private:
    size_t idx(int i, int j) const { return static_cast<size_t>(i) * m_ + j; }

    void northwest_corner() {
        std::vector<double> a = supply_;
        std::vector<double> b = demand_;
        int i = 0, j = 0;
        int added = 0;
        while (true) {
            in_basis_[idx(i, j)] = true;
            ++added;
            double f = std::min(a[static_cast<size_t>(i)], b[static_cast<size_t>(j)]);
            flow_[idx(i, j)] = f;
            a[static_cast<size_t>(i)] -= f;
            b[static_cast<size_t>(j)] -= f;
            bool row_done = a[static_cast<size_t>(i)] <= 0.0;
            bool col_done = b[static_cast<size_t>(j)] <= 0.0;
            if (i == n_ - 1 && j == m_ - 1) break;
            if (row_done && col_done) {
                // degenerate step: advance one side only, next cell is a
                // zero-flow basis member
                if (i < n_ - 1) ++i;
                else ++j;
            } else if (row_done) {
                ++i;
            } else {
                ++j;
            }
        }
        if (added != n_ + m_ - 1) {
            throw NumericError("transport: initial basis has wrong size");
        }
    }

    // Solve u_i + v_j = c_ij over basis arcs by BFS from supply node 0.
    void compute_duals() {
        u_.assign(static_cast<size_t>(n_), 0.0);
        v_.assign(static_cast<size_t>(m_), 0.0);
        std::vector<bool> useen(static_cast<size_t>(n_), false);
        std::vector<bool> vseen(static_cast<size_t>(m_), false);
        std::queue<int> q;  // 0..n-1 supply, n..n+m-1 demand
        useen[0] = true;
        q.push(0);
        while (!q.empty()) {
            int node = q.front();
            q.pop();
            if (node < n_) {
                for (int j = 0; j < m_; ++j) {
                    if (in_basis_[idx(node, j)] && !vseen[static_cast<size_t>(j)]) {
                        v_[static_cast<size_t>(j)] =
                            cost_[idx(node, j)] - u_[static_cast<size_t>(node)];
                        vseen[static_cast<size_t>(j)] = true;
                        q.push(n_ + j);
                    }
                }
            } else {
                int j = node - n_;
                for (int i = 0; i < n_; ++i) {
                    if (in_basis_[idx(i, j)] && !useen[static_cast<size_t>(i)]) {
                        u_[static_cast<size_t>(i)] =
                            cost_[idx(i, j)] - v_[static_cast<size_t>(j)];
                        useen[static_cast<size_t>(i)] = true;
                        q.push(i);
                    }
                }
            }
        }
        for (bool s : useen)
            if (!s) throw NumericError("transport: basis is not a spanning tree");
        for (bool s : vseen)
            if (!s) throw NumericError("transport: basis is not a spanning tree");
    }

    // Unique tree path from supply ei to demand ej, then alternate +/-
    // around the cycle starting with + on the entering arc.
    void pivot(int ei, int ej) {
        int total = n_ + m_;
        std::vector<int> parent(static_cast<size_t>(total), -1);
        std::vector<bool> seen(static_cast<size_t>(total), false);
        std::queue<int> q;
        seen[static_cast<size_t>(ei)] = true;
        q.push(ei);
        while (!q.empty()) {
            int node = q.front();
            q.pop();
            if (node == n_ + ej) break;
            if (node < n_) {
                for (int j = 0; j < m_; ++j) {
                    int nxt = n_ + j;
                    if (in_basis_[idx(node, j)] && !seen[static_cast<size_t>(nxt)]) {
                        seen[static_cast<size_t>(nxt)] = true;
                        parent[static_cast<size_t>(nxt)] = node;
                        q.push(nxt);
                    }
                }
            } else {
                int j = node - n_;
                for (int i = 0; i < n_; ++i) {
                    if (in_basis_[idx(i, j)] && !seen[static_cast<size_t>(i)]) {
                        seen[static_cast<size_t>(i)] = true;
                        parent[static_cast<size_t>(i)] = node;
                        q.push(i);
                    }
                }
            }
        }
        if (!seen[static_cast<size_t>(n_ + ej)]) {
            throw NumericError("transport: entering arc closes no cycle");
        }

        // path nodes from demand ej back to supply ei
        std::vector<int> path;
        for (int node = n_ + ej; node != -1; node = parent[static_cast<size_t>(node)]) {
            path.push_back(node);
        }
        std::reverse(path.begin(), path.end());  // ei ... n_+ej

        // cycle arcs: entering (ei,ej) is +; walking the path from ei to ej
        // alternates - , + , - ...
        struct Arc {
            int i, j;
            bool plus;
        };
        std::vector<Arc> cycle;
        bool plus = false;
        for (size_t s = 0; s + 1 < path.size(); ++s) {
            int a = path[s], b = path[s + 1];
            int i = a < n_ ? a : b;
            int j = a < n_ ? b - n_ : a - n_;
            cycle.push_back({i, j, plus});
            plus = !plus;
        }

        double theta = 1e300;
        int leave = -1;
        for (size_t s = 0; s < cycle.size(); ++s) {
            if (cycle[s].plus) continue;
            double f = flow_[idx(cycle[s].i, cycle[s].j)];
            if (f < theta - kPivotTol ||
                (std::abs(f - theta) <= kPivotTol && leave >= 0 &&
                 idx(cycle[s].i, cycle[s].j) < idx(cycle[static_cast<size_t>(leave)].i,
                                                   cycle[static_cast<size_t>(leave)].j))) {
                theta = f;
                leave = static_cast<int>(s);
            }
        }
        if (leave < 0) throw NumericError("transport: unbounded pivot");

        flow_[idx(ei, ej)] = 0.0;
        in_basis_[idx(ei, ej)] = true;
        for (const auto& arc : cycle) {
            double& f = flow_[idx(arc.i, arc.j)];
            f += arc.plus ? theta : -theta;
            if (f < 0.0) f = 0.0;  // clamp pivot noise
        }
        flow_[idx(ei, ej)] += theta;
        const Arc& out = cycle[static_cast<size_t>(leave)];
        in_basis_[idx(out.i, out.j)] = false;
        flow_[idx(out.i, out.j)] = 0.0;
    }

    int n_, m_;
    std::vector<double> supply_, demand_;
    std::vector<double> cost_;
    std::vector<double> flow_;
    std::vector<bool> in_basis_;
    std::vector<double> u_, v_;
};

}  // namespace

std::vector<std::pair<int, int>> TransportPlan::support(double tol) const {
    std::vector<std::pair<int, int>> s;
    int n = flow.dim(0), k = flow.dim(1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            if (flow.at(i, j) > tol) s.push_back({i, j});
    return s;
}

TransportPlan solve_transport(const std::vector<double>& w_row,
                              const std::vector<double>& w_col,
                              const Tensor& cost) {
    int n = static_cast<int>(w_row.size());
    int k = static_cast<int>(w_col.size());
    if (n == 0 || k == 0 || cost.rank() != 2 || cost.dim(0) != n || cost.dim(1) != k) {
        throw ShapeError("solve_transport: cost must be " + std::to_string(n) + "x" +
                         std::to_string(k) + ", got " + cost.shape_str());
    }
    cost.ensure_finite("transport cost");
    double sum_row = 0.0, sum_col = 0.0;
    for (double w : w_row) {
        if (w < 0.0) throw NumericError("solve_transport: negative row weight");
        sum_row += w;
    }
    for (double w : w_col) {
        if (w < 0.0) throw NumericError("solve_transport: negative column weight");
        sum_col += w;
    }
    if (sum_row <= 0.0 || sum_col <= 0.0) {
        throw NumericError("solve_transport: all-zero weight vector");
    }

    // balance with a zero-cost dummy on the smaller-mass side's counterpart
    double diff = sum_row - sum_col;
    bool dummy_col = diff > 1e-12;
    bool dummy_row = diff < -1e-12;
    int nn = n + (dummy_row ? 1 : 0);
    int mm = k + (dummy_col ? 1 : 0);

    std::vector<double> supply(w_row);
    std::vector<double> demand(w_col);
    if (dummy_col) demand.push_back(diff);
    if (dummy_row) supply.push_back(-diff);

    std::vector<double> c(static_cast<size_t>(nn) * mm, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            c[static_cast<size_t>(i) * mm + j] = cost.at(i, j);

    Simplex simplex(supply, demand, c, nn, mm);
    simplex.solve();

    TransportPlan plan;
    plan.cost = cost;
    plan.flow = Tensor({n, k});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
            double f = simplex.flow_at(i, j);
            plan.flow.at(i, j) = f;
            plan.work += f * cost.at(i, j);
            plan.total_flow += f;
        }
    plan.row_duals.resize(static_cast<size_t>(n));
    plan.col_duals.resize(static_cast<size_t>(k));
    for (int i = 0; i < n; ++i) plan.row_duals[static_cast<size_t>(i)] = simplex.dual_u(i);
    for (int j = 0; j < k; ++j) plan.col_duals[static_cast<size_t>(j)] = simplex.dual_v(j);

    // certify the returned plan before handing it out
    double expect_total = std::min(sum_row, sum_col);
    if (std::abs(plan.total_flow - expect_total) > kFeasTol) {
        throw NumericError("transport: total flow violates its mass constraint");
    }
    for (int i = 0; i < n; ++i) {
        double rs = 0.0;
        for (int j = 0; j < k; ++j) {
            if (plan.flow.at(i, j) < -kFeasTol) {
                throw NumericError("transport: negative flow");
            }
            rs += plan.flow.at(i, j);
        }
        if (rs > w_row[static_cast<size_t>(i)] + kFeasTol) {
            throw NumericError("transport: row capacity violated");
        }
    }
    for (int j = 0; j < k; ++j) {
        double cs = 0.0;
        for (int i = 0; i < n; ++i) cs += plan.flow.at(i, j);
        if (cs > w_col[static_cast<size_t>(j)] + kFeasTol) {
            throw NumericError("transport: column capacity violated");
        }
    }
    // complementary slackness on the real arcs. With a dummy node the real
    // duals remain valid for the extended problem restricted to real arcs.
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            double r = cost.at(i, j) - plan.row_duals[static_cast<size_t>(i)] -
                       plan.col_duals[static_cast<size_t>(j)];
            if (r < -kOptTol) {
                throw NumericError("transport: dual feasibility violated");
            }
            if (plan.flow.at(i, j) > 1e-9 && std::abs(r) > kOptTol) {
                throw NumericError("transport: complementary slackness violated");
            }
        }
    }
    return plan;
}

double emd(const TransportPlan& plan) {
    if (plan.total_flow <= 0.0) {
        throw NumericError("emd: zero total flow");
    }
    return plan.work / plan.total_flow;
}

}  // namespace adarec::distill
