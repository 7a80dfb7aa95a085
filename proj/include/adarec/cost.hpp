#pragma once

#include <array>
#include <string>

#include "adarec/graph.hpp"
#include "adarec/search_space.hpp"

namespace adarec::cost {

using search_space::ArchParams;
using search_space::CellSample;
using search_space::DiscreteCell;
using search_space::kNumOps;
using search_space::OpKind;

// conv k: k*d*d weights + d bias
long long op_param_count(OpKind kind, int d);
// conv k: 2*k*d*d*t (multiply-add = 2); pools: k*d*t comparisons/adds
long long op_flops(OpKind kind, int d, int t);

// Raw and normalized per-candidate costs. Normalization divides by the
// candidate-set maximum, so the largest entries are exactly 1 and the zero
// op is exactly 0.
struct CostTable {
    int d = 0;
    int t = 0;
    std::array<long long, kNumOps> raw_params{};
    std::array<long long, kNumOps> raw_flops{};
    std::array<double, kNumOps> norm_size{};
    std::array<double, kNumOps> norm_flops{};

    static CostTable build(int d, int t);

    double edge_cost(OpKind kind) const {
        return norm_size[static_cast<size_t>(kind)] +
               norm_flops[static_cast<size_t>(kind)];
    }

    std::string to_json() const;
};

// Expected normalized cost per edge under the shared Gumbel sample,
// summed over edges; differentiable in theta through the sample.
Var efficiency_loss(const CellSample& sample, const CostTable& table);

// Convenience overload matching the soft/straight-through call shape.
Var efficiency_loss(const ArchParams& arch, const CostTable& table, double tau,
                    Rng& rng);

// Exact cost of a derived cell: sum over edges of normalized size + flops.
double discrete_efficiency_loss(const DiscreteCell& cell, const CostTable& table);

// Per-block raw parameter count of a derived cell (conv kernels + biases).
long long discrete_cell_params(const DiscreteCell& cell, int d);
long long discrete_cell_flops(const DiscreteCell& cell, int d, int t);

}  // namespace adarec::cost
