#include "adarec/cost.hpp"

#include <algorithm>

#include "json.hpp"

namespace adarec::cost {

using nlohmann::json;
using search_space::all_ops;
using search_space::cell_edges;
using search_space::op_has_weights;
using search_space::op_kernel_size;
using search_space::op_name;

long long op_param_count(OpKind kind, int d) {
    if (d < 1) throw InputError("op_param_count: d must be >= 1");
    if (!op_has_weights(kind)) return 0;
    long long k = op_kernel_size(kind);
    return k * d * d + d;
}

long long op_flops(OpKind kind, int d, int t) {
    if (d < 1 || t < 1) throw InputError("op_flops: d and t must be >= 1");
    long long k = op_kernel_size(kind);
    switch (kind) {
        case OpKind::StdCnn3:
        case OpKind::StdCnn5:
        case OpKind::CauCnn3:
        case OpKind::CauCnn5:
            return 2 * k * d * d * t;  // multiply-add counted as 2
        case OpKind::MaxPool3:
        case OpKind::AvgPool3:
            return k * d * t;  // one comparison/add per window slot
        case OpKind::Skip:
        case OpKind::Zero:
            return 0;
    }
    throw InputError("bad op kind");
}

CostTable CostTable::build(int d, int t) {
    CostTable table;
    table.d = d;
    table.t = t;
    long long max_params = 0, max_flops = 0;
    for (OpKind kind : all_ops()) {
        auto idx = static_cast<size_t>(kind);
        table.raw_params[idx] = op_param_count(kind, d);
        table.raw_flops[idx] = op_flops(kind, d, t);
        max_params = std::max(max_params, table.raw_params[idx]);
        max_flops = std::max(max_flops, table.raw_flops[idx]);
    }
    for (OpKind kind : all_ops()) {
        auto idx = static_cast<size_t>(kind);
        table.norm_size[idx] =
            static_cast<double>(table.raw_params[idx]) / static_cast<double>(max_params);
        table.norm_flops[idx] =
            static_cast<double>(table.raw_flops[idx]) / static_cast<double>(max_flops);
    }
    return table;
}

std::string CostTable::to_json() const {
    json j;
    j["d"] = d;
    j["t"] = t;
    j["ops"] = json::array();
    for (OpKind kind : all_ops()) {
        auto idx = static_cast<size_t>(kind);
        j["ops"].push_back({{"op", op_name(kind)},
                            {"params", raw_params[idx]},
                            {"flops", raw_flops[idx]},
                            {"norm_size", norm_size[idx]},
                            {"norm_flops", norm_flops[idx]}});
    }
    return j.dump(2);
}

Var efficiency_loss(const CellSample& sample, const CostTable& table) {
    if (sample.edge_mix.empty()) throw InputError("efficiency_loss: empty sample");
    Tensor costs({kNumOps});
    for (OpKind kind : all_ops()) {
        costs.at(static_cast<int>(kind)) = table.edge_cost(kind);
    }
    Var cost_vec = constant(costs);
    std::vector<Var> per_edge;
    per_edge.reserve(sample.edge_mix.size());
    for (const auto& y : sample.edge_mix) {
        per_edge.push_back(dot(y, cost_vec));
    }
    return add_n(per_edge);
}

Var efficiency_loss(const ArchParams& arch, const CostTable& table, double tau,
                    Rng& rng) {
    return efficiency_loss(search_space::sample_cell(arch, tau, rng), table);
}

double discrete_efficiency_loss(const DiscreteCell& cell, const CostTable& table) {
    double acc = 0.0;
    for (OpKind kind : cell.edge_ops) acc += table.edge_cost(kind);
    return acc;
}

long long discrete_cell_params(const DiscreteCell& cell, int d) {
    long long acc = 0;
    for (OpKind kind : cell.edge_ops) acc += op_param_count(kind, d);
    return acc;
}

long long discrete_cell_flops(const DiscreteCell& cell, int d, int t) {
    long long acc = 0;
    for (OpKind kind : cell.edge_ops) acc += op_flops(kind, d, t);
    return acc;
}

}  // namespace adarec::cost
