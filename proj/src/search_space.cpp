#include "adarec/search_space.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace adarec::search_space {

using nlohmann::json;

const std::array<OpKind, kNumOps>& all_ops() {
    static const std::array<OpKind, kNumOps> ops = {
        OpKind::StdCnn3, OpKind::StdCnn5,  OpKind::CauCnn3, OpKind::CauCnn5,
        OpKind::MaxPool3, OpKind::AvgPool3, OpKind::Skip,    OpKind::Zero};
    return ops;
}

std::string op_name(OpKind kind) {
    switch (kind) {
        case OpKind::StdCnn3: return "std_cnn_3";
        case OpKind::StdCnn5: return "std_cnn_5";
        case OpKind::CauCnn3: return "cau_cnn_3";
        case OpKind::CauCnn5: return "cau_cnn_5";
        case OpKind::MaxPool3: return "max_pool_3";
        case OpKind::AvgPool3: return "avg_pool_3";
        case OpKind::Skip: return "skip";
        case OpKind::Zero: return "zero";
    }
    throw InputError("bad op kind");
}

OpKind op_from_name(const std::string& name) {
    for (OpKind k : all_ops()) {
        if (op_name(k) == name) return k;
    }
    throw InputError("unknown candidate op: " + name);
}

bool op_has_weights(OpKind kind) {
    switch (kind) {
        case OpKind::StdCnn3:
        case OpKind::StdCnn5:
        case OpKind::CauCnn3:
        case OpKind::CauCnn5:
            return true;
        default:
            return false;
    }
}

int op_kernel_size(OpKind kind) {
    switch (kind) {
        case OpKind::StdCnn3:
        case OpKind::CauCnn3:
        case OpKind::MaxPool3:
        case OpKind::AvgPool3:
            return 3;
        case OpKind::StdCnn5:
        case OpKind::CauCnn5:
            return 5;
        default:
            return 0;
    }
}

std::vector<std::pair<int, int>> cell_edges(int m) {
    std::vector<std::pair<int, int>> edges;
    for (int j = 1; j <= m; ++j)
        for (int i = 0; i < j; ++i) edges.push_back({i, j});
    return edges;
}

ArchParams ArchParams::init(int m) {
    if (m < 1) throw InputError("cell needs at least one intermediate node");
    ArchParams a;
    a.m = m;
    for (size_t e = 0; e < cell_edges(m).size(); ++e) {
        a.theta.push_back(param(Tensor::zeros({kNumOps})));
    }
    a.attn = param(Tensor::zeros({m}));
    return a;
}

std::string ArchParams::to_json() const {
    json j;
    j["m"] = m;
    j["theta"] = json::array();
    for (const auto& t : theta) j["theta"].push_back(t->value.data);
    j["attn"] = attn->value.data;
    return j.dump(2);
}

ArchParams ArchParams::from_json(const std::string& text) {
    json j = json::parse(text);
    ArchParams a = init(j.at("m").get<int>());
    auto thetas = j.at("theta");
    if (thetas.size() != a.theta.size()) {
        throw InputError("arch params edge count mismatch");
    }
    for (size_t e = 0; e < a.theta.size(); ++e) {
        auto vals = thetas[e].get<std::vector<double>>();
        if (vals.size() != kNumOps) throw InputError("arch params logit width mismatch");
        a.theta[e]->value.data = vals;
    }
    a.attn->value.data = j.at("attn").get<std::vector<double>>();
    return a;
}

Var gumbel_softmax(const Var& theta, double tau, Rng& rng) {
    if (tau <= 0.0) throw NumericError("gumbel_softmax: tau must be > 0");
    Tensor noise = Tensor::zeros(theta->value.shape);
    for (auto& g : noise.data) g = rng.gumbel();
    return softmax(scale(add(theta, constant(noise)), 1.0 / tau));
}

EdgeWeights EdgeWeights::init(int d, Rng& rng) {
    EdgeWeights w;
    w.kernels.resize(kNumOps);
    w.biases.resize(kNumOps);
    for (OpKind kind : all_ops()) {
        if (!op_has_weights(kind)) continue;
        int k = op_kernel_size(kind);
        double std = std::sqrt(2.0 / (k * d));
        Tensor kernel({k, d, d});
        for (auto& v : kernel.data) v = std * rng.normal();
        w.kernels[static_cast<size_t>(kind)] = param(kernel);
        w.biases[static_cast<size_t>(kind)] = param(Tensor::zeros({d}));
    }
    return w;
}

std::vector<Var> EdgeWeights::params() const {
    std::vector<Var> out;
    for (OpKind kind : all_ops()) {
        if (!op_has_weights(kind)) continue;
        const Var& k = kernels[static_cast<size_t>(kind)];
        if (!k) continue;  // discrete blocks only allocate the chosen op
        out.push_back(k);
        out.push_back(biases[static_cast<size_t>(kind)]);
    }
    return out;
}

BlockWeights BlockWeights::init(int m, int d, int block_index, Rng& rng) {
    BlockWeights w;
    // stacked blocks cover dilations 1,2,4,8 for the causal candidates
    w.dilation = 1 << (block_index % 4);
    for (size_t e = 0; e < cell_edges(m).size(); ++e) {
        w.edges.push_back(EdgeWeights::init(d, rng));
    }
    return w;
}

std::vector<Var> BlockWeights::params() const {
    std::vector<Var> out;
    for (const auto& e : edges) {
        auto p = e.params();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

Var candidate_op_forward(OpKind kind, const Var& x, const EdgeWeights& w,
                         int dilation) {
    if (op_has_weights(kind) && !w.kernels[static_cast<size_t>(kind)]) {
        throw InputError("candidate op has no weights allocated: " + op_name(kind));
    }
    switch (kind) {
        case OpKind::StdCnn3:
        case OpKind::StdCnn5:
            return conv1d_same(x, w.kernels[static_cast<size_t>(kind)],
                               w.biases[static_cast<size_t>(kind)]);
        case OpKind::CauCnn3:
        case OpKind::CauCnn5:
            return causal_dilated_conv1d(x, w.kernels[static_cast<size_t>(kind)],
                                         w.biases[static_cast<size_t>(kind)], dilation);
        case OpKind::MaxPool3:
            return max_pool1d(x, 3);
        case OpKind::AvgPool3:
            return avg_pool1d(x, 3);
        case OpKind::Skip:
            return x;
        case OpKind::Zero:
            return constant(Tensor::zeros(x->value.shape));
    }
    throw InputError("bad op kind");
}

CellSample sample_cell(const ArchParams& arch, double tau, Rng& rng) {
    CellSample s;
    for (const auto& theta : arch.theta) {
        s.edge_mix.push_back(gumbel_softmax(theta, tau, rng));
    }
    return s;
}

Var cell_forward(const Var& x, const ArchParams& arch, const BlockWeights& w,
                 CellMode mode, const CellSample& sample) {
    if (mode == CellMode::Discrete) {
        return discrete_cell_forward(x, derive_architecture(arch), w);
    }
    auto edges = cell_edges(arch.m);
    if (w.edges.size() != edges.size() || sample.edge_mix.size() != edges.size()) {
        throw ShapeError("cell_forward: edge count mismatch");
    }

    std::vector<Var> nodes(static_cast<size_t>(arch.m) + 1);
    nodes[0] = x;
    for (int j = 1; j <= arch.m; ++j) {
        std::vector<Var> incoming;
        for (size_t e = 0; e < edges.size(); ++e) {
            if (edges[e].second != j) continue;
            const Var& h = nodes[static_cast<size_t>(edges[e].first)];
            std::vector<Var> outs;
            outs.reserve(kNumOps);
            for (OpKind kind : all_ops()) {
                outs.push_back(candidate_op_forward(kind, h, w.edges[e], w.dilation));
            }
            Var mix_w = mode == CellMode::StraightThrough
                            ? straight_through(sample.edge_mix[e])
                            : sample.edge_mix[e];
            incoming.push_back(weighted_sum(outs, mix_w));
        }
        nodes[static_cast<size_t>(j)] = add_n(incoming);
    }

    std::vector<Var> inner(nodes.begin() + 1, nodes.end());
    return weighted_sum(inner, softmax(arch.attn));
}

Var cell_forward(const Var& x, const ArchParams& arch, const BlockWeights& w,
                 CellMode mode, double tau, Rng& rng) {
    if (mode == CellMode::Discrete) {
        return discrete_cell_forward(x, derive_architecture(arch), w);
    }
    return cell_forward(x, arch, w, mode, sample_cell(arch, tau, rng));
}

DiscreteCell derive_architecture(const ArchParams& arch) {
    DiscreteCell cell;
    cell.m = arch.m;
    for (const auto& theta : arch.theta) {
        int best = 0;
        for (int i = 1; i < kNumOps; ++i) {
            if (theta->value.at(i) > theta->value.at(best)) best = i;
        }
        cell.edge_ops.push_back(static_cast<OpKind>(best));
    }
    Var w = softmax(constant(arch.attn->value));
    cell.attn_weights = w->value.data;
    return cell;
}

Var discrete_cell_forward(const Var& x, const DiscreteCell& cell,
                          const BlockWeights& w) {
    auto edges = cell_edges(cell.m);
    if (w.edges.size() != edges.size() || cell.edge_ops.size() != edges.size()) {
        throw ShapeError("discrete_cell_forward: edge count mismatch");
    }
    std::vector<Var> nodes(static_cast<size_t>(cell.m) + 1);
    nodes[0] = x;
    for (int j = 1; j <= cell.m; ++j) {
        std::vector<Var> incoming;
        for (size_t e = 0; e < edges.size(); ++e) {
            if (edges[e].second != j) continue;
            const Var& h = nodes[static_cast<size_t>(edges[e].first)];
            incoming.push_back(
                candidate_op_forward(cell.edge_ops[e], h, w.edges[e], w.dilation));
        }
        nodes[static_cast<size_t>(j)] = add_n(incoming);
    }
    std::vector<Var> inner(nodes.begin() + 1, nodes.end());
    return weighted_sum(inner, constant(Tensor::vec(cell.attn_weights)));
}

std::string DiscreteCell::to_json() const {
    json j;
    j["m"] = m;
    j["edges"] = json::array();
    auto edges = cell_edges(m);
    for (size_t e = 0; e < edges.size(); ++e) {
        j["edges"].push_back({{"from", edges[e].first},
                              {"to", edges[e].second},
                              {"op", op_name(edge_ops[e])}});
    }
    j["attention"] = attn_weights;
    return j.dump(2);
}

DiscreteCell DiscreteCell::from_json(const std::string& text) {
    json j = json::parse(text);
    DiscreteCell cell;
    cell.m = j.at("m").get<int>();
    auto edges = cell_edges(cell.m);
    auto jedges = j.at("edges");
    if (jedges.size() != edges.size()) {
        throw InputError("cell json has wrong edge count");
    }
    for (size_t e = 0; e < edges.size(); ++e) {
        if (jedges[e].at("from").get<int>() != edges[e].first ||
            jedges[e].at("to").get<int>() != edges[e].second) {
            throw InputError("cell json edges out of canonical order");
        }
        cell.edge_ops.push_back(op_from_name(jedges[e].at("op").get<std::string>()));
    }
    cell.attn_weights = j.at("attention").get<std::vector<double>>();
    if (cell.attn_weights.size() != static_cast<size_t>(cell.m)) {
        throw InputError("cell json attention width mismatch");
    }
    return cell;
}

std::string DiscreteCell::to_dot() const {
    std::ostringstream out;
    out << "digraph cell {\n";
    out << "  rankdir=LR;\n";
    out << "  node [shape=box, style=rounded];\n";
    out << "  n0 [label=\"input\"];\n";
    for (int j = 1; j <= m; ++j) out << "  n" << j << " [label=\"node " << j << "\"];\n";
    out << "  out [label=\"output\", shape=ellipse];\n";
    auto edges = cell_edges(m);
    for (size_t e = 0; e < edges.size(); ++e) {
        if (edge_ops[e] == OpKind::Zero) continue;  // zero edges carry nothing
        out << "  n" << edges[e].first << " -> n" << edges[e].second << " [label=\""
            << op_name(edge_ops[e]) << "\"];\n";
    }
    for (int j = 1; j <= m; ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", attn_weights[static_cast<size_t>(j - 1)]);
        out << "  n" << j << " -> out [style=dashed, label=\"" << buf << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace adarec::search_space
