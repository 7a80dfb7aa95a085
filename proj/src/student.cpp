#include "adarec/student.hpp"

#include <cmath>

#include "json.hpp"

namespace adarec::student {

using nlohmann::json;
using search_space::all_ops;
using search_space::cell_edges;
using search_space::EdgeWeights;
using search_space::kNumOps;
using search_space::op_has_weights;
using search_space::op_kernel_size;
using search_space::op_name;
using search_space::OpKind;

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, double std) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = std * rng.normal();
    return t;
}

std::vector<double> padding_mask(const std::vector<int>& items) {
    std::vector<double> m(items.size());
    for (size_t i = 0; i < items.size(); ++i) m[i] = items[i] == 0 ? 0.0 : 1.0;
    return m;
}

// Weights for one block when the structure is fixed: only chosen conv ops
// allocate kernels, and an edge can appear with several conv kinds only in
// the supernet.
BlockWeights init_discrete_block(const DiscreteCell& cell, int d, int block_index,
                                 Rng& rng) {
    BlockWeights w;
    w.dilation = 1 << (block_index % 4);
    auto edges = cell_edges(cell.m);
    for (size_t e = 0; e < edges.size(); ++e) {
        EdgeWeights ew;
        ew.kernels.resize(kNumOps);
        ew.biases.resize(kNumOps);
        OpKind kind = cell.edge_ops[e];
        if (op_has_weights(kind)) {
            int k = op_kernel_size(kind);
            double std = std::sqrt(2.0 / (k * d));
            ew.kernels[static_cast<size_t>(kind)] = param(randn(rng, {k, d, d}, std));
            ew.biases[static_cast<size_t>(kind)] = param(Tensor::zeros({d}));
        }
        w.edges.push_back(std::move(ew));
    }
    return w;
}

}  // namespace

StudentModel StudentModel::init_supernet(const StudentConfig& cfg, int vocab_size) {
    if (vocab_size < 1) throw InputError("student needs a nonempty vocabulary");
    StudentModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    Rng rng(derive_seed(cfg.seed, 0x57d3));
    int d = cfg.embed_dim;
    m.embedding = param(randn(rng, {vocab_size + 1, d}, 0.1));
    for (int j = 0; j < d; ++j) m.embedding->value.at(0, j) = 0.0;
    for (int b = 0; b < cfg.blocks; ++b) {
        m.block_weights.push_back(BlockWeights::init(cfg.m, d, b, rng));
        m.lambdas.push_back(param(Tensor::scalar(0.0)));
    }
    m.head_w = param(randn(rng, {vocab_size + 1, d}, 0.1));
    m.head_b = param(Tensor::zeros({vocab_size + 1}));
    return m;
}

StudentModel StudentModel::init_discrete(const StudentConfig& cfg, int vocab_size,
                                         const DiscreteCell& cell) {
    if (vocab_size < 1) throw InputError("student needs a nonempty vocabulary");
    if (cell.m != cfg.m) throw InputError("cell and config disagree on M");
    StudentModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    m.cell = cell;
    Rng rng(derive_seed(cfg.seed, 0x57d3));
    int d = cfg.embed_dim;
    m.embedding = param(randn(rng, {vocab_size + 1, d}, 0.1));
    for (int j = 0; j < d; ++j) m.embedding->value.at(0, j) = 0.0;
    for (int b = 0; b < cfg.blocks; ++b) {
        m.block_weights.push_back(init_discrete_block(cell, d, b, rng));
        m.lambdas.push_back(param(Tensor::scalar(0.0)));
    }
    m.head_w = param(randn(rng, {vocab_size + 1, d}, 0.1));
    m.head_b = param(Tensor::zeros({vocab_size + 1}));
    return m;
}

StudentModel::ForwardResult StudentModel::forward_supernet(
    const std::vector<int>& items, const ArchParams& arch, CellMode mode,
    const CellSample& sample) const {
    ForwardResult res;
    auto mask = padding_mask(items);
    Var h = embedding_gather(embedding, items);
    for (size_t b = 0; b < block_weights.size(); ++b) {
        Var cell_out = cell_forward(h, arch, block_weights[b], mode, sample);
        h = add(scale_by(cell_out, lambdas[b]), h);
        h = mask_rows(h, mask);
        res.hidden_layers.push_back(h);
    }
    res.last_hidden = h;
    res.logits = add(matmul_nt(h, head_w), head_b);
    res.probs = softmax(res.logits);
    return res;
}

StudentModel::ForwardResult StudentModel::forward_discrete(
    const std::vector<int>& items) const {
    if (!cell) throw InputError("student has no fixed cell structure");
    ForwardResult res;
    auto mask = padding_mask(items);
    Var h = embedding_gather(embedding, items);
    for (size_t b = 0; b < block_weights.size(); ++b) {
        Var cell_out = discrete_cell_forward(h, *cell, block_weights[b]);
        h = add(scale_by(cell_out, lambdas[b]), h);
        h = mask_rows(h, mask);
        res.hidden_layers.push_back(h);
    }
    res.last_hidden = h;
    res.logits = add(matmul_nt(h, head_w), head_b);
    res.probs = softmax(res.logits);
    return res;
}

std::vector<Var> StudentModel::params() const {
    std::vector<Var> out{embedding};
    for (size_t b = 0; b < block_weights.size(); ++b) {
        auto p = block_weights[b].params();
        out.insert(out.end(), p.begin(), p.end());
        out.push_back(lambdas[b]);
    }
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
}

long long StudentModel::param_count() const {
    long long n = 0;
    for (const auto& p : params()) n += p->value.numel();
    return n;
}

Checkpoint StudentModel::to_checkpoint() const {
    Checkpoint ckpt;
    json meta;
    meta["kind"] = "student";
    meta["embed_dim"] = cfg.embed_dim;
    meta["blocks"] = cfg.blocks;
    meta["m"] = cfg.m;
    meta["seed"] = cfg.seed;
    meta["vocab_size"] = vocab_size;
    meta["cell"] = cell ? json::parse(cell->to_json()) : json();
    ckpt.meta_json = meta.dump();

    ckpt.tensors.emplace_back("embedding", embedding->value);
    for (size_t b = 0; b < block_weights.size(); ++b) {
        std::string prefix = "block" + std::to_string(b) + ".";
        const auto& bw = block_weights[b];
        for (size_t e = 0; e < bw.edges.size(); ++e) {
            for (OpKind kind : all_ops()) {
                const Var& k = bw.edges[e].kernels[static_cast<size_t>(kind)];
                if (!k) continue;
                std::string base =
                    prefix + "edge" + std::to_string(e) + "." + op_name(kind);
                ckpt.tensors.emplace_back(base + ".kernel", k->value);
                ckpt.tensors.emplace_back(
                    base + ".bias", bw.edges[e].biases[static_cast<size_t>(kind)]->value);
            }
        }
        ckpt.tensors.emplace_back(prefix + "lambda", lambdas[b]->value);
    }
    ckpt.tensors.emplace_back("head_w", head_w->value);
    ckpt.tensors.emplace_back("head_b", head_b->value);
    return ckpt;
}

StudentModel StudentModel::from_checkpoint(const Checkpoint& ckpt) {
    json meta = json::parse(ckpt.meta_json);
    StudentConfig cfg;
    cfg.embed_dim = meta.at("embed_dim").get<int>();
    cfg.blocks = meta.at("blocks").get<int>();
    cfg.m = meta.at("m").get<int>();
    cfg.seed = meta.at("seed").get<uint64_t>();
    int vocab = meta.at("vocab_size").get<int>();

    StudentModel m;
    if (!meta.at("cell").is_null()) {
        m = init_discrete(cfg, vocab, DiscreteCell::from_json(meta.at("cell").dump()));
    } else {
        m = init_supernet(cfg, vocab);
    }
    auto restore = [&](Var& v, const std::string& name) {
        const Tensor& t = ckpt.get(name);
        if (!v->value.same_shape(t)) {
            throw InputError("checkpoint shape mismatch for " + name);
        }
        v->value = t;
    };
    restore(m.embedding, "embedding");
    for (size_t b = 0; b < m.block_weights.size(); ++b) {
        std::string prefix = "block" + std::to_string(b) + ".";
        auto& bw = m.block_weights[b];
        for (size_t e = 0; e < bw.edges.size(); ++e) {
            for (OpKind kind : all_ops()) {
                Var& k = bw.edges[e].kernels[static_cast<size_t>(kind)];
                if (!k) continue;
                std::string base =
                    prefix + "edge" + std::to_string(e) + "." + op_name(kind);
                restore(k, base + ".kernel");
                restore(bw.edges[e].biases[static_cast<size_t>(kind)], base + ".bias");
            }
        }
        restore(m.lambdas[b], prefix + "lambda");
    }
    restore(m.head_w, "head_w");
    restore(m.head_b, "head_b");
    return m;
}

}  // namespace adarec::student
