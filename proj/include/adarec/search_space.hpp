#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adarec/graph.hpp"

namespace adarec::search_space {

// The eight candidate operations, in tie-break order.
enum class OpKind : int {
    StdCnn3 = 0,
    StdCnn5 = 1,
    CauCnn3 = 2,
    CauCnn5 = 3,
    MaxPool3 = 4,
    AvgPool3 = 5,
    Skip = 6,
    Zero = 7,
};

constexpr int kNumOps = 8;

const std::array<OpKind, kNumOps>& all_ops();
std::string op_name(OpKind kind);
OpKind op_from_name(const std::string& name);
bool op_has_weights(OpKind kind);
int op_kernel_size(OpKind kind);  // 0 for skip/zero

// Edges (i, j) for input node 0 and M intermediate nodes, i < j, ordered by
// target node then source: (0,1), (0,2), (1,2), (0,3), ...
std::vector<std::pair<int, int>> cell_edges(int m);

// Per-edge operation logits plus attention logits over intermediate nodes.
// One ArchParams instance is shared by all stacked student blocks.
struct ArchParams {
    int m = 3;
    std::vector<Var> theta;  // one logits vector of length kNumOps per edge
    Var attn;                // length m

    static ArchParams init(int m);  // zero logits: uniform everywhere
    int edge_count() const { return static_cast<int>(theta.size()); }

    std::string to_json() const;
    static ArchParams from_json(const std::string& text);
};

// y_i = exp[(log theta_i + g_i)/tau] / sum_j exp[(log theta_j + g_j)/tau],
// g ~ Gumbel(0,1). theta arrives in logits form.
Var gumbel_softmax(const Var& theta, double tau, Rng& rng);

// Weights held by one edge of one block: kernels for the four conv kinds.
struct EdgeWeights {
    std::vector<Var> kernels;  // indexed by OpKind, empty Var when unused
    std::vector<Var> biases;

    static EdgeWeights init(int d, Rng& rng);
    std::vector<Var> params() const;
};

struct BlockWeights {
    std::vector<EdgeWeights> edges;  // one per cell edge
    int dilation = 1;                // used by the causal conv candidates

    static BlockWeights init(int m, int d, int block_index, Rng& rng);
    std::vector<Var> params() const;
};

Var candidate_op_forward(OpKind kind, const Var& x, const EdgeWeights& w,
                         int dilation);

enum class CellMode { Soft, StraightThrough, Discrete };

// One Gumbel draw per edge, shared between the cell forward and the
// efficiency loss of the same step.
struct CellSample {
    std::vector<Var> edge_mix;  // soft simplex vectors, one per edge
};

CellSample sample_cell(const ArchParams& arch, double tau, Rng& rng);

// Supernet cell: node 0 = x, node j = sum over incoming edges of the op
// mixture, output = attention-weighted sum of intermediate nodes. Discrete
// mode runs the argmax cell and ignores the sample.
Var cell_forward(const Var& x, const ArchParams& arch, const BlockWeights& w,
                 CellMode mode, const CellSample& sample);

// Convenience overload that draws its own sample (unused in discrete mode).
Var cell_forward(const Var& x, const ArchParams& arch, const BlockWeights& w,
                 CellMode mode, double tau, Rng& rng);

// Argmax decision per edge with lowest-index tie-break; attention logits
// frozen into softmax weights.
struct DiscreteCell {
    int m = 3;
    std::vector<OpKind> edge_ops;
    std::vector<double> attn_weights;  // softmax of the attention logits

    std::string to_json() const;
    static DiscreteCell from_json(const std::string& text);
    std::string to_dot() const;
};

DiscreteCell derive_architecture(const ArchParams& arch);

Var discrete_cell_forward(const Var& x, const DiscreteCell& cell,
                          const BlockWeights& w);

}  // namespace adarec::search_space
