#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "adarec/checkpoint.hpp"
#include "adarec/graph.hpp"
#include "adarec/search_space.hpp"

namespace adarec::student {

using search_space::ArchParams;
using search_space::BlockWeights;
using search_space::CellMode;
using search_space::CellSample;
using search_space::DiscreteCell;

struct StudentConfig {
    int embed_dim = 16;  // teacher dim / 4
    int blocks = 4;      // K
    int m = 3;           // intermediate nodes per cell
    uint64_t seed = 1;
};

// K stacked blocks sharing one cell structure. Each block owns its
// operation weights and a scalar residual coefficient initialized to 0, so
// out_k = lambda_k * cell(x) + x and the zero op can silence a block.
class StudentModel {
public:
    StudentConfig cfg;
    int vocab_size = 0;
    Var embedding;  // (V+1) x d, row 0 frozen at zeros
    std::vector<BlockWeights> block_weights;
    std::vector<Var> lambdas;
    Var head_w;  // (V+1) x d
    Var head_b;
    std::optional<DiscreteCell> cell;  // present when the structure is fixed

    // Supernet with every candidate's weights.
    static StudentModel init_supernet(const StudentConfig& cfg, int vocab_size);
    // Fresh weights for one derived structure; only chosen ops allocate.
    static StudentModel init_discrete(const StudentConfig& cfg, int vocab_size,
                                      const DiscreteCell& cell);

    struct ForwardResult {
        std::vector<Var> hidden_layers;  // one per block
        Var last_hidden;
        Var logits;
        Var probs;
    };

    // Supernet forward with a shared per-edge sample.
    ForwardResult forward_supernet(const std::vector<int>& items,
                                   const ArchParams& arch, CellMode mode,
                                   const CellSample& sample) const;
    // Discrete-cell forward (requires cell).
    ForwardResult forward_discrete(const std::vector<int>& items) const;

    std::vector<Var> params() const;
    // Serving parameter count: embedding, head, lambdas, and (when the cell
    // is fixed) only the chosen ops' weights.
    long long param_count() const;

    Checkpoint to_checkpoint() const;
    static StudentModel from_checkpoint(const Checkpoint& ckpt);
};

}  // namespace adarec::student
