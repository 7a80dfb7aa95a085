#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adarec/checkpoint.hpp"
#include "adarec/data.hpp"
#include "adarec/graph.hpp"

namespace adarec::teacher {

enum class Flavor { DilatedConv, SelfAttention };

std::string flavor_name(Flavor f);
Flavor flavor_from_name(const std::string& name);

struct TeacherConfig {
    Flavor flavor = Flavor::DilatedConv;
    int embed_dim = 256;  // attention flavor typically runs at 128
    // one dilation per conv layer, two layers per residual block
    std::vector<int> dilations = default_dilations(8);
    int attn_blocks = 8;
    int heads = 4;
    int kernel_size = 3;
    double dropout = 0.1;  // attention flavor; conv flavor trains without
    bool sasrec_canonical_order = false;  // false keeps FFN before SA
    double lr = 5e-3;
    double weight_decay = 5e-4;
    int epochs = 20;
    int batch_size = 32;
    uint64_t seed = 1;

    static std::vector<int> default_dilations(int cycles) {
        std::vector<int> d;
        for (int c = 0; c < cycles; ++c)
            for (int v : {1, 2, 4, 8}) d.push_back(v);
        return d;
    }

    int block_count() const {
        return flavor == Flavor::DilatedConv
                   ? static_cast<int>(dilations.size()) / 2
                   : attn_blocks;
    }

    std::string to_json() const;
    static TeacherConfig from_json(const std::string& text);
};

// One residual block. lambda starts at 0 so a freshly initialized stack is
// the identity on embeddings.
struct ResidualBlockParams {
    Flavor flavor = Flavor::DilatedConv;
    // dilated-conv flavor: exactly two convolutions
    Var conv1_k, conv1_b, conv2_k, conv2_b;
    int dilation1 = 1, dilation2 = 1;
    // self-attention flavor
    Var attn_wq, attn_wk, attn_wv, attn_wo;
    Var ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    int heads = 1;
    // shared
    Var ln1_g, ln1_b, ln2_g, ln2_b;
    Var lambda;
};

// lambda * relu(LN2(conv2(relu(LN1(conv1(x)))))) + x. pos_valid, when given,
// zeroes the conv2 input at padding positions so their activations match the
// virtual zero padding regardless of how long the padded prefix is.
Var nextitnet_block_forward(const Var& x, const ResidualBlockParams& p,
                            const std::vector<double>* pos_valid = nullptr);

// lambda * drop(SA(LN2(drop(FFN(LN1(x)))))) + x, with the conventional
// SA-then-FFN ordering available behind canonical_order. key_valid marks
// real (non-padding) key positions for the causal attention.
Var sasrec_block_forward(const Var& x, const ResidualBlockParams& p,
                         bool canonical_order = false, double dropout_rate = 0.0,
                         Rng* dropout_rng = nullptr,
                         const std::vector<double>* key_valid = nullptr);

class TeacherModel {
public:
    TeacherConfig cfg;
    int vocab_size = 0;
    Var embedding;  // (V+1) x d, row 0 frozen at zeros
    std::vector<ResidualBlockParams> blocks;
    Var head_w;  // (V+1) x d
    Var head_b;  // (V+1)

    static TeacherModel init(const TeacherConfig& cfg, int vocab_size);

    struct ForwardResult {
        std::vector<Var> hidden_layers;  // one per residual block
        Var last_hidden;
        Var logits;  // t x (V+1)
    };

    // items may include leading padding zeros; hidden state at padding
    // positions is masked to zero after every block so extra left padding
    // cannot leak into real positions.
    ForwardResult forward(const std::vector<int>& items, bool train = false,
                          Rng* dropout_rng = nullptr) const;

    Var predict_logits(const std::vector<int>& items) const;

    std::vector<Var> params() const;
    long long param_count() const;
    void set_trainable(bool trainable);

    Checkpoint to_checkpoint() const;
    static TeacherModel from_checkpoint(const Checkpoint& ckpt);
};

struct TrainHistory {
    std::vector<double> epoch_loss;
};

// Autoregressive training: at every position with a non-padding target,
// predict item i from items 1..i-1. Returns per-epoch mean loss.
TrainHistory train_teacher(TeacherModel& model,
                           const std::vector<data::InteractionSequence>& train_seqs);

// Mean masked cross-entropy of the model over the given sequences.
double dataset_loss(const TeacherModel& model,
                    const std::vector<data::InteractionSequence>& seqs);

}  // namespace adarec::teacher
