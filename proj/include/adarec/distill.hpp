#pragma once

#include <string>
#include <vector>

#include "adarec/graph.hpp"
#include "adarec/transport.hpp"

namespace adarec::distill {

// Hidden layers of one network with normalized mass weights.
struct LayerSet {
    std::vector<Var> layers;      // each t x d
    std::vector<double> weights;  // nonnegative, summing to 1

    static LayerSet uniform(std::vector<Var> layers);
    void validate() const;
};

// Learnable student->teacher projections (d_S x d_T).
struct Projection {
    Var w_embed;
    Var w_hidden;
};

// MSE(E_T, E_S . W_e) over all entries.
Var emb_loss(const Var& teacher_emb, const Var& student_emb, const Var& w_embed);

// KL(z_T || z_S) averaged over rows with nonzero weight.
Var pred_loss(const Var& teacher_probs, const Var& student_probs,
              const std::vector<double>& row_weights);

// d_ij = position-averaged KL(softmax(H_i^T) || softmax(H_j^S . W_h)).
// Entries are graph scalars so gradients reach the student states and W_h.
std::vector<std::vector<Var>> hidden_cost_matrix(const LayerSet& teacher,
                                                 const LayerSet& student,
                                                 const Var& w_hidden);

struct HiddenLossResult {
    Var loss;
    TransportPlan plan;
};

// EMD between the layer sets. The optimal flow is treated as constant at
// the current point, so gradients reach only the cost entries.
HiddenLossResult hidden_loss(const LayerSet& teacher, const LayerSet& student,
                             const Var& w_hidden);

Var kd_loss(const Var& emb, const Var& pred, const Var& hidden);

// (D, F, emd) triple as json, for inspecting layer-mapping behavior.
std::string transport_dump_json(const TransportPlan& plan);

}  // namespace adarec::distill
