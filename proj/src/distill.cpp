#include "adarec/distill.hpp"

#include <cmath>

#include "json.hpp"

namespace adarec::distill {

using nlohmann::json;

LayerSet LayerSet::uniform(std::vector<Var> layers) {
    LayerSet set;
    set.weights.assign(layers.size(), 1.0 / static_cast<double>(layers.size()));
    set.layers = std::move(layers);
    set.validate();
    return set;
}

void LayerSet::validate() const {
    if (layers.empty() || layers.size() != weights.size()) {
        throw ShapeError("layer set must be nonempty with one weight per layer");
    }
    double s = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw NumericError("layer weight must be nonnegative");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) {
        throw NumericError("layer weights must sum to 1");
    }
}

Var emb_loss(const Var& teacher_emb, const Var& student_emb, const Var& w_embed) {
    const Tensor& et = teacher_emb->value;
    const Tensor& es = student_emb->value;
    const Tensor& w = w_embed->value;
    if (et.rank() != 2 || es.rank() != 2 || et.dim(0) != es.dim(0)) {
        throw ShapeError("emb_loss: vocabulary sizes differ, " + et.shape_str() +
                         " vs " + es.shape_str());
    }
    if (w.rank() != 2 || w.dim(0) != es.dim(1) || w.dim(1) != et.dim(1)) {
        throw ShapeError("emb_loss: projection shape " + w.shape_str() +
                         " does not map " + es.shape_str() + " to " + et.shape_str());
    }
    return mse(teacher_emb, matmul(student_emb, w_embed));
}

Var pred_loss(const Var& teacher_probs, const Var& student_probs,
              const std::vector<double>& row_weights) {
    return kl_divergence_rows(teacher_probs, student_probs, row_weights);
}

std::vector<std::vector<Var>> hidden_cost_matrix(const LayerSet& teacher,
                                                 const LayerSet& student,
                                                 const Var& w_hidden) {
    teacher.validate();
    student.validate();
    int t = teacher.layers[0]->value.dim(0);
    for (const auto& h : teacher.layers) {
        if (h->value.rank() != 2 || h->value.dim(0) != t) {
            throw ShapeError("hidden_cost_matrix: teacher layers disagree on length");
        }
    }
    for (const auto& h : student.layers) {
        if (h->value.rank() != 2 || h->value.dim(0) != t) {
            throw ShapeError("hidden_cost_matrix: student layer length differs");
        }
    }

    std::vector<std::vector<Var>> d(teacher.layers.size());
    std::vector<Var> projected;
    projected.reserve(student.layers.size());
    for (const auto& hs : student.layers) {
        projected.push_back(softmax(matmul(hs, w_hidden)));
    }
    for (size_t i = 0; i < teacher.layers.size(); ++i) {
        Var rho_t = softmax(teacher.layers[i]);
        for (size_t j = 0; j < student.layers.size(); ++j) {
            d[i].push_back(kl_divergence(rho_t, projected[j]));
        }
    }
    return d;
}

HiddenLossResult hidden_loss(const LayerSet& teacher, const LayerSet& student,
                             const Var& w_hidden) {
    auto d = hidden_cost_matrix(teacher, student, w_hidden);
    int n = static_cast<int>(teacher.layers.size());
    int k = static_cast<int>(student.layers.size());

    Tensor cost({n, k});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j)
            cost.at(i, j) = d[static_cast<size_t>(i)][static_cast<size_t>(j)]->value.data[0];

    TransportPlan plan = solve_transport(teacher.weights, student.weights, cost);
    if (plan.total_flow <= 0.0) throw NumericError("hidden_loss: zero total flow");

    // loss = sum f_ij d_ij / total flow with f frozen
    std::vector<Var> terms;
    Tensor coeffs({n * k});
    int idx = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            terms.push_back(d[static_cast<size_t>(i)][static_cast<size_t>(j)]);
            coeffs.at(idx++) = plan.flow.at(i, j) / plan.total_flow;
        }
    }
    HiddenLossResult res{weighted_sum(terms, constant(coeffs)), std::move(plan)};
    return res;
}

Var kd_loss(const Var& emb, const Var& pred, const Var& hidden) {
    return add(add(emb, pred), hidden);
}

std::string transport_dump_json(const TransportPlan& plan) {
    json j;
    int n = plan.cost.dim(0), k = plan.cost.dim(1);
    j["cost"] = json::array();
    j["flow"] = json::array();
    for (int i = 0; i < n; ++i) {
        json crow = json::array(), frow = json::array();
        for (int jj = 0; jj < k; ++jj) {
            crow.push_back(plan.cost.at(i, jj));
            frow.push_back(plan.flow.at(i, jj));
        }
        j["cost"].push_back(crow);
        j["flow"].push_back(frow);
    }
    j["work"] = plan.work;
    j["total_flow"] = plan.total_flow;
    j["emd"] = plan.work / plan.total_flow;
    return j.dump(2);
}

}  // namespace adarec::distill
