#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adarec/cost.hpp"
#include "adarec/data.hpp"
#include "adarec/distill.hpp"
#include "adarec/graph.hpp"
#include "adarec/search_space.hpp"
#include "adarec/student.hpp"
#include "adarec/teacher.hpp"

namespace adarec::trainer {

struct SearchConfig {
    double gamma = 0.5;
    double beta = 8.0;
    double weight_lr = 5e-3;
    double weight_decay = 5e-4;
    double arch_lr = 2e-5;
    double arch_decay = 1e-4;
    int epochs = 50;
    int retrain_epochs = 100;
    int batch_size = 32;
    uint64_t seed = 0;
    double tau_start = 5.0;  // anneals geometrically per epoch
    double tau_end = 0.5;
    int m = 3;
    int k_blocks = 4;
    // ablation toggles; a disabled term is logged as exactly 0
    bool use_ce = true;
    bool use_emb_kd = true;
    bool use_pred_kd = true;
    bool use_hidden_kd = true;

    std::string to_json() const;
    static SearchConfig from_json(const std::string& text);
};

// Mean -log p(target) over rows with nonzero weight.
Var ce_loss(const Var& probs, const std::vector<int>& targets,
            const std::vector<double>& row_weights);

// (1 - gamma) * ce + gamma * kd + beta * eff
Var total_loss(const Var& ce, const Var& kd, const Var& eff, double gamma,
               double beta);
double total_loss(double ce, double kd, double eff, double gamma, double beta);

struct EpochStats {
    int epoch = 0;
    double ce = 0.0;
    double emb = 0.0;
    double pred = 0.0;
    double hidden = 0.0;
    double kd = 0.0;
    double eff = 0.0;
    double total = 0.0;
    double tau = 0.0;
};

struct History {
    std::vector<EpochStats> epochs;
    void append_jsonl(const std::string& path, const std::string& phase) const;
};

struct SearchResult {
    search_space::ArchParams arch;
    student::StudentModel supernet;
    History history;
};

// Joint differentiable search: straight-through cell forwards under the
// frozen teacher, with the weight optimizer driving student weights and
// projections and the arch optimizer driving theta and attention logits.
SearchResult search(const data::SequenceSet& dataset,
                    const teacher::TeacherModel& teacher_model,
                    const SearchConfig& cfg);

// Re-trains a fixed structure from fresh weights with the efficiency term
// dropped (constant under a frozen architecture).
student::StudentModel retrain(const search_space::DiscreteCell& cell,
                              const data::SequenceSet& dataset,
                              const teacher::TeacherModel& teacher_model,
                              const SearchConfig& cfg, History* history_out = nullptr);

}  // namespace adarec::trainer
