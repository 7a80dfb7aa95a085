#include "adarec/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "adarec/optim.hpp"
#include "json.hpp"

namespace adarec::trainer {

using nlohmann::json;
using search_space::ArchParams;
using search_space::CellMode;
using search_space::CellSample;
using student::StudentModel;

std::string SearchConfig::to_json() const {
    json j;
    j["gamma"] = gamma;
    j["beta"] = beta;
    j["weight_lr"] = weight_lr;
    j["weight_decay"] = weight_decay;
    j["arch_lr"] = arch_lr;
    j["arch_decay"] = arch_decay;
    j["epochs"] = epochs;
    j["retrain_epochs"] = retrain_epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["tau_start"] = tau_start;
    j["tau_end"] = tau_end;
    j["m"] = m;
    j["k_blocks"] = k_blocks;
    j["use_ce"] = use_ce;
    j["use_emb_kd"] = use_emb_kd;
    j["use_pred_kd"] = use_pred_kd;
    j["use_hidden_kd"] = use_hidden_kd;
    return j.dump();
}

SearchConfig SearchConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    SearchConfig c;  // absent keys keep their defaults
    static const char* known[] = {
        "gamma",     "beta",       "weight_lr",  "weight_decay",  "arch_lr",
        "arch_decay", "epochs",    "retrain_epochs", "batch_size", "seed",
        "tau_start", "tau_end",    "m",          "k_blocks",      "use_ce",
        "use_emb_kd", "use_pred_kd", "use_hidden_kd"};
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw InputError("unknown search config key: " + key);
        (void)value;
    }
    c.gamma = j.value("gamma", c.gamma);
    c.beta = j.value("beta", c.beta);
    c.weight_lr = j.value("weight_lr", c.weight_lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.arch_lr = j.value("arch_lr", c.arch_lr);
    c.arch_decay = j.value("arch_decay", c.arch_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.retrain_epochs = j.value("retrain_epochs", c.retrain_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.tau_start = j.value("tau_start", c.tau_start);
    c.tau_end = j.value("tau_end", c.tau_end);
    c.m = j.value("m", c.m);
    c.k_blocks = j.value("k_blocks", c.k_blocks);
    c.use_ce = j.value("use_ce", c.use_ce);
    c.use_emb_kd = j.value("use_emb_kd", c.use_emb_kd);
    c.use_pred_kd = j.value("use_pred_kd", c.use_pred_kd);
    c.use_hidden_kd = j.value("use_hidden_kd", c.use_hidden_kd);
    return c;
}

Var ce_loss(const Var& probs, const std::vector<int>& targets,
            const std::vector<double>& row_weights) {
    return nll_rows(probs, targets, row_weights);
}

Var total_loss(const Var& ce, const Var& kd, const Var& eff, double gamma,
               double beta) {
    if (gamma < 0.0 || gamma > 1.0) throw InputError("gamma must lie in [0, 1]");
    if (beta < 0.0) throw InputError("beta must be >= 0");
    return add(add(scale(ce, 1.0 - gamma), scale(kd, gamma)), scale(eff, beta));
}

double total_loss(double ce, double kd, double eff, double gamma, double beta) {
    if (gamma < 0.0 || gamma > 1.0) throw InputError("gamma must lie in [0, 1]");
    if (beta < 0.0) throw InputError("beta must be >= 0");
    return (1.0 - gamma) * ce + gamma * kd + beta * eff;
}

void History::append_jsonl(const std::string& path, const std::string& phase) const {
    std::ofstream out(path, std::ios::app);
    if (!out) throw InputError("cannot write " + path);
    for (const auto& e : epochs) {
        json j;
        j["phase"] = phase;
        j["epoch"] = e.epoch;
        j["ce"] = e.ce;
        j["emb"] = e.emb;
        j["pred"] = e.pred;
        j["hidden"] = e.hidden;
        j["kd"] = e.kd;
        j["eff"] = e.eff;
        j["total"] = e.total;
        j["tau"] = e.tau;
        out << j.dump() << "\n";
    }
}

namespace {

// Frozen teacher signals for one training sequence: the teacher never
// changes during search, so forwards are run once and reused as constants.
struct CachedSequence {
    std::vector<int> inputs;
    std::vector<int> targets;
    std::vector<double> mask;
    double target_count = 0.0;
    Tensor teacher_probs;              // (t-1) x (V+1)
    std::vector<Tensor> teacher_rho;   // softmaxed hidden layers
};

struct TeacherCache {
    std::vector<CachedSequence> seqs;
    Tensor teacher_emb;
    std::vector<double> layer_weights;  // uniform over teacher blocks
};

TeacherCache build_teacher_cache(const data::SequenceSet& dataset,
                                 const teacher::TeacherModel& teacher_model) {
    TeacherCache cache;
    cache.teacher_emb = teacher_model.embedding->value;
    int n_layers = static_cast<int>(teacher_model.blocks.size());
    cache.layer_weights.assign(static_cast<size_t>(n_layers), 1.0 / n_layers);
    for (const auto& seq : dataset.sequences) {
        if (seq.real_count() < 2) continue;
        CachedSequence cs;
        cs.inputs.assign(seq.items.begin(), seq.items.end() - 1);
        cs.targets.assign(seq.items.begin() + 1, seq.items.end());
        cs.mask.resize(cs.targets.size());
        for (size_t i = 0; i < cs.targets.size(); ++i) {
            cs.mask[i] = cs.targets[i] == 0 ? 0.0 : 1.0;
            cs.target_count += cs.mask[i];
        }
        auto fwd = teacher_model.forward(cs.inputs, false, nullptr);
        cs.teacher_probs = softmax(fwd.logits)->value;
        for (const auto& h : fwd.hidden_layers) {
            cs.teacher_rho.push_back(softmax(h)->value);
        }
        cache.seqs.push_back(std::move(cs));
    }
    if (cache.seqs.empty()) throw InputError("no trainable sequences");
    return cache;
}

struct Projections {
    Var w_embed;   // d_S x d_T
    Var w_hidden;  // d_S x d_T
};

Projections init_projections(int d_s, int d_t, uint64_t seed) {
    Rng rng(derive_seed(seed, 0x14a9));
    double std = std::sqrt(1.0 / d_s);
    Tensor we({d_s, d_t});
    for (auto& v : we.data) v = std * rng.normal();
    Tensor wh({d_s, d_t});
    for (auto& v : wh.data) v = std * rng.normal();
    return {param(we), param(wh)};
}

Var zero_scalar() { return constant(Tensor::scalar(0.0)); }

struct BatchLosses {
    Var ce, emb, pred, hidden, kd, eff, total;
};

// One optimization step's loss graph over a mini-batch. In search mode the
// student runs straight-through on a per-edge Gumbel sample shared with the
// efficiency term; in retrain mode the fixed cell runs and eff is zero.
BatchLosses batch_losses(const TeacherCache& cache, const std::vector<size_t>& batch,
                         StudentModel& model, const Projections& proj,
                         const SearchConfig& cfg, const ArchParams* arch,
                         const CellSample* sample, const cost::CostTable* table) {
    std::vector<Var> ce_parts, pred_parts;
    Tensor coeffs({static_cast<int>(batch.size())});
    double total_targets = 0.0;
    int n_layers = static_cast<int>(cache.layer_weights.size());
    int k_blocks = model.cfg.blocks;
    // batch-mean hidden transfer costs, built as graph scalars
    std::vector<std::vector<std::vector<Var>>> seq_costs;

    for (size_t b = 0; b < batch.size(); ++b) {
        const auto& cs = cache.seqs[batch[b]];
        auto fwd = arch ? model.forward_supernet(cs.inputs, *arch,
                                                 CellMode::StraightThrough, *sample)
                        : model.forward_discrete(cs.inputs);
        ce_parts.push_back(ce_loss(fwd.probs, cs.targets, cs.mask));
        if (cfg.use_pred_kd) {
            pred_parts.push_back(
                kl_divergence_rows(constant(cs.teacher_probs), fwd.probs, cs.mask));
        }
        if (cfg.use_hidden_kd) {
            std::vector<std::vector<Var>> d(static_cast<size_t>(n_layers));
            std::vector<Var> projected;
            for (const auto& hs : fwd.hidden_layers) {
                projected.push_back(softmax(matmul(hs, proj.w_hidden)));
            }
            for (int i = 0; i < n_layers; ++i) {
                for (int j = 0; j < k_blocks; ++j) {
                    d[static_cast<size_t>(i)].push_back(kl_divergence(
                        constant(cs.teacher_rho[static_cast<size_t>(i)]),
                        projected[static_cast<size_t>(j)]));
                }
            }
            seq_costs.push_back(std::move(d));
        }
        coeffs.at(static_cast<int>(b)) = cs.target_count;
        total_targets += cs.target_count;
    }
    for (auto& v : coeffs.data) v /= total_targets;
    Var coeff_node = constant(coeffs);

    BatchLosses out;
    out.ce = cfg.use_ce ? weighted_sum(ce_parts, coeff_node) : zero_scalar();
    out.pred = cfg.use_pred_kd ? weighted_sum(pred_parts, coeff_node) : zero_scalar();
    out.emb = cfg.use_emb_kd
                  ? distill::emb_loss(constant(cache.teacher_emb), model.embedding,
                                      proj.w_embed)
                  : zero_scalar();

    if (cfg.use_hidden_kd) {
        // average the cost matrices over the batch, then one LP per step
        int nb = static_cast<int>(batch.size());
        std::vector<std::vector<Var>> mean_costs(static_cast<size_t>(n_layers));
        for (int i = 0; i < n_layers; ++i) {
            for (int j = 0; j < k_blocks; ++j) {
                std::vector<Var> parts;
                parts.reserve(static_cast<size_t>(nb));
                for (int b = 0; b < nb; ++b) {
                    parts.push_back(seq_costs[static_cast<size_t>(b)]
                                             [static_cast<size_t>(i)]
                                             [static_cast<size_t>(j)]);
                }
                mean_costs[static_cast<size_t>(i)].push_back(
                    scale(add_n(parts), 1.0 / nb));
            }
        }
        Tensor cost_vals({n_layers, k_blocks});
        for (int i = 0; i < n_layers; ++i)
            for (int j = 0; j < k_blocks; ++j)
                cost_vals.at(i, j) =
                    mean_costs[static_cast<size_t>(i)][static_cast<size_t>(j)]->value.data[0];
        std::vector<double> ws(static_cast<size_t>(k_blocks), 1.0 / k_blocks);
        auto plan = distill::solve_transport(cache.layer_weights, ws, cost_vals);
        std::vector<Var> terms;
        Tensor fcoeff({n_layers * k_blocks});
        int idx = 0;
        for (int i = 0; i < n_layers; ++i) {
            for (int j = 0; j < k_blocks; ++j) {
                terms.push_back(mean_costs[static_cast<size_t>(i)][static_cast<size_t>(j)]);
                fcoeff.at(idx++) = plan.flow.at(i, j) / plan.total_flow;
            }
        }
        out.hidden = weighted_sum(terms, constant(fcoeff));
    } else {
        out.hidden = zero_scalar();
    }

    out.kd = distill::kd_loss(out.emb, out.pred, out.hidden);
    out.eff = (arch && table) ? cost::efficiency_loss(*sample, *table) : zero_scalar();
    out.total = total_loss(out.ce, out.kd, out.eff, cfg.gamma, cfg.beta);
    return out;
}

double tau_at_epoch(const SearchConfig& cfg, int epoch) {
    if (cfg.epochs <= 1) return cfg.tau_start;
    double r = static_cast<double>(epoch) / (cfg.epochs - 1);
    return cfg.tau_start * std::pow(cfg.tau_end / cfg.tau_start, r);
}

void zero_padding_row_grad(StudentModel& model) {
    if (model.embedding->has_grad()) {
        for (int j = 0; j < model.cfg.embed_dim; ++j) {
            model.embedding->grad.at(0, j) = 0.0;
        }
    }
}

}  // namespace

SearchResult search(const data::SequenceSet& dataset,
                    const teacher::TeacherModel& teacher_model,
                    const SearchConfig& cfg) {
    if (teacher_model.cfg.embed_dim % 4 != 0) {
        throw InputError("teacher embed dim must be divisible by 4");
    }
    TeacherCache cache = build_teacher_cache(dataset, teacher_model);

    student::StudentConfig scfg;
    scfg.embed_dim = teacher_model.cfg.embed_dim / 4;
    scfg.blocks = cfg.k_blocks;
    scfg.m = cfg.m;
    scfg.seed = derive_seed(cfg.seed, 0x5ea6c4);
    StudentModel model = StudentModel::init_supernet(scfg, dataset.vocab.size());
    ArchParams arch = ArchParams::init(cfg.m);
    Projections proj =
        init_projections(scfg.embed_dim, teacher_model.cfg.embed_dim, cfg.seed);
    auto table = cost::CostTable::build(scfg.embed_dim, dataset.max_len);

    std::vector<Var> weight_params = model.params();
    weight_params.push_back(proj.w_embed);
    weight_params.push_back(proj.w_hidden);
    std::vector<Var> arch_params = arch.theta;
    arch_params.push_back(arch.attn);

    AdamW weight_opt(cfg.weight_lr, cfg.weight_decay);
    AdamW arch_opt(cfg.arch_lr, cfg.arch_decay);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x0bdeb));
    Rng gumbel_rng(derive_seed(cfg.seed, 0x6b317));

    History history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double tau = tau_at_epoch(cfg, epoch);
        std::vector<size_t> order(cache.seqs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        stats.tau = tau;
        int batches = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            size_t end =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> batch(order.begin() + static_cast<long>(start),
                                      order.begin() + static_cast<long>(end));
            CellSample sample = search_space::sample_cell(arch, tau, gumbel_rng);
            BatchLosses losses;
            try {
                losses = batch_losses(cache, batch, model, proj, cfg, &arch, &sample,
                                      &table);
            } catch (const NumericError& e) {
                std::ostringstream msg;
                msg << "search diverged at epoch " << epoch << " step " << batches
                    << ": " << e.what() << " (epoch sums so far: ce=" << stats.ce
                    << " emb=" << stats.emb << " pred=" << stats.pred
                    << " hidden=" << stats.hidden << " eff=" << stats.eff << ")";
                throw NumericError(msg.str());
            }
            zero_grad(weight_params);
            zero_grad(arch_params);
            backward(losses.total);
            zero_padding_row_grad(model);
            weight_opt.step(weight_params);
            arch_opt.step(arch_params);

            stats.ce += losses.ce->value.data[0];
            stats.emb += losses.emb->value.data[0];
            stats.pred += losses.pred->value.data[0];
            stats.hidden += losses.hidden->value.data[0];
            stats.kd += losses.kd->value.data[0];
            stats.eff += losses.eff->value.data[0];
            stats.total += losses.total->value.data[0];
            ++batches;
        }
        if (batches > 0) {
            stats.ce /= batches;
            stats.emb /= batches;
            stats.pred /= batches;
            stats.hidden /= batches;
            stats.kd /= batches;
            stats.eff /= batches;
            stats.total /= batches;
        }
        history.epochs.push_back(stats);
    }
    return {std::move(arch), std::move(model), std::move(history)};
}

student::StudentModel retrain(const search_space::DiscreteCell& cell,
                              const data::SequenceSet& dataset,
                              const teacher::TeacherModel& teacher_model,
                              const SearchConfig& cfg, History* history_out) {
    if (teacher_model.cfg.embed_dim % 4 != 0) {
        throw InputError("teacher embed dim must be divisible by 4");
    }
    TeacherCache cache = build_teacher_cache(dataset, teacher_model);

    student::StudentConfig scfg;
    scfg.embed_dim = teacher_model.cfg.embed_dim / 4;
    scfg.blocks = cfg.k_blocks;
    scfg.m = cfg.m;
    scfg.seed = derive_seed(cfg.seed, 0x4e74a1);
    StudentModel model = StudentModel::init_discrete(scfg, dataset.vocab.size(), cell);
    Projections proj =
        init_projections(scfg.embed_dim, teacher_model.cfg.embed_dim, cfg.seed + 1);

    std::vector<Var> params = model.params();
    params.push_back(proj.w_embed);
    params.push_back(proj.w_hidden);
    AdamW opt(cfg.weight_lr, cfg.weight_decay);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x0bdec));

    History history;
    for (int epoch = 0; epoch < cfg.retrain_epochs; ++epoch) {
        std::vector<size_t> order(cache.seqs.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        EpochStats stats;
        stats.epoch = epoch;
        int batches = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size)) {
            size_t end =
                std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<size_t> batch(order.begin() + static_cast<long>(start),
                                      order.begin() + static_cast<long>(end));
            BatchLosses losses;
            try {
                losses = batch_losses(cache, batch, model, proj, cfg, nullptr, nullptr,
                                      nullptr);
            } catch (const NumericError& e) {
                std::ostringstream msg;
                msg << "retrain diverged at epoch " << epoch << " step " << batches
                    << ": " << e.what() << " (epoch sums so far: ce=" << stats.ce
                    << " emb=" << stats.emb << " pred=" << stats.pred
                    << " hidden=" << stats.hidden << ")";
                throw NumericError(msg.str());
            }
            zero_grad(params);
            backward(losses.total);
            zero_padding_row_grad(model);
            opt.step(params);

            stats.ce += losses.ce->value.data[0];
            stats.emb += losses.emb->value.data[0];
            stats.pred += losses.pred->value.data[0];
            stats.hidden += losses.hidden->value.data[0];
            stats.kd += losses.kd->value.data[0];
            stats.total += losses.total->value.data[0];
            ++batches;
        }
        if (batches > 0) {
            stats.ce /= batches;
            stats.emb /= batches;
            stats.pred /= batches;
            stats.hidden /= batches;
            stats.kd /= batches;
            stats.total /= batches;
        }
        history.epochs.push_back(stats);
    }
    if (history_out) *history_out = std::move(history);
    return model;
}

}  // namespace adarec::trainer
