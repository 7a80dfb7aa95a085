#include "adarec/teacher.hpp"

#include <cmath>

#include "adarec/optim.hpp"
#include "json.hpp"

namespace adarec::teacher {

using nlohmann::json;

std::string flavor_name(Flavor f) {
    return f == Flavor::DilatedConv ? "conv" : "attention";
}

Flavor flavor_from_name(const std::string& name) {
    if (name == "conv") return Flavor::DilatedConv;
    if (name == "attention") return Flavor::SelfAttention;
    throw InputError("unknown teacher flavor: " + name);
}

std::string TeacherConfig::to_json() const {
    json j;
    j["flavor"] = flavor_name(flavor);
    j["embed_dim"] = embed_dim;
    j["dilations"] = dilations;
    j["attn_blocks"] = attn_blocks;
    j["heads"] = heads;
    j["kernel_size"] = kernel_size;
    j["dropout"] = dropout;
    j["sasrec_canonical_order"] = sasrec_canonical_order;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    return j.dump();
}

TeacherConfig TeacherConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    TeacherConfig c;  // absent keys keep their defaults
    static const char* known[] = {"flavor",      "embed_dim",   "dilations",
                                  "attn_blocks", "heads",       "kernel_size",
                                  "dropout",     "sasrec_canonical_order",
                                  "lr",          "weight_decay", "epochs",
                                  "batch_size",  "seed"};
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw InputError("unknown teacher config key: " + key);
        (void)value;
    }
    if (j.contains("flavor")) c.flavor = flavor_from_name(j["flavor"].get<std::string>());
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.dilations = j.value("dilations", c.dilations);
    c.attn_blocks = j.value("attn_blocks", c.attn_blocks);
    c.heads = j.value("heads", c.heads);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.dropout = j.value("dropout", c.dropout);
    c.sasrec_canonical_order = j.value("sasrec_canonical_order", c.sasrec_canonical_order);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    return c;
}

Var nextitnet_block_forward(const Var& x, const ResidualBlockParams& p,
                            const std::vector<double>* pos_valid) {
    if (p.flavor != Flavor::DilatedConv) {
        throw InputError("nextitnet_block_forward: block is not dilated-conv");
    }
    Var h = causal_dilated_conv1d(x, p.conv1_k, p.conv1_b, p.dilation1);
    h = relu(layer_norm(h, p.ln1_g, p.ln1_b));
    if (pos_valid) h = mask_rows(h, *pos_valid);
    h = causal_dilated_conv1d(h, p.conv2_k, p.conv2_b, p.dilation2);
    h = relu(layer_norm(h, p.ln2_g, p.ln2_b));
    return add(scale_by(h, p.lambda), x);
}

namespace {

Var multi_head_attention(const Var& x, const ResidualBlockParams& p,
                         const std::vector<double>* key_valid) {
    int d = x->value.dim(1);
    if (d % p.heads != 0) {
        throw ShapeError("attention: embed dim " + std::to_string(d) +
                         " not divisible by " + std::to_string(p.heads) + " heads");
    }
    Var q = matmul(x, p.attn_wq);
    Var k = matmul(x, p.attn_wk);
    Var v = matmul(x, p.attn_wv);
    int dh = d / p.heads;
    std::vector<Var> heads;
    for (int h = 0; h < p.heads; ++h) {
        int c0 = h * dh, c1 = (h + 1) * dh;
        heads.push_back(attention(slice_cols(q, c0, c1), slice_cols(k, c0, c1),
                                  slice_cols(v, c0, c1), key_valid));
    }
    Var cat = p.heads == 1 ? heads[0] : concat_cols(heads);
    return matmul(cat, p.attn_wo);
}

Var ffn(const Var& x, const ResidualBlockParams& p) {
    Var h = relu(add(matmul(x, p.ffn_w1), p.ffn_b1));
    return add(matmul(h, p.ffn_w2), p.ffn_b2);
}

Var maybe_dropout(const Var& x, double rate, Rng* rng) {
    if (rate <= 0.0 || rng == nullptr) return x;
    return dropout(x, rate, *rng);
}

}  // namespace

Var sasrec_block_forward(const Var& x, const ResidualBlockParams& p,
                         bool canonical_order, double dropout_rate,
                         Rng* dropout_rng, const std::vector<double>* key_valid) {
    if (p.flavor != Flavor::SelfAttention) {
        throw InputError("sasrec_block_forward: block is not self-attention");
    }
    Var h;
    if (!canonical_order) {
        // as printed: FFN on LN1, then SA on LN2
        h = layer_norm(x, p.ln1_g, p.ln1_b);
        h = maybe_dropout(ffn(h, p), dropout_rate, dropout_rng);
        h = layer_norm(h, p.ln2_g, p.ln2_b);
        h = maybe_dropout(multi_head_attention(h, p, key_valid), dropout_rate,
                          dropout_rng);
    } else {
        h = layer_norm(x, p.ln1_g, p.ln1_b);
        h = maybe_dropout(multi_head_attention(h, p, key_valid), dropout_rate,
                          dropout_rng);
        h = layer_norm(h, p.ln2_g, p.ln2_b);
        h = maybe_dropout(ffn(h, p), dropout_rate, dropout_rng);
    }
    return add(scale_by(h, p.lambda), x);
}

namespace {

Tensor randn(Rng& rng, std::vector<int> shape, double std) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = std * rng.normal();
    return t;
}

ResidualBlockParams init_conv_block(Rng& rng, int d, int k, int dil1, int dil2) {
    ResidualBlockParams p;
    p.flavor = Flavor::DilatedConv;
    double std = std::sqrt(2.0 / (k * d));
    p.conv1_k = param(randn(rng, {k, d, d}, std));
    p.conv1_b = param(Tensor::zeros({d}));
    p.conv2_k = param(randn(rng, {k, d, d}, std));
    p.conv2_b = param(Tensor::zeros({d}));
    p.dilation1 = dil1;
    p.dilation2 = dil2;
    p.ln1_g = param(Tensor::full({d}, 1.0));
    p.ln1_b = param(Tensor::zeros({d}));
    p.ln2_g = param(Tensor::full({d}, 1.0));
    p.ln2_b = param(Tensor::zeros({d}));
    p.lambda = param(Tensor::scalar(0.0));
    return p;
}

ResidualBlockParams init_attn_block(Rng& rng, int d, int heads) {
    ResidualBlockParams p;
    p.flavor = Flavor::SelfAttention;
    double std = std::sqrt(1.0 / d);
    p.attn_wq = param(randn(rng, {d, d}, std));
    p.attn_wk = param(randn(rng, {d, d}, std));
    p.attn_wv = param(randn(rng, {d, d}, std));
    p.attn_wo = param(randn(rng, {d, d}, std));
    p.ffn_w1 = param(randn(rng, {d, d}, std::sqrt(2.0 / d)));
    p.ffn_b1 = param(Tensor::zeros({d}));
    p.ffn_w2 = param(randn(rng, {d, d}, std::sqrt(2.0 / d)));
    p.ffn_b2 = param(Tensor::zeros({d}));
    p.heads = heads;
    p.ln1_g = param(Tensor::full({d}, 1.0));
    p.ln1_b = param(Tensor::zeros({d}));
    p.ln2_g = param(Tensor::full({d}, 1.0));
    p.ln2_b = param(Tensor::zeros({d}));
    p.lambda = param(Tensor::scalar(0.0));
    return p;
}

std::vector<double> padding_mask(const std::vector<int>& items) {
    std::vector<double> m(items.size());
    for (size_t i = 0; i < items.size(); ++i) m[i] = items[i] == 0 ? 0.0 : 1.0;
    return m;
}

}  // namespace

TeacherModel TeacherModel::init(const TeacherConfig& cfg, int vocab_size) {
    if (vocab_size < 1) throw InputError("teacher needs a nonempty vocabulary");
    if (cfg.flavor == Flavor::DilatedConv && cfg.dilations.size() % 2 != 0) {
        throw InputError("conv teacher needs an even number of dilation entries");
    }
    TeacherModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    Rng rng(derive_seed(cfg.seed, 0x7eac4e5));
    int d = cfg.embed_dim;
    m.embedding = param(randn(rng, {vocab_size + 1, d}, 0.1));
    for (int j = 0; j < d; ++j) m.embedding->value.at(0, j) = 0.0;  // padding row
    if (cfg.flavor == Flavor::DilatedConv) {
        int nblocks = cfg.block_count();
        for (int b = 0; b < nblocks; ++b) {
            m.blocks.push_back(init_conv_block(rng, d, cfg.kernel_size,
                                               cfg.dilations[static_cast<size_t>(2 * b)],
                                               cfg.dilations[static_cast<size_t>(2 * b + 1)]));
        }
    } else {
        for (int b = 0; b < cfg.attn_blocks; ++b) {
            m.blocks.push_back(init_attn_block(rng, d, cfg.heads));
        }
    }
    m.head_w = param(randn(rng, {vocab_size + 1, d}, 0.1));
    m.head_b = param(Tensor::zeros({vocab_size + 1}));
    return m;
}

TeacherModel::ForwardResult TeacherModel::forward(const std::vector<int>& items,
                                                  bool train,
                                                  Rng* dropout_rng) const {
    ForwardResult res;
    auto mask = padding_mask(items);
    Var h = embedding_gather(embedding, items);
    for (const auto& block : blocks) {
        if (block.flavor == Flavor::DilatedConv) {
            h = nextitnet_block_forward(h, block, &mask);
        } else {
            h = sasrec_block_forward(h, block, cfg.sasrec_canonical_order,
                                     train ? cfg.dropout : 0.0, dropout_rng, &mask);
        }
        h = mask_rows(h, mask);
        res.hidden_layers.push_back(h);
    }
    res.last_hidden = h;
    res.logits = add(matmul_nt(h, head_w), head_b);
    return res;
}

Var TeacherModel::predict_logits(const std::vector<int>& items) const {
    return forward(items).logits;
}

std::vector<Var> TeacherModel::params() const {
    std::vector<Var> out{embedding};
    for (const auto& b : blocks) {
        if (b.flavor == Flavor::DilatedConv) {
            out.insert(out.end(), {b.conv1_k, b.conv1_b, b.conv2_k, b.conv2_b});
        } else {
            out.insert(out.end(), {b.attn_wq, b.attn_wk, b.attn_wv, b.attn_wo,
                                   b.ffn_w1, b.ffn_b1, b.ffn_w2, b.ffn_b2});
        }
        out.insert(out.end(), {b.ln1_g, b.ln1_b, b.ln2_g, b.ln2_b, b.lambda});
    }
    out.push_back(head_w);
    out.push_back(head_b);
    return out;
}

long long TeacherModel::param_count() const {
    long long n = 0;
    for (const auto& p : params()) n += p->value.numel();
    return n;
}

void TeacherModel::set_trainable(bool trainable) {
    for (auto& p : params()) p->requires_grad = trainable;
}

Checkpoint TeacherModel::to_checkpoint() const {
    Checkpoint ckpt;
    json meta;
    meta["kind"] = "teacher";
    meta["config"] = json::parse(cfg.to_json());
    meta["vocab_size"] = vocab_size;
    ckpt.meta_json = meta.dump();
    ckpt.tensors.emplace_back("embedding", embedding->value);
    for (size_t b = 0; b < blocks.size(); ++b) {
        const auto& blk = blocks[b];
        std::string prefix = "block" + std::to_string(b) + ".";
        if (blk.flavor == Flavor::DilatedConv) {
            ckpt.tensors.emplace_back(prefix + "conv1_k", blk.conv1_k->value);
            ckpt.tensors.emplace_back(prefix + "conv1_b", blk.conv1_b->value);
            ckpt.tensors.emplace_back(prefix + "conv2_k", blk.conv2_k->value);
            ckpt.tensors.emplace_back(prefix + "conv2_b", blk.conv2_b->value);
        } else {
            ckpt.tensors.emplace_back(prefix + "attn_wq", blk.attn_wq->value);
            ckpt.tensors.emplace_back(prefix + "attn_wk", blk.attn_wk->value);
            ckpt.tensors.emplace_back(prefix + "attn_wv", blk.attn_wv->value);
            ckpt.tensors.emplace_back(prefix + "attn_wo", blk.attn_wo->value);
            ckpt.tensors.emplace_back(prefix + "ffn_w1", blk.ffn_w1->value);
            ckpt.tensors.emplace_back(prefix + "ffn_b1", blk.ffn_b1->value);
            ckpt.tensors.emplace_back(prefix + "ffn_w2", blk.ffn_w2->value);
            ckpt.tensors.emplace_back(prefix + "ffn_b2", blk.ffn_b2->value);
        }
        ckpt.tensors.emplace_back(prefix + "ln1_g", blk.ln1_g->value);
        ckpt.tensors.emplace_back(prefix + "ln1_b", blk.ln1_b->value);
        ckpt.tensors.emplace_back(prefix + "ln2_g", blk.ln2_g->value);
        ckpt.tensors.emplace_back(prefix + "ln2_b", blk.ln2_b->value);
        ckpt.tensors.emplace_back(prefix + "lambda", blk.lambda->value);
    }
    ckpt.tensors.emplace_back("head_w", head_w->value);
    ckpt.tensors.emplace_back("head_b", head_b->value);
    return ckpt;
}

TeacherModel TeacherModel::from_checkpoint(const Checkpoint& ckpt) {
    json meta = json::parse(ckpt.meta_json);
    TeacherConfig cfg = TeacherConfig::from_json(meta.at("config").dump());
    TeacherModel m = init(cfg, meta.at("vocab_size").get<int>());
    auto restore = [&](Var& v, const std::string& name) {
        const Tensor& t = ckpt.get(name);
        if (!v->value.same_shape(t)) {
            throw InputError("checkpoint shape mismatch for " + name);
        }
        v->value = t;
    };
    restore(m.embedding, "embedding");
    for (size_t b = 0; b < m.blocks.size(); ++b) {
        auto& blk = m.blocks[b];
        std::string prefix = "block" + std::to_string(b) + ".";
        if (blk.flavor == Flavor::DilatedConv) {
            restore(blk.conv1_k, prefix + "conv1_k");
            restore(blk.conv1_b, prefix + "conv1_b");
            restore(blk.conv2_k, prefix + "conv2_k");
            restore(blk.conv2_b, prefix + "conv2_b");
        } else {
            restore(blk.attn_wq, prefix + "attn_wq");
            restore(blk.attn_wk, prefix + "attn_wk");
            restore(blk.attn_wv, prefix + "attn_wv");
            restore(blk.attn_wo, prefix + "attn_wo");
            restore(blk.ffn_w1, prefix + "ffn_w1");
            restore(blk.ffn_b1, prefix + "ffn_b1");
            restore(blk.ffn_w2, prefix + "ffn_w2");
            restore(blk.ffn_b2, prefix + "ffn_b2");
        }
        restore(blk.ln1_g, prefix + "ln1_g");
        restore(blk.ln1_b, prefix + "ln1_b");
        restore(blk.ln2_g, prefix + "ln2_g");
        restore(blk.ln2_b, prefix + "ln2_b");
        restore(blk.lambda, prefix + "lambda");
    }
    restore(m.head_w, "head_w");
    restore(m.head_b, "head_b");
    return m;
}

namespace {

struct SeqLoss {
    Var loss;      // masked mean over this sequence's target positions
    double count;  // number of unmasked targets
};

SeqLoss sequence_loss(const TeacherModel& model,
                      const data::InteractionSequence& seq, bool train,
                      Rng* dropout_rng) {
    std::vector<int> inputs(seq.items.begin(), seq.items.end() - 1);
    std::vector<int> targets(seq.items.begin() + 1, seq.items.end());
    std::vector<double> mask(targets.size());
    double count = 0.0;
    for (size_t i = 0; i < targets.size(); ++i) {
        mask[i] = targets[i] == 0 ? 0.0 : 1.0;
        count += mask[i];
    }
    auto fwd = model.forward(inputs, train, dropout_rng);
    Var probs = softmax(fwd.logits);
    return {nll_rows(probs, targets, mask), count};
}

}  // namespace

double dataset_loss(const TeacherModel& model,
                    const std::vector<data::InteractionSequence>& seqs) {
    double acc = 0.0, total = 0.0;
    for (const auto& seq : seqs) {
        if (seq.real_count() < 2) continue;
        auto sl = sequence_loss(model, seq, false, nullptr);
        acc += sl.loss->value.data[0] * sl.count;
        total += sl.count;
    }
    if (total == 0.0) throw InputError("dataset has no trainable positions");
    return acc / total;
}

TrainHistory train_teacher(TeacherModel& model,
                           const std::vector<data::InteractionSequence>& train_seqs) {
    std::vector<const data::InteractionSequence*> usable;
    for (const auto& s : train_seqs) {
        if (s.real_count() >= 2) usable.push_back(&s);
    }
    if (usable.empty()) throw InputError("no trainable sequences");

    const auto& cfg = model.cfg;
    AdamW opt(cfg.lr, cfg.weight_decay);
    auto params = model.params();
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5f1e));
    Rng dropout_rng(derive_seed(cfg.seed, 0xd20));

    TrainHistory history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(usable.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        double epoch_acc = 0.0, epoch_count = 0.0;
        size_t step = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(cfg.batch_size), ++step) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<Var> losses;
            Tensor coeffs({static_cast<int>(end - start)});
            double batch_count = 0.0;
            for (size_t s = start; s < end; ++s) {
                auto sl = sequence_loss(model, *usable[order[s]], true, &dropout_rng);
                losses.push_back(sl.loss);
                coeffs.at(static_cast<int>(s - start)) = sl.count;
                batch_count += sl.count;
            }
            for (auto& v : coeffs.data) v /= batch_count;
            Var batch_loss = weighted_sum(losses, constant(coeffs));
            double lv = batch_loss->value.data[0];
            if (!std::isfinite(lv)) {
                throw NumericError("teacher training diverged at epoch " +
                                   std::to_string(epoch) + " step " +
                                   std::to_string(step));
            }
            zero_grad(params);
            backward(batch_loss);
            // padding row stays frozen at zero
            if (model.embedding->has_grad()) {
                for (int j = 0; j < model.cfg.embed_dim; ++j) {
                    model.embedding->grad.at(0, j) = 0.0;
                }
            }
            opt.step(params);
            epoch_acc += lv * batch_count;
            epoch_count += batch_count;
        }
        history.epoch_loss.push_back(epoch_acc / epoch_count);
    }
    return history;
}

}  // namespace adarec::teacher
