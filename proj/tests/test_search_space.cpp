#include "adarec/search_space.hpp"

#include <cmath>
#include <map>

#include "doctest.h"

using namespace adarec;
using namespace adarec::search_space;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double scl = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = scl * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("edge enumeration follows the topological order") {
    auto e1 = cell_edges(1);
    REQUIRE(e1.size() == 1);
    CHECK(e1[0] == std::pair<int, int>{0, 1});
    auto e3 = cell_edges(3);
    REQUIRE(e3.size() == 6);  // M(M+1)/2
    CHECK(e3[0] == std::pair<int, int>{0, 1});
    CHECK(e3[1] == std::pair<int, int>{0, 2});
    CHECK(e3[2] == std::pair<int, int>{1, 2});
    CHECK(e3[5] == std::pair<int, int>{2, 3});
    CHECK(cell_edges(4).size() == 10);
}

TEST_CASE("gumbel samples live on the simplex") {
    Rng rng(5);
    Var theta = constant(Tensor::vec({0.3, -1.0, 2.0, 0.0, 0.5, -0.2, 1.0, 0.1}));
    for (int i = 0; i < 200; ++i) {
        double tau = 0.1 + rng.uniform() * 5.0;
        Var y = gumbel_softmax(theta, tau, rng);
        double s = 0.0;
        for (double v : y->value.data) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(gumbel_softmax(theta, 0.0, rng), NumericError);
}

TEST_CASE("gumbel argmax frequencies follow softmax(theta)") {
    Rng rng(17);
    Tensor logits = Tensor::vec({1.0, 0.0, -0.5, 2.0, 0.3, -1.0, 0.8, 0.0});
    Var theta = constant(logits);
    Var probs = softmax(theta);
    const int samples = 100000;
    std::vector<int> hits(kNumOps, 0);
    for (int s = 0; s < samples; ++s) {
        Var y = gumbel_softmax(theta, 0.7, rng);
        int best = 0;
        for (int i = 1; i < kNumOps; ++i)
            if (y->value.at(i) > y->value.at(best)) best = i;
        ++hits[static_cast<size_t>(best)];
    }
    for (int i = 0; i < kNumOps; ++i) {
        double freq = static_cast<double>(hits[static_cast<size_t>(i)]) / samples;
        CHECK(std::abs(freq - probs->value.at(i)) < 0.01);
    }
}

TEST_CASE("low temperature with a peaked theta saturates that class") {
    Rng rng(23);
    Tensor logits = Tensor::zeros({kNumOps});
    logits.at(2) = 9.0;
    Var theta = constant(logits);
    int good = 0;
    const int samples = 2000;
    for (int s = 0; s < samples; ++s) {
        Var y = gumbel_softmax(theta, 0.01, rng);
        if (y->value.at(2) > 0.99) ++good;
    }
    CHECK(static_cast<double>(good) / samples > 0.95);
}

TEST_CASE("zero and skip candidates behave by definition") {
    Rng rng(3);
    Tensor x = random_tensor(rng, {5, 4});
    EdgeWeights w = EdgeWeights::init(4, rng);
    Var vx = constant(x);
    Var zero = candidate_op_forward(OpKind::Zero, vx, w, 1);
    for (double v : zero->value.data) CHECK(v == 0.0);
    Var skip = candidate_op_forward(OpKind::Skip, vx, w, 1);
    CHECK(skip.get() == vx.get());
}

TEST_CASE("max pool candidate matches the hand-evaluated window") {
    Rng rng(4);
    EdgeWeights w = EdgeWeights::init(1, rng);
    Var x = constant(Tensor({4, 1}, {1.0, 5.0, 2.0, 4.0}));
    Var y = candidate_op_forward(OpKind::MaxPool3, x, w, 1);
    CHECK(y->value.at(0, 0) == 1.0);
    CHECK(y->value.at(1, 0) == 5.0);
    CHECK(y->value.at(2, 0) == 5.0);
    CHECK(y->value.at(3, 0) == 5.0);
}

TEST_CASE("causal candidates never read the future") {
    Rng rng(9);
    int d = 4, t = 8;
    EdgeWeights w = EdgeWeights::init(d, rng);
    for (OpKind kind : {OpKind::CauCnn3, OpKind::CauCnn5, OpKind::MaxPool3,
                        OpKind::AvgPool3, OpKind::Skip, OpKind::Zero}) {
        Tensor x = random_tensor(rng, {t, d});
        Tensor base = candidate_op_forward(kind, constant(x), w, 2)->value;
        for (int j = 1; j < t; ++j) {
            Tensor xp = x;
            xp.at(j, 1) += 4.0;
            Tensor pert = candidate_op_forward(kind, constant(xp), w, 2)->value;
            for (int i = 0; i < j; ++i)
                for (int c = 0; c < d; ++c) {
                    CAPTURE(op_name(kind));
                    CHECK(pert.at(i, c) == base.at(i, c));
                }
        }
    }
}

TEST_CASE("all-zero edges force a zero cell output") {
    Rng rng(11);
    int m = 3, d = 4;
    ArchParams arch = ArchParams::init(m);
    for (auto& theta : arch.theta) {
        theta->value.at(static_cast<int>(OpKind::Zero)) = 50.0;
    }
    BlockWeights w = BlockWeights::init(m, d, 0, rng);
    Tensor x = random_tensor(rng, {6, d});
    Var out = cell_forward(constant(x), arch, w, CellMode::StraightThrough, 0.5, rng);
    for (double v : out->value.data) CHECK(v == 0.0);
}

TEST_CASE("single skip edge with one node passes input through") {
    Rng rng(13);
    ArchParams arch = ArchParams::init(1);
    arch.theta[0]->value.at(static_cast<int>(OpKind::Skip)) = 50.0;
    BlockWeights w = BlockWeights::init(1, 3, 0, rng);
    Tensor x = random_tensor(rng, {5, 3});
    Var out = cell_forward(constant(x), arch, w, CellMode::StraightThrough, 0.5, rng);
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(out->value.data[i] == x.data[i]);
}

TEST_CASE("straight-through forward equals the discrete forward bitwise") {
    Rng rng(29);
    int m = 3, d = 4;
    ArchParams arch = ArchParams::init(m);
    for (auto& theta : arch.theta)
        for (auto& v : theta->value.data) v = rng.normal();
    BlockWeights w = BlockWeights::init(m, d, 1, rng);
    Tensor x = random_tensor(rng, {6, d});

    CellSample sample = sample_cell(arch, 0.8, rng);
    Var st = cell_forward(constant(x), arch, w, CellMode::StraightThrough, sample);

    // discrete choice taken from the same sample's argmax
    DiscreteCell cell;
    cell.m = m;
    for (const auto& y : sample.edge_mix) {
        int best = 0;
        for (int i = 1; i < kNumOps; ++i)
            if (y->value.at(i) > y->value.at(best)) best = i;
        cell.edge_ops.push_back(static_cast<OpKind>(best));
    }
    cell.attn_weights = softmax(constant(arch.attn->value))->value.data;
    Var disc = discrete_cell_forward(constant(x), cell, w);

    REQUIRE(st->value.data.size() == disc->value.data.size());
    for (size_t i = 0; i < st->value.data.size(); ++i)
        CHECK(st->value.data[i] == disc->value.data[i]);
}

TEST_CASE("a derived cell in discrete mode reproduces straight-through values") {
    // theta peaked hard enough that every Gumbel draw argmaxes the same op
    Rng rng(59);
    int m = 2, d = 3;
    ArchParams arch = ArchParams::init(m);
    for (auto& theta : arch.theta) {
        theta->value.at(rng.uniform_int(kNumOps)) = 60.0;
    }
    BlockWeights w = BlockWeights::init(m, d, 0, rng);
    Tensor x({5, d});
    for (auto& v : x.data) v = rng.normal();

    Rng noise(4242);
    Var st = cell_forward(constant(x), arch, w, CellMode::StraightThrough, 1.0, noise);
    Var disc = cell_forward(constant(x), arch, w, CellMode::Discrete, 1.0, noise);
    REQUIRE(st->value.data.size() == disc->value.data.size());
    for (size_t i = 0; i < st->value.data.size(); ++i)
        CHECK(st->value.data[i] == disc->value.data[i]);
}

TEST_CASE("soft cell output moves continuously with theta") {
    Rng rng(31);
    int m = 2, d = 3;
    ArchParams arch = ArchParams::init(m);
    for (auto& theta : arch.theta)
        for (auto& v : theta->value.data) v = 0.3 * rng.normal();
    BlockWeights w = BlockWeights::init(m, d, 0, rng);
    Tensor x = random_tensor(rng, {5, d});

    uint64_t noise_seed = 12345;
    auto run = [&](double bump) {
        Rng noise(noise_seed);
        arch.theta[0]->value.at(0) += bump;
        Var out = cell_forward(constant(x), arch, w, CellMode::Soft, 1.0, noise);
        arch.theta[0]->value.at(0) -= bump;
        return out->value;
    };
    Tensor base = run(0.0);
    Tensor bumped = run(1e-6);
    double max_delta = 0.0;
    for (size_t i = 0; i < base.data.size(); ++i)
        max_delta = std::max(max_delta, std::abs(bumped.data[i] - base.data[i]));
    CHECK(max_delta > 0.0);
    CHECK(max_delta < 1e-4);  // O(1e-6) change stays small
}

TEST_CASE("straight-through theta gradients are nonzero on the forward path") {
    Rng rng(37);
    int m = 2, d = 3;
    ArchParams arch = ArchParams::init(m);
    BlockWeights w = BlockWeights::init(m, d, 0, rng);
    Tensor x = random_tensor(rng, {4, d});

    Rng noise(777);
    Var out = cell_forward(constant(x), arch, w, CellMode::StraightThrough, 1.0, noise);
    Var loss = mean(out);
    backward(loss);
    bool any_nonzero = false;
    for (const auto& theta : arch.theta) {
        REQUIRE(theta->has_grad());
        for (double g : theta->grad.data) any_nonzero = any_nonzero || g != 0.0;
    }
    CHECK(any_nonzero);
}

TEST_CASE("straight-through theta gradient matches the soft relaxation") {
    // same Gumbel noise, same weights: the ST backward pass is defined as the
    // gradient of the soft mixture, so it must match soft-mode finite
    // differences through that mixture
    Rng rng(41);
    int m = 1, d = 2;
    BlockWeights w = BlockWeights::init(m, d, 0, rng);
    Tensor x = random_tensor(rng, {4, d});
    Tensor theta0 = random_tensor(rng, {kNumOps}, 0.5);
    uint64_t noise_seed = 999;

    ArchParams arch = ArchParams::init(m);
    arch.theta[0]->value = theta0;
    {
        Rng noise(noise_seed);
        Var out = cell_forward(constant(x), arch, w, CellMode::StraightThrough, 1.0, noise);
        backward(mean(out));
    }
    Tensor st_grad = arch.theta[0]->grad;

    double eps = 1e-6;
    for (int i = 0; i < kNumOps; ++i) {
        auto eval_soft = [&](double bump) {
            ArchParams probe = ArchParams::init(m);
            probe.theta[0]->value = theta0;
            probe.theta[0]->value.at(i) += bump;
            probe.attn->value = arch.attn->value;
            Rng noise(noise_seed);
            Var out = cell_forward(constant(x), probe, w, CellMode::Soft, 1.0, noise);
            return mean(out)->value.data[0];
        };
        double numeric = (eval_soft(eps) - eval_soft(-eps)) / (2 * eps);
        double analytic = st_grad.at(i);
        CHECK(std::abs(analytic - numeric) /
                  std::max({std::abs(analytic), std::abs(numeric), 1e-8}) <
              1e-4);
    }
}

TEST_CASE("cell output length tracks the input length in every mode") {
    Rng rng(43);
    int d = 3;
    for (int t : {3, 7, 12}) {
        ArchParams arch = ArchParams::init(3);
        for (auto& theta : arch.theta)
            for (auto& v : theta->value.data) v = rng.normal();
        BlockWeights w = BlockWeights::init(3, d, 2, rng);
        Tensor x = random_tensor(rng, {t, d});
        Var soft = cell_forward(constant(x), arch, w, CellMode::Soft, 1.0, rng);
        CHECK(soft->value.dim(0) == t);
        Var st = cell_forward(constant(x), arch, w, CellMode::StraightThrough, 1.0, rng);
        CHECK(st->value.dim(0) == t);
        auto cell = derive_architecture(arch);
        Var disc = discrete_cell_forward(constant(x), cell, w);
        CHECK(disc->value.dim(0) == t);
    }
}

TEST_CASE("derive_architecture breaks ties toward the lowest index") {
    ArchParams arch = ArchParams::init(2);  // zero logits everywhere
    auto cell = derive_architecture(arch);
    for (OpKind k : cell.edge_ops) CHECK(k == OpKind::StdCnn3);
}

TEST_CASE("derive_architecture picks the argmax") {
    ArchParams arch = ArchParams::init(1);
    arch.theta[0]->value = Tensor::vec({0, 0, 9, 0, 0, 0, 0, 0});
    auto cell = derive_architecture(arch);
    CHECK(cell.edge_ops[0] == OpKind::CauCnn3);
}

TEST_CASE("derived cells round trip through json") {
    Rng rng(47);
    ArchParams arch = ArchParams::init(3);
    for (auto& theta : arch.theta)
        for (auto& v : theta->value.data) v = rng.normal();
    for (auto& v : arch.attn->value.data) v = rng.normal();
    auto cell = derive_architecture(arch);
    auto restored = DiscreteCell::from_json(cell.to_json());
    CHECK(restored.m == cell.m);
    CHECK(restored.edge_ops == cell.edge_ops);
    for (size_t i = 0; i < cell.attn_weights.size(); ++i)
        CHECK(restored.attn_weights[i] == cell.attn_weights[i]);
}

TEST_CASE("dot export names ops on the edges") {
    ArchParams arch = ArchParams::init(2);
    arch.theta[1]->value.at(static_cast<int>(OpKind::MaxPool3)) = 5.0;
    auto cell = derive_architecture(arch);
    auto dot = cell.to_dot();
    CHECK(dot.find("digraph") != std::string::npos);
    CHECK(dot.find("max_pool_3") != std::string::npos);
    CHECK(dot.find("std_cnn_3") != std::string::npos);
}

TEST_CASE("arch params serialize and restore") {
    Rng rng(53);
    ArchParams arch = ArchParams::init(3);
    for (auto& theta : arch.theta)
        for (auto& v : theta->value.data) v = rng.normal();
    for (auto& v : arch.attn->value.data) v = rng.normal();
    auto restored = ArchParams::from_json(arch.to_json());
    CHECK(restored.m == arch.m);
    for (size_t e = 0; e < arch.theta.size(); ++e)
        for (int i = 0; i < kNumOps; ++i)
            CHECK(restored.theta[e]->value.at(i) == arch.theta[e]->value.at(i));
}
