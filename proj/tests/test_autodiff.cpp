#include "adarec/graph.hpp"

#include <cmath>

#include "doctest.h"

using namespace adarec;

TEST_CASE("relu clamps negatives") {
    Var x = constant(Tensor::vec({-1.0, 0.0, 2.0}));
    Var y = relu(x);
    CHECK(y->value.at(0) == 0.0);
    CHECK(y->value.at(1) == 0.0);
    CHECK(y->value.at(2) == 2.0);
}

TEST_CASE("softmax of equal logits is uniform") {
    Var y = softmax(constant(Tensor::vec({0.0, 0.0})));
    CHECK(y->value.at(0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(y->value.at(1) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("softmax rows are normalized and nonnegative") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x({4, 9});
        for (auto& v : x.data) v = rng.uniform(-30.0, 30.0);
        Var y = softmax(constant(x));
        for (int r = 0; r < 4; ++r) {
            double s = 0.0;
            for (int j = 0; j < 9; ++j) {
                CHECK(y->value.at(r, j) >= 0.0);
                s += y->value.at(r, j);
            }
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("zero kernel annihilates causal conv") {
    Rng rng(3);
    Tensor x({6, 2});
    for (auto& v : x.data) v = rng.normal();
    Var y = causal_dilated_conv1d(constant(x), constant(Tensor::zeros({3, 2, 2})),
                                  constant(Tensor::zeros({2})), 2);
    for (double v : y->value.data) CHECK(v == 0.0);
}

TEST_CASE("causal conv never reads the future") {
    Rng rng(11);
    Tensor k({3, 2, 2});
    for (auto& v : k.data) v = rng.normal();
    Tensor b({2});
    for (int dil : {1, 2, 4}) {
        Tensor x({8, 2});
        for (auto& v : x.data) v = rng.normal();
        Tensor base = causal_dilated_conv1d(constant(x), constant(k), constant(b), dil)->value;
        for (int j = 1; j < 8; ++j) {
            Tensor xp = x;
            xp.at(j, 0) += 5.0;
            xp.at(j, 1) -= 3.0;
            Tensor pert = causal_dilated_conv1d(constant(xp), constant(k), constant(b), dil)->value;
            for (int i = 0; i < j; ++i)
                for (int c = 0; c < 2; ++c) CHECK(pert.at(i, c) == base.at(i, c));
        }
    }
}

TEST_CASE("backward on sum of 2x gives twos") {
    Var x = param(Tensor::vec({1.0, -2.0, 0.5}));
    Var loss = sum(scale(x, 2.0));
    backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(x->grad.at(i) == 2.0);
}

TEST_CASE("backward on mse(x, x) is zero") {
    Var x = param(Tensor::vec({0.3, -1.2, 7.0}));
    Var loss = mse(x, x);
    CHECK(loss->value.data[0] == 0.0);
    backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(x->grad.at(i) == 0.0);
}

TEST_CASE("backward rejects non-scalar root") {
    Var x = param(Tensor::vec({1.0, 2.0}));
    Var y = scale(x, 3.0);
    CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("kl of softmaxes matches finite differences") {
    Rng rng(42);
    Tensor a({1, 5});
    Tensor b({1, 5});
    for (auto& v : a.data) v = rng.normal();
    for (auto& v : b.data) v = rng.normal();
    double err_a = finite_difference_check(
        [&](const Var& x) { return kl_divergence(softmax(x), softmax(constant(b))); },
        a, 1e-5);
    double err_b = finite_difference_check(
        [&](const Var& x) { return kl_divergence(softmax(constant(a)), softmax(x)); },
        b, 1e-5);
    CHECK(err_a < 1e-4);
    CHECK(err_b < 1e-4);
}

TEST_CASE("finite differences on x squared are nearly exact") {
    // mse(x, 0) over a length-1 vector is exactly x^2
    double err = finite_difference_check(
        [](const Var& x) { return mse(x, constant(Tensor::vec({0.0}))); },
        Tensor::vec({3.0}), 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("finite differences on layer-norm plus sum") {
    Rng rng(5);
    Tensor x({8});
    for (auto& v : x.data) v = rng.normal();
    Tensor g = Tensor::full({8}, 1.3);
    Tensor b = Tensor::full({8}, -0.2);
    double err = finite_difference_check(
        [&](const Var& v) {
            Rng pr(17);
            Tensor w({8});
            for (auto& ww : w.data) ww = pr.uniform(-1.0, 1.0);
            return sum(cmul(layer_norm(v, constant(g), constant(b)), w));
        },
        x, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences on a constant function are zero") {
    double err = finite_difference_check(
        [](const Var& x) { return sum(scale(x, 0.0)); }, Tensor::vec({1.0, 2.0}), 1e-5);
    CHECK(err == 0.0);
}

TEST_CASE("op library exposes exactly the supported primitive set") {
    std::vector<std::string> names;
    for (const auto& op : op_library()) names.push_back(op.name);
    std::vector<std::string> expected{
        "add",           "multiply-by-scalar", "matrix-multiply",
        "embedding-gather", "causal-dilated-conv1d", "relu",
        "layer-norm",    "softmax",            "log",
        "mean-squared-error", "kl-divergence", "dropout",
        "max-pool1d",    "avg-pool1d",         "attention",
        "sum",           "mean"};
    CHECK(names == expected);
}

TEST_CASE("every library primitive passes the gradient battery") {
    Rng rng(2024);
    for (const auto& op : op_library()) {
        CAPTURE(op.name);
        for (int inst = 0; inst < 20; ++inst) {
            auto cases = op.make_cases(rng);
            for (const auto& c : cases) {
                CAPTURE(c.label);
                double err = finite_difference_check(c.build, c.point, 1e-5);
                CHECK(err < 1e-4);
            }
        }
    }
}

TEST_CASE("same-padding conv passes gradient checks") {
    Rng rng(77);
    for (int inst = 0; inst < 10; ++inst) {
        Tensor x({5, 3});
        for (auto& v : x.data) v = rng.normal();
        Tensor k3({3, 3, 3});
        for (auto& v : k3.data) v = 0.4 * rng.normal();
        Tensor b3({3});
        uint64_t s = rng.next_u64();

        double err = finite_difference_check(
            [&, s](const Var& v) {
                Rng pr(s);
                Tensor w({5, 3});
                for (auto& ww : w.data) ww = pr.uniform(-1.0, 1.0);
                return sum(cmul(conv1d_same(v, constant(k3), constant(b3)), w));
            },
            x, 1e-5);
        CHECK(err < 1e-4);

        double kerr = finite_difference_check(
            [&, s](const Var& v) {
                Rng pr(s);
                Tensor w({5, 3});
                for (auto& ww : w.data) ww = pr.uniform(-1.0, 1.0);
                return sum(cmul(conv1d_same(constant(x), v, constant(b3)), w));
            },
            k3, 1e-5);
        CHECK(kerr < 1e-4);
    }
}

TEST_CASE("nll and mask_rows pass gradient checks") {
    Rng rng(79);
    for (int inst = 0; inst < 10; ++inst) {
        Tensor logits({4, 5});
        for (auto& v : logits.data) v = rng.normal();
        std::vector<int> targets{1, 4, 0, 2};
        std::vector<double> w{1.0, 0.0, 1.0, 1.0};
        double err = finite_difference_check(
            [&](const Var& v) { return nll_rows(softmax(v), targets, w); }, logits,
            1e-5);
        CHECK(err < 1e-4);

        Tensor x({4, 3});
        for (auto& v : x.data) v = rng.normal();
        std::vector<double> mask{1.0, 0.0, 1.0, 0.0};
        uint64_t s = rng.next_u64();
        double merr = finite_difference_check(
            [&, s](const Var& v) {
                Rng pr(s);
                Tensor pw({4, 3});
                for (auto& ww : pw.data) ww = pr.uniform(-1.0, 1.0);
                return sum(cmul(mask_rows(v, mask), pw));
            },
            x, 1e-5);
        CHECK(merr < 1e-4);
    }
}

TEST_CASE("weighted_sum gradients and one-hot exactness") {
    Rng rng(91);
    Tensor a({4, 2}), b({4, 2}), c({4, 2});
    for (auto& v : a.data) v = rng.normal();
    for (auto& v : b.data) v = rng.normal();
    for (auto& v : c.data) v = rng.normal();

    SUBCASE("gradient wrt weights") {
        double err = finite_difference_check(
            [&](const Var& w) {
                Rng pr(5);
                Tensor pw({4, 2});
                for (auto& ww : pw.data) ww = pr.uniform(-1.0, 1.0);
                return sum(cmul(
                    weighted_sum({constant(a), constant(b), constant(c)}, w), pw));
            },
            Tensor::vec({0.5, -0.3, 1.2}), 1e-5);
        CHECK(err < 1e-4);
    }

    SUBCASE("gradient wrt one input") {
        double err = finite_difference_check(
            [&](const Var& x) {
                Rng pr(6);
                Tensor pw({4, 2});
                for (auto& ww : pw.data) ww = pr.uniform(-1.0, 1.0);
                return sum(cmul(weighted_sum({x, constant(b), constant(c)},
                                             constant(Tensor::vec({0.5, -0.3, 1.2}))),
                                pw));
            },
            a, 1e-5);
        CHECK(err < 1e-4);
    }

    SUBCASE("exact one-hot forward") {
        Var out = weighted_sum({constant(a), constant(b), constant(c)},
                               constant(Tensor::vec({0.0, 1.0, 0.0})));
        for (size_t i = 0; i < b.data.size(); ++i) CHECK(out->value.data[i] == b.data[i]);
    }
}

TEST_CASE("straight_through forwards one-hot and passes gradient through") {
    Var y = param(Tensor::vec({0.1, 0.7, 0.2}));
    Var st = straight_through(y);
    CHECK(st->value.at(0) == 0.0);
    CHECK(st->value.at(1) == 1.0);
    CHECK(st->value.at(2) == 0.0);
    Var loss = dot(st, constant(Tensor::vec({3.0, 5.0, 7.0})));
    backward(loss);
    CHECK(y->grad.at(0) == 3.0);
    CHECK(y->grad.at(1) == 5.0);
    CHECK(y->grad.at(2) == 7.0);
}

TEST_CASE("same seed rebuilds bit-identical graphs") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor x({6, 4});
        for (auto& v : x.data) v = rng.normal();
        Var xv = constant(x);
        Var d = dropout(xv, 0.3, rng);
        Var g = constant(Tensor::full({4}, 1.0));
        Var b = constant(Tensor::zeros({4}));
        Var out = sum(layer_norm(relu(d), g, b));
        return out->value.data[0];
    };
    double a = run(12345);
    double b = run(12345);
    double c = run(54321);
    CHECK(a == b);
    CHECK(a != c);
}

TEST_CASE("shape mismatches name both shapes") {
    Var a = constant(Tensor::zeros({2, 3}));
    Var b = constant(Tensor::zeros({4, 5}));
    try {
        add(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x5]") != std::string::npos);
    }
}

TEST_CASE("non-finite values are rejected") {
    Var x = constant(Tensor::vec({-1.0, 0.0}));
    CHECK_THROWS_AS(vlog(x), NumericError);
}

TEST_CASE("max pool over a left-padded window") {
    Var x = constant(Tensor({4, 1}, {1.0, 5.0, 2.0, 4.0}));
    Var y = max_pool1d(x, 3);
    CHECK(y->value.at(0, 0) == 1.0);
    CHECK(y->value.at(1, 0) == 5.0);
    CHECK(y->value.at(2, 0) == 5.0);
    CHECK(y->value.at(3, 0) == 5.0);
}

TEST_CASE("attention rows are causal") {
    Rng rng(8);
    Tensor q({6, 4}), k({6, 4}), v({6, 4});
    for (auto& x : q.data) x = rng.normal();
    for (auto& x : k.data) x = rng.normal();
    for (auto& x : v.data) x = rng.normal();
    Tensor base = attention(constant(q), constant(k), constant(v))->value;
    for (int j = 1; j < 6; ++j) {
        Tensor k2 = k, v2 = v, q2 = q;
        k2.at(j, 0) += 2.0;
        v2.at(j, 1) -= 4.0;
        q2.at(j, 2) += 1.0;
        Tensor pert = attention(constant(q2), constant(k2), constant(v2))->value;
        for (int i = 0; i < j; ++i)
            for (int c = 0; c < 4; ++c) CHECK(pert.at(i, c) == base.at(i, c));
    }
}
