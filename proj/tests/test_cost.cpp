#include "adarec/cost.hpp"

#include <cmath>

#include "doctest.h"

using namespace adarec;
using namespace adarec::cost;
using search_space::ArchParams;
using search_space::all_ops;
using search_space::sample_cell;

TEST_CASE("parameterless candidates cost nothing") {
    CHECK(op_param_count(OpKind::Zero, 8) == 0);
    CHECK(op_param_count(OpKind::Skip, 8) == 0);
    CHECK(op_param_count(OpKind::MaxPool3, 8) == 0);
    CHECK(op_flops(OpKind::Zero, 8, 16) == 0);
    CHECK(op_flops(OpKind::Skip, 8, 16) == 0);
}

TEST_CASE("conv parameter counts enumerate kernel plus bias") {
    CHECK(op_param_count(OpKind::StdCnn3, 8) == 3 * 8 * 8 + 8);  // 200
    CHECK(op_param_count(OpKind::StdCnn5, 4) == 5 * 4 * 4 + 4);
    CHECK(op_param_count(OpKind::CauCnn3, 8) == op_param_count(OpKind::StdCnn3, 8));
}

TEST_CASE("flop counts match the instrumented formulas") {
    CHECK(op_flops(OpKind::StdCnn3, 2, 4) == 96);   // 2*3*2*2*4
    CHECK(op_flops(OpKind::MaxPool3, 2, 4) == 24);  // 3*2*4
    CHECK(op_flops(OpKind::AvgPool3, 2, 4) == 24);
    CHECK(op_flops(OpKind::CauCnn5, 3, 7) == 2 * 5 * 3 * 3 * 7);
}

TEST_CASE("normalization pins the maxima at one and zero op at zero") {
    auto table = CostTable::build(8, 16);
    double max_size = 0.0, max_flops = 0.0;
    for (OpKind k : all_ops()) {
        auto i = static_cast<size_t>(k);
        CHECK(table.norm_size[i] >= 0.0);
        CHECK(table.norm_size[i] <= 1.0);
        CHECK(table.norm_flops[i] >= 0.0);
        CHECK(table.norm_flops[i] <= 1.0);
        max_size = std::max(max_size, table.norm_size[i]);
        max_flops = std::max(max_flops, table.norm_flops[i]);
    }
    CHECK(max_size == 1.0);
    CHECK(max_flops == 1.0);
    CHECK(table.norm_size[static_cast<size_t>(OpKind::StdCnn5)] == 1.0);
    CHECK(table.norm_flops[static_cast<size_t>(OpKind::CauCnn5)] == 1.0);
    CHECK(table.norm_size[static_cast<size_t>(OpKind::Zero)] == 0.0);
    CHECK(table.norm_flops[static_cast<size_t>(OpKind::Zero)] == 0.0);
}

TEST_CASE("deterministic zero edges give zero efficiency loss") {
    Rng rng(3);
    auto table = CostTable::build(4, 8);
    ArchParams arch = ArchParams::init(3);
    for (auto& theta : arch.theta) theta->value.at(static_cast<int>(OpKind::Zero)) = 200.0;
    Var loss = efficiency_loss(arch, table, 0.05, rng);
    CHECK(loss->value.data[0] < 1e-12);

    search_space::DiscreteCell cell = search_space::derive_architecture(arch);
    CHECK(discrete_efficiency_loss(cell, table) == 0.0);
}

TEST_CASE("deterministic max-cost edges cost edges times two") {
    Rng rng(5);
    auto table = CostTable::build(4, 8);
    ArchParams arch = ArchParams::init(3);
    for (auto& theta : arch.theta)
        theta->value.at(static_cast<int>(OpKind::StdCnn5)) = 200.0;
    // std_cnn_5 maximizes size but cau_cnn_5 shares the flops maximum, so the
    // discrete value is exact: size 1 + flops 1 per edge
    search_space::DiscreteCell cell = search_space::derive_architecture(arch);
    CHECK(discrete_efficiency_loss(cell, table) == doctest::Approx(12.0).epsilon(1e-12));
    Var loss = efficiency_loss(arch, table, 0.05, rng);
    CHECK(loss->value.data[0] == doctest::Approx(12.0).epsilon(1e-6));
}

TEST_CASE("high-temperature expected loss approaches the candidate mean") {
    Rng rng(7);
    auto table = CostTable::build(4, 8);
    double mean_cost = 0.0;
    for (OpKind k : all_ops()) mean_cost += table.edge_cost(k);
    mean_cost /= kNumOps;

    ArchParams arch = ArchParams::init(3);  // uniform logits
    const int trials = 20000;
    double acc = 0.0;
    for (int i = 0; i < trials; ++i) {
        acc += efficiency_loss(arch, table, 50.0, rng)->value.data[0];
    }
    double expect = 6.0 * mean_cost;  // six edges
    CHECK(std::abs(acc / trials - expect) < 0.02 * expect);
}

TEST_CASE("raising a costlier op's logit never lowers the soft loss") {
    Rng rng(11);
    auto table = CostTable::build(4, 8);
    for (int trial = 0; trial < 50; ++trial) {
        ArchParams arch = ArchParams::init(2);
        for (auto& theta : arch.theta)
            for (auto& v : theta->value.data) v = rng.normal();
        // pick an edge and a direction toward a costlier op
        int edge = rng.uniform_int(arch.edge_count());
        OpKind costly = OpKind::StdCnn5;

        uint64_t noise_seed = rng.next_u64();
        auto eval = [&](double bump) {
            arch.theta[static_cast<size_t>(edge)]->value.at(static_cast<int>(costly)) += bump;
            Rng noise(noise_seed);
            double v = efficiency_loss(arch, table, 1.0, noise)->value.data[0];
            arch.theta[static_cast<size_t>(edge)]->value.at(static_cast<int>(costly)) -= bump;
            return v;
        };
        double base = eval(0.0);
        double bumped = eval(1e-4);
        CHECK(bumped >= base - 1e-12);
    }
}

TEST_CASE("efficiency loss is differentiable in theta") {
    Rng rng(13);
    auto table = CostTable::build(4, 8);
    ArchParams arch = ArchParams::init(2);
    Rng noise(99);
    auto sample = sample_cell(arch, 1.0, noise);
    Var loss = efficiency_loss(sample, table);
    backward(loss);
    bool any = false;
    for (const auto& theta : arch.theta) {
        REQUIRE(theta->has_grad());
        for (double g : theta->grad.data) any = any || g != 0.0;
    }
    CHECK(any);
}

TEST_CASE("cost table serializes every candidate") {
    auto table = CostTable::build(4, 8);
    auto dump = table.to_json();
    for (OpKind k : all_ops()) {
        CHECK(dump.find(search_space::op_name(k)) != std::string::npos);
    }
}
