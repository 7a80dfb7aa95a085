#include "adarec/eval.hpp"

#include <cmath>

#include "adarec/rng.hpp"
#include "doctest.h"

using namespace adarec;
using namespace adarec::eval;

namespace {

// 20-line brute-force reference: sort candidate ids by (score desc, id asc),
// find the target's position, apply the closed forms.
struct RefMetrics {
    double mrr, hr, ndcg;
};

int ref_rank(const std::vector<double>& scores, int target) {
    std::vector<int> ids;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i) ids.push_back(i);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });
    for (size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == target) return static_cast<int>(i) + 1;
    return -1;
}

RefMetrics ref_metrics(const std::vector<int>& ranks, int n) {
    RefMetrics m{0, 0, 0};
    for (int r : ranks) {
        if (r <= n) {
            m.hr += 1;
            m.mrr += 1.0 / r;
            m.ndcg += 1.0 / std::log2(r + 1.0);
        }
    }
    m.hr /= static_cast<double>(ranks.size());
    m.mrr /= static_cast<double>(ranks.size());
    m.ndcg /= static_cast<double>(ranks.size());
    return m;
}

}  // namespace

TEST_CASE("strictly highest score ranks first") {
    CHECK(rank_of_target({0.0, 0.1, 0.9, 0.2}, 2).rank == 1);
}

TEST_CASE("full ties rank by ascending id") {
    std::vector<double> scores(6, 3.0);  // ids 1..5 all equal
    CHECK(rank_of_target(scores, 3).rank == 3);
    CHECK(rank_of_target(scores, 1).rank == 1);
    CHECK(rank_of_target(scores, 5).rank == 5);
}

TEST_CASE("hand-sorted example") {
    std::vector<double> scores{-99.0, 0.1, 0.9, 0.5};
    CHECK(rank_of_target(scores, 3).rank == 2);
}

TEST_CASE("padding target is rejected") {
    CHECK_THROWS_AS(rank_of_target({0.0, 1.0}, 0), InputError);
    CHECK_THROWS_AS(rank_of_target({0.0, 1.0}, 2), InputError);
}

TEST_CASE("single perfect rank saturates every metric") {
    auto m = metrics_at_n({{1}}, 5);
    CHECK(m.mrr == 1.0);
    CHECK(m.hr == 1.0);
    CHECK(m.ndcg == 1.0);
}

TEST_CASE("rank three at N five has closed-form metrics") {
    auto m = metrics_at_n({{3}}, 5);
    CHECK(m.mrr == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(m.hr == 1.0);
    CHECK(m.ndcg == doctest::Approx(0.5).epsilon(1e-15));  // 1/log2(4)
}

TEST_CASE("averaging over a hit and a miss") {
    auto m = metrics_at_n({{1}, {6}}, 5);
    CHECK(m.mrr == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.hr == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(m.ndcg == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("metrics match the brute-force reference on random rank lists") {
    Rng rng(404);
    for (int trial = 0; trial < 1000; ++trial) {
        int cases = 1 + rng.uniform_int(12);
        std::vector<RankResult> ranks;
        std::vector<int> raw;
        for (int c = 0; c < cases; ++c) {
            int r = 1 + rng.uniform_int(40);
            ranks.push_back({r});
            raw.push_back(r);
        }
        int n = 1 + rng.uniform_int(25);
        auto got = metrics_at_n(ranks, n);
        auto want = ref_metrics(raw, n);
        CHECK(got.mrr == want.mrr);
        CHECK(got.hr == want.hr);
        CHECK(got.ndcg == want.ndcg);
    }
}

TEST_CASE("rank_of_target matches the sort-based reference") {
    Rng rng(505);
    for (int trial = 0; trial < 500; ++trial) {
        int v = 2 + rng.uniform_int(20);
        std::vector<double> scores(static_cast<size_t>(v) + 1);
        for (auto& s : scores) s = rng.uniform_int(6);  // force ties
        int target = 1 + rng.uniform_int(v);
        CHECK(rank_of_target(scores, target).rank == ref_rank(scores, target));
    }
}

TEST_CASE("metrics are monotone in N and ordered among themselves") {
    Rng rng(606);
    std::vector<RankResult> ranks;
    for (int c = 0; c < 30; ++c) ranks.push_back({1 + rng.uniform_int(30)});
    MetricsAtN prev{0, 0, 0};
    for (int n = 1; n <= 32; ++n) {
        auto m = metrics_at_n(ranks, n);
        CHECK(m.hr >= prev.hr);
        CHECK(m.mrr >= prev.mrr);
        CHECK(m.ndcg >= prev.ndcg);
        CHECK(m.mrr <= m.hr + 1e-15);
        CHECK(m.ndcg <= m.hr + 1e-15);
        CHECK(m.hr <= 1.0);
        prev = m;
    }
}

TEST_CASE("adding a strictly worse case never raises a metric") {
    std::vector<RankResult> base{{1}, {2}, {4}};
    auto m0 = metrics_at_n(base, 5);
    base.push_back({9});
    auto m1 = metrics_at_n(base, 5);
    CHECK(m1.hr <= m0.hr);
    CHECK(m1.mrr <= m0.mrr);
    CHECK(m1.ndcg <= m0.ndcg);
}

TEST_CASE("split cases pick the right prefixes and targets") {
    data::InteractionSequence seq;
    seq.items = {0, 0, 5, 6, 7, 8};  // r = [5,6,7,8]
    auto scorer = [](const std::vector<int>& prefix) {
        // score = the id following the last prefix item wins
        std::vector<double> scores(10, 0.0);
        scores[static_cast<size_t>(prefix.back() + 1)] = 1.0;
        return scores;
    };
    // test: predict 8 from [5,6,7]; scorer says 8 -> rank 1
    auto test_ranks = rank_split(scorer, {seq}, Split::Test);
    CHECK(test_ranks[0].rank == 1);
    // val: predict 7 from [5,6]
    auto val_ranks = rank_split(scorer, {seq}, Split::Val);
    CHECK(val_ranks[0].rank == 1);
    // train: train items are [5,6]; predict 6 from [5]
    auto train_ranks = rank_split(scorer, {seq}, Split::Train);
    CHECK(train_ranks[0].rank == 1);
}

TEST_CASE("short sequences are skipped per split") {
    data::InteractionSequence two;
    two.items = {0, 0, 3, 4};
    auto scorer = [](const std::vector<int>&) {
        return std::vector<double>{0.0, 1.0, 0.5, 0.2, 0.1};
    };
    CHECK_THROWS_AS(rank_split(scorer, {two}, Split::Test), InputError);
    auto train_ranks = rank_split(scorer, {two}, Split::Train);
    CHECK(train_ranks.size() == 1);
}
