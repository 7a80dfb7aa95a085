#include "adarec/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <thread>

#include "adarec/tensor.hpp"

namespace adarec::eval {

std::vector<double> last_row(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("last_row: logits must be rank 2");
    int t = logits.dim(0), w = logits.dim(1);
    std::vector<double> out(static_cast<size_t>(w));
    for (int j = 0; j < w; ++j) out[static_cast<size_t>(j)] = logits.at(t - 1, j);
    return out;
}

RankResult rank_of_target(const std::vector<double>& scores, int target) {
    int v = static_cast<int>(scores.size()) - 1;
    if (target < 1 || target > v) {
        throw InputError("rank target out of vocabulary: " + std::to_string(target));
    }
    double ts = scores[static_cast<size_t>(target)];
    int rank = 1;
    for (int i = 1; i <= v; ++i) {
        if (i == target) continue;
        double s = scores[static_cast<size_t>(i)];
        if (s > ts || (s == ts && i < target)) ++rank;
    }
    return {rank};
}

MetricsAtN metrics_at_n(const std::vector<RankResult>& ranks, int n) {
    if (n < 1) throw InputError("metrics need N >= 1");
    if (ranks.empty()) throw InputError("metrics need at least one rank");
    MetricsAtN m;
    for (const auto& r : ranks) {
        if (r.rank <= n) {
            m.hr += 1.0;
            m.mrr += 1.0 / r.rank;
            m.ndcg += 1.0 / std::log2(static_cast<double>(r.rank) + 1.0);
        }
    }
    double cnt = static_cast<double>(ranks.size());
    m.hr /= cnt;
    m.mrr /= cnt;
    m.ndcg /= cnt;
    return m;
}

int worker_threads() {
    unsigned hw = std::thread::hardware_concurrency();
    int threads = hw == 0 ? 1 : static_cast<int>(hw);
    if (const char* env = std::getenv("ADAREC_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) threads = std::min(threads, cap);
    }
    return threads;
}

namespace {

struct EvalCase {
    std::vector<int> prefix;
    int target = 0;
};

// Leave-one-out cases: real items r_1..r_m; test predicts r_m from the
// rest, validation predicts r_{m-1}, and the train-split case predicts the
// last item that training actually saw.
std::optional<EvalCase> case_for(const data::InteractionSequence& seq, Split split) {
    std::vector<int> real;
    for (int id : seq.items)
        if (id != 0) real.push_back(id);
    int m = static_cast<int>(real.size());
    EvalCase c;
    switch (split) {
        case Split::Test:
            if (m < 3) return std::nullopt;
            c.prefix.assign(real.begin(), real.end() - 1);
            c.target = real[static_cast<size_t>(m) - 1];
            return c;
        case Split::Val:
            if (m < 3) return std::nullopt;
            c.prefix.assign(real.begin(), real.end() - 2);
            c.target = real[static_cast<size_t>(m) - 2];
            return c;
        case Split::Train: {
            // train items are r_1..r_{m-2} (all of them when m == 2)
            int train_len = m == 2 ? 2 : m - 2;
            if (train_len < 2) return std::nullopt;
            c.prefix.assign(real.begin(), real.begin() + train_len - 1);
            c.target = real[static_cast<size_t>(train_len) - 1];
            return c;
        }
    }
    return std::nullopt;
}

}  // namespace

std::vector<RankResult> rank_split(const Scorer& scorer,
                                   const std::vector<data::InteractionSequence>& seqs,
                                   Split split) {
    std::vector<EvalCase> cases;
    for (const auto& seq : seqs) {
        auto c = case_for(seq, split);
        if (c) cases.push_back(std::move(*c));
    }
    if (cases.empty()) throw InputError("split has no evaluable sequences");

    std::vector<RankResult> ranks(cases.size());
    int threads = std::min<int>(worker_threads(), static_cast<int>(cases.size()));
    if (threads <= 1) {
        for (size_t i = 0; i < cases.size(); ++i) {
            ranks[i] = rank_of_target(scorer(cases[i].prefix), cases[i].target);
        }
        return ranks;
    }
    // results land at fixed indices, so the outcome is thread-count
    // independent
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w]() {
            for (size_t i = static_cast<size_t>(w); i < cases.size();
                 i += static_cast<size_t>(threads)) {
                ranks[i] = rank_of_target(scorer(cases[i].prefix), cases[i].target);
            }
        });
    }
    for (auto& th : pool) th.join();
    return ranks;
}

double hit_rate_at_1(const Scorer& scorer,
                     const std::vector<data::InteractionSequence>& seqs, Split split) {
    auto ranks = rank_split(scorer, seqs, split);
    return metrics_at_n(ranks, 1).hr;
}

double measure_speedup(const Scorer& teacher, const Scorer& student,
                       const std::vector<data::InteractionSequence>& seqs,
                       int batches) {
    std::vector<EvalCase> cases;
    for (const auto& seq : seqs) {
        auto c = case_for(seq, Split::Test);
        if (c) cases.push_back(std::move(*c));
        if (static_cast<int>(cases.size()) >= batches) break;
    }
    if (cases.empty()) throw InputError("no sequences to time");

    auto time_scorer = [&](const Scorer& s) {
        auto start = std::chrono::steady_clock::now();
        for (const auto& c : cases) {
            volatile double sink = s(c.prefix)[1];
            (void)sink;
        }
        auto end = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(end - start).count();
    };
    // warm-up pass keeps first-touch noise out of the ratio
    time_scorer(student);
    time_scorer(teacher);
    double t_teacher = time_scorer(teacher);
    double t_student = time_scorer(student);
    if (t_student <= 0.0) return 1.0;
    return t_teacher / t_student;
}

}  // namespace adarec::eval
