#pragma once

#include <functional>
#include <string>
#include <vector>

#include "adarec/data.hpp"

namespace adarec::eval {

// 1-based rank of the target among all non-padding items, descending score,
// ties broken by ascending item id.
struct RankResult {
    int rank = 0;
};

// scores has length V+1; index 0 (padding) is excluded from ranking.
RankResult rank_of_target(const std::vector<double>& scores, int target);

struct MetricsAtN {
    double mrr = 0.0;
    double hr = 0.0;
    double ndcg = 0.0;
};

// HR = rank <= N; MRR = 1/rank, NDCG = 1/log2(rank+1), both zero past N;
// averaged over cases.
MetricsAtN metrics_at_n(const std::vector<RankResult>& ranks, int n);

// Scores the next item after the given (unpadded) prefix.
using Scorer = std::function<std::vector<double>(const std::vector<int>& prefix)>;

// Final-position scores from a t x (V+1) logits tensor.
std::vector<double> last_row(const Tensor& logits);

enum class Split { Train, Val, Test };

// Leave-one-out evaluation pairs for one split. Sequences lacking the
// required items are skipped. Parallel over cases; thread count honors
// ADAREC_THREADS.
std::vector<RankResult> rank_split(const Scorer& scorer,
                                   const std::vector<data::InteractionSequence>& seqs,
                                   Split split);

// HR@1 over the split, the overfit-oracle metric.
double hit_rate_at_1(const Scorer& scorer,
                     const std::vector<data::InteractionSequence>& seqs, Split split);

// teacher time / student time over `batches` timed scoring passes.
double measure_speedup(const Scorer& teacher, const Scorer& student,
                       const std::vector<data::InteractionSequence>& seqs,
                       int batches = 100);

int worker_threads();  // ADAREC_THREADS cap, default hardware concurrency

}  // namespace adarec::eval
