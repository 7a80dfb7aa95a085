#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adarec/rng.hpp"
#include "adarec/tensor.hpp"

namespace adarec::data {

struct InteractionRecord {
    std::string user;
    std::string item;
    int64_t ts = 0;
};

// Flat record list, grouped by user (lexicographic) and chronologically
// ordered within each user, ties broken by item id.
struct InteractionLog {
    std::vector<InteractionRecord> records;
};

// Dense ids are contiguous 1..V; id 0 is reserved for padding.
class Vocabulary {
public:
    int size() const { return static_cast<int>(id_to_item_.size()) - 1; }

    int encode(const std::string& item) const;
    const std::string& decode(int id) const;
    bool contains(const std::string& item) const;

    // Builds ids in lexicographic item order.
    static Vocabulary from_items(const std::vector<std::string>& items);

    std::string to_json() const;
    static Vocabulary from_json(const std::string& text);

private:
    std::map<std::string, int> item_to_id_;
    std::vector<std::string> id_to_item_{""};  // index 0 = padding
};

// Fixed-length, left-padded window of dense item ids.
struct InteractionSequence {
    std::vector<int> items;

    int length() const { return static_cast<int>(items.size()); }
    int pad_count() const {
        int n = 0;
        while (n < length() && items[static_cast<size_t>(n)] == 0) ++n;
        return n;
    }
    int real_count() const { return length() - pad_count(); }
};

struct SequenceSet {
    std::vector<InteractionSequence> sequences;
    Vocabulary vocab;
    int max_len = 0;
};

// file format: tsv = "user\titem\ttimestamp", jsonl = {"user","item","ts"}
InteractionLog ingest(const std::string& path, const std::string& format);

// Chunks each user's history into non-overlapping windows of length t
// anchored at the most recent end; short oldest chunks are left-padded and
// chunks with fewer than 2 real items are dropped.
SequenceSet build_sequences(const InteractionLog& log, int t, int min_count = 1);

struct SplitSequence {
    InteractionSequence train;  // re-left-padded to the original length
    std::optional<int> val_target;
    std::optional<int> test_target;
};

SplitSequence leave_one_out_split(const InteractionSequence& seq);

// Training prefixes of every sequence (full sequences when only two items).
std::vector<InteractionSequence> train_split(const SequenceSet& set);

// Deterministic synthetic scene: order-k Markov chain whose next item is a
// fixed function of the previous k items, so the data is memorizable.
struct MarkovSceneConfig {
    int order = 1;
    int vocab_size = 60;
    int num_users = 100;
    int min_len = 8;
    int max_len = 24;
    uint64_t seed = 1;
};

InteractionLog markov_scene(const MarkovSceneConfig& cfg);

void write_sequences_jsonl(const std::string& path, const SequenceSet& set);
SequenceSet read_sequences_jsonl(const std::string& seq_path,
                                 const std::string& vocab_path);
void write_vocab_json(const std::string& path, const Vocabulary& vocab);
void write_log_tsv(const std::string& path, const InteractionLog& log);

}  // namespace adarec::data
