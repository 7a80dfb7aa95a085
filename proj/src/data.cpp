#include "adarec/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace adarec::data {

using nlohmann::json;

namespace {

void sort_log(std::vector<InteractionRecord>& records) {
    std::sort(records.begin(), records.end(),
              [](const InteractionRecord& a, const InteractionRecord& b) {
                  if (a.user != b.user) return a.user < b.user;
                  if (a.ts != b.ts) return a.ts < b.ts;
                  return a.item < b.item;
              });
}

}  // namespace

int Vocabulary::encode(const std::string& item) const {
    auto it = item_to_id_.find(item);
    if (it == item_to_id_.end()) {
        throw InputError("item not in vocabulary: " + item);
    }
    return it->second;
}

const std::string& Vocabulary::decode(int id) const {
    if (id <= 0 || id >= static_cast<int>(id_to_item_.size())) {
        throw InputError("dense id out of range: " + std::to_string(id));
    }
    return id_to_item_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& item) const {
    return item_to_id_.count(item) > 0;
}

Vocabulary Vocabulary::from_items(const std::vector<std::string>& items) {
    std::set<std::string> uniq(items.begin(), items.end());
    Vocabulary v;
    for (const auto& item : uniq) {
        v.id_to_item_.push_back(item);
        v.item_to_id_[item] = static_cast<int>(v.id_to_item_.size()) - 1;
    }
    return v;
}

std::string Vocabulary::to_json() const {
    json j;
    j["items"] = json::array();
    for (size_t i = 1; i < id_to_item_.size(); ++i) j["items"].push_back(id_to_item_[i]);
    return j.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& text) {
    json j = json::parse(text);
    Vocabulary v;
    for (const auto& item : j.at("items")) {
        v.id_to_item_.push_back(item.get<std::string>());
        v.item_to_id_[v.id_to_item_.back()] = static_cast<int>(v.id_to_item_.size()) - 1;
    }
    return v;
}

InteractionLog ingest(const std::string& path, const std::string& format) {
    if (format != "tsv" && format != "jsonl") {
        throw InputError("unknown input format: " + format);
    }
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file: " + path);

    InteractionLog log;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        InteractionRecord rec;
        if (format == "tsv") {
            std::istringstream ss(line);
            std::string ts;
            if (!std::getline(ss, rec.user, '\t') || !std::getline(ss, rec.item, '\t') ||
                !std::getline(ss, ts, '\t') || rec.user.empty() || rec.item.empty()) {
                throw InputError(path + ":" + std::to_string(lineno) +
                                 ": expected user\\titem\\ttimestamp");
            }
            try {
                size_t pos = 0;
                rec.ts = std::stoll(ts, &pos);
                if (pos != ts.size()) throw std::invalid_argument(ts);
            } catch (const std::exception&) {
                throw InputError(path + ":" + std::to_string(lineno) +
                                 ": bad timestamp '" + ts + "'");
            }
        } else {
            json j;
            try {
                j = json::parse(line);
                rec.user = j.at("user").get<std::string>();
                rec.item = j.at("item").get<std::string>();
                rec.ts = j.at("ts").get<int64_t>();
            } catch (const std::exception& e) {
                throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        log.records.push_back(std::move(rec));
    }
    if (log.records.empty()) throw InputError("empty input file: " + path);
    sort_log(log.records);
    return log;
}

SequenceSet build_sequences(const InteractionLog& log, int t, int min_count) {
    if (t < 2) throw InputError("sequence length t must be >= 2");

    std::map<std::string, int> counts;
    for (const auto& r : log.records) ++counts[r.item];

    // per-user chronological item lists, rare items filtered out
    std::map<std::string, std::vector<std::string>> per_user;
    {
        auto sorted = log.records;
        sort_log(sorted);
        for (const auto& r : sorted) {
            if (counts[r.item] < min_count) continue;
            per_user[r.user].push_back(r.item);
        }
    }

    // windows of length t anchored at the most recent end; only the oldest
    // window can be short
    std::vector<std::vector<std::string>> chunks;
    for (const auto& [user, items] : per_user) {
        int n = static_cast<int>(items.size());
        std::vector<std::vector<std::string>> user_chunks;
        int end = n;
        while (end > 0) {
            int start = std::max(0, end - t);
            std::vector<std::string> chunk(items.begin() + start, items.begin() + end);
            if (static_cast<int>(chunk.size()) >= 2) {
                user_chunks.push_back(std::move(chunk));
            }
            end = start;
        }
        // oldest-first so concatenation reconstructs the retained history
        for (auto it = user_chunks.rbegin(); it != user_chunks.rend(); ++it) {
            chunks.push_back(std::move(*it));
        }
    }

    std::vector<std::string> retained;
    for (const auto& c : chunks) retained.insert(retained.end(), c.begin(), c.end());

    SequenceSet set;
    set.vocab = Vocabulary::from_items(retained);
    set.max_len = t;
    for (const auto& c : chunks) {
        InteractionSequence seq;
        seq.items.assign(static_cast<size_t>(t), 0);
        int pad = t - static_cast<int>(c.size());
        for (size_t i = 0; i < c.size(); ++i) {
            seq.items[static_cast<size_t>(pad) + i] = set.vocab.encode(c[i]);
        }
        set.sequences.push_back(std::move(seq));
    }
    return set;
}

SplitSequence leave_one_out_split(const InteractionSequence& seq) {
    int t = seq.length();
    int pad = seq.pad_count();
    int real = t - pad;
    if (real < 2) throw InputError("sequence has fewer than 2 real items");

    SplitSequence out;
    out.train.items.assign(static_cast<size_t>(t), 0);
    if (real == 2) {
        out.train = seq;  // train-only, no held-out targets
        return out;
    }
    out.test_target = seq.items[static_cast<size_t>(t) - 1];
    out.val_target = seq.items[static_cast<size_t>(t) - 2];
    int train_real = real - 2;
    for (int i = 0; i < train_real; ++i) {
        out.train.items[static_cast<size_t>(t - train_real + i)] =
            seq.items[static_cast<size_t>(pad + i)];
    }
    return out;
}

std::vector<InteractionSequence> train_split(const SequenceSet& set) {
    std::vector<InteractionSequence> out;
    for (const auto& seq : set.sequences) {
        out.push_back(leave_one_out_split(seq).train);
    }
    return out;
}

InteractionLog markov_scene(const MarkovSceneConfig& cfg) {
    if (cfg.order < 1 || cfg.vocab_size < 2 || cfg.num_users < 1 ||
        cfg.min_len < 2 || cfg.max_len < cfg.min_len) {
        throw InputError("bad synthetic scene configuration");
    }
    Rng rng(derive_seed(cfg.seed, 0x5ce11e));

    // deterministic transition: next = perm[(sum_i coeff_i * prev_i) mod V]
    std::vector<int> perm(static_cast<size_t>(cfg.vocab_size));
    for (int i = 0; i < cfg.vocab_size; ++i) perm[static_cast<size_t>(i)] = i;
    rng.shuffle(perm);
    std::vector<int64_t> coeff(static_cast<size_t>(cfg.order));
    for (auto& c : coeff) c = 1 + rng.uniform_int(1000);

    auto next_item = [&](const std::vector<int>& hist) {
        int64_t acc = 0;
        int k = cfg.order;
        int n = static_cast<int>(hist.size());
        for (int i = 0; i < k; ++i) {
            int idx = n - 1 - i;
            int it = idx >= 0 ? hist[static_cast<size_t>(idx)] : 0;
            acc += coeff[static_cast<size_t>(i)] * it;
        }
        return perm[static_cast<size_t>(acc % cfg.vocab_size)];
    };

    InteractionLog log;
    int width = static_cast<int>(std::to_string(cfg.num_users - 1).size());
    for (int u = 0; u < cfg.num_users; ++u) {
        std::string uid = std::to_string(u);
        uid = "u" + std::string(static_cast<size_t>(width) - uid.size(), '0') + uid;
        int len = cfg.min_len + rng.uniform_int(cfg.max_len - cfg.min_len + 1);
        std::vector<int> items;
        items.push_back(rng.uniform_int(cfg.vocab_size));
        while (static_cast<int>(items.size()) < len) items.push_back(next_item(items));
        for (size_t i = 0; i < items.size(); ++i) {
            InteractionRecord rec;
            rec.user = uid;
            std::string iid = std::to_string(items[i]);
            rec.item = "i" + std::string(4 - std::min<size_t>(4, iid.size()), '0') + iid;
            rec.ts = static_cast<int64_t>(i);
            log.records.push_back(std::move(rec));
        }
    }
    sort_log(log.records);
    return log;
}

void write_sequences_jsonl(const std::string& path, const SequenceSet& set) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    for (const auto& seq : set.sequences) {
        json j = seq.items;
        out << j.dump() << "\n";
    }
}

SequenceSet read_sequences_jsonl(const std::string& seq_path,
                                 const std::string& vocab_path) {
    std::ifstream vin(vocab_path);
    if (!vin) throw MissingArtifact("missing vocabulary file: " + vocab_path);
    std::stringstream vbuf;
    vbuf << vin.rdbuf();

    SequenceSet set;
    set.vocab = Vocabulary::from_json(vbuf.str());

    std::ifstream in(seq_path);
    if (!in) throw MissingArtifact("missing sequence file: " + seq_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw InputError(seq_path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        InteractionSequence seq;
        for (const auto& v : j) seq.items.push_back(v.get<int>());
        set.max_len = std::max(set.max_len, seq.length());
        set.sequences.push_back(std::move(seq));
    }
    if (set.sequences.empty()) throw InputError("no sequences in " + seq_path);
    return set;
}

void write_vocab_json(const std::string& path, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << vocab.to_json() << "\n";
}

void write_log_tsv(const std::string& path, const InteractionLog& log) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    for (const auto& r : log.records) {
        out << r.user << "\t" << r.item << "\t" << r.ts << "\n";
    }
}

}  // namespace adarec::data
