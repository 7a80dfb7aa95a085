// adarec: compress a sequential-recommendation teacher into a searched
// student network. One subcommand per pipeline phase so ablations compose
// from flags; every phase writes its artifacts into a self-describing run
// directory.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "adarec/cost.hpp"
#include "adarec/data.hpp"
#include "adarec/eval.hpp"
#include "adarec/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace adarec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitMissing = 3;
constexpr int kExitNumeric = 4;

void merge_run_config(const fs::path& run_dir, const std::string& phase,
                      const json& phase_cfg) {
    fs::create_directories(run_dir);
    fs::path path = run_dir / "config.json";
    json cfg = json::object();
    if (fs::exists(path)) {
        std::ifstream in(path);
        cfg = json::parse(in);
    }
    cfg[phase] = phase_cfg;
    std::ofstream out(path);
    out << cfg.dump(2) << "\n";
}

data::SequenceSet load_prepared(const fs::path& run_dir) {
    return data::read_sequences_jsonl((run_dir / "sequences.jsonl").string(),
                                      (run_dir / "vocab.json").string());
}

teacher::TeacherModel load_teacher(const fs::path& run_dir) {
    return teacher::TeacherModel::from_checkpoint(
        load_checkpoint((run_dir / "teacher.ckpt").string()));
}

std::string read_file(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact(std::string(what) + " not found: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// "markov:k=1,v=60,users=120,min-len=8,max-len=24"
data::MarkovSceneConfig parse_synthetic(const std::string& scene, uint64_t seed) {
    if (scene.rfind("markov", 0) != 0) {
        throw InputError("unknown synthetic scene kind: " + scene);
    }
    data::MarkovSceneConfig cfg;
    cfg.seed = seed;
    auto colon = scene.find(':');
    if (colon == std::string::npos) return cfg;
    std::stringstream ss(scene.substr(colon + 1));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw InputError("bad synthetic option: " + kv);
        std::string key = kv.substr(0, eq);
        int value = std::stoi(kv.substr(eq + 1));
        if (key == "k") cfg.order = value;
        else if (key == "v") cfg.vocab_size = value;
        else if (key == "users") cfg.num_users = value;
        else if (key == "min-len") cfg.min_len = value;
        else if (key == "max-len") cfg.max_len = value;
        else throw InputError("unknown synthetic option: " + key);
    }
    return cfg;
}

eval::Scorer student_scorer(const student::StudentModel& model) {
    return [&model](const std::vector<int>& prefix) {
        return eval::last_row(model.forward_discrete(prefix).logits->value);
    };
}

eval::Scorer teacher_scorer(const teacher::TeacherModel& model) {
    return [&model](const std::vector<int>& prefix) {
        return eval::last_row(model.forward(prefix).logits->value);
    };
}

int cmd_prepare(const std::string& out_dir, const std::string& input,
                const std::string& format, const std::string& synthetic, int t,
                int min_count, uint64_t seed) {
    fs::path run_dir(out_dir);
    json cfg{{"t", t},      {"min_count", min_count}, {"seed", seed},
             {"input", input}, {"format", format},       {"synthetic", synthetic}};
    merge_run_config(run_dir, "prepare", cfg);

    data::InteractionLog log;
    if (!synthetic.empty()) {
        log = data::markov_scene(parse_synthetic(synthetic, seed));
        data::write_log_tsv((run_dir / "synthetic.tsv").string(), log);
    } else {
        if (input.empty()) throw InputError("prepare needs --input or --synthetic");
        log = data::ingest(input, format);
    }
    auto set = data::build_sequences(log, t, min_count);
    data::write_sequences_jsonl((run_dir / "sequences.jsonl").string(), set);
    data::write_vocab_json((run_dir / "vocab.json").string(), set.vocab);
    std::cout << "prepared " << set.sequences.size() << " sequences over "
              << set.vocab.size() << " items (t=" << t << ")\n";
    return kExitOk;
}

int cmd_train_teacher(const std::string& out_dir, teacher::TeacherConfig tcfg,
                      int dilation_cycles) {
    fs::path run_dir(out_dir);
    if (tcfg.flavor == teacher::Flavor::DilatedConv && dilation_cycles > 0) {
        tcfg.dilations = teacher::TeacherConfig::default_dilations(dilation_cycles);
    }
    merge_run_config(run_dir, "teacher", json::parse(tcfg.to_json()));

    auto set = load_prepared(run_dir);
    auto train_seqs = data::train_split(set);
    auto model = teacher::TeacherModel::init(tcfg, set.vocab.size());
    auto history = teacher::train_teacher(model, train_seqs);
    save_checkpoint((run_dir / "teacher.ckpt").string(), model.to_checkpoint());

    trainer::History h;
    for (size_t e = 0; e < history.epoch_loss.size(); ++e) {
        trainer::EpochStats stats;
        stats.epoch = static_cast<int>(e);
        stats.ce = history.epoch_loss[e];
        stats.total = history.epoch_loss[e];
        h.epochs.push_back(stats);
    }
    h.append_jsonl((run_dir / "history.jsonl").string(), "teacher");
    std::cout << "teacher trained: " << model.param_count() << " params, "
              << history.epoch_loss.size() << " epochs";
    if (!history.epoch_loss.empty()) {
        std::cout << ", final loss " << history.epoch_loss.back();
    }
    std::cout << "\n";
    return kExitOk;
}

int cmd_search(const std::string& out_dir, const trainer::SearchConfig& cfg) {
    fs::path run_dir(out_dir);
    merge_run_config(run_dir, "search", json::parse(cfg.to_json()));

    auto set = load_prepared(run_dir);
    auto teacher_model = load_teacher(run_dir);
    data::SequenceSet train_set = set;
    train_set.sequences = data::train_split(set);

    auto result = trainer::search(train_set, teacher_model, cfg);
    {
        std::ofstream out(run_dir / "arch_params.json");
        out << result.arch.to_json() << "\n";
    }
    result.history.append_jsonl((run_dir / "history.jsonl").string(), "search");
    std::cout << "search finished: " << result.history.epochs.size() << " epochs";
    if (!result.history.epochs.empty()) {
        std::cout << ", final total loss " << result.history.epochs.back().total;
    }
    std::cout << "\n";
    return kExitOk;
}

int cmd_derive(const std::string& out_dir) {
    fs::path run_dir(out_dir);
    auto arch = search_space::ArchParams::from_json(
        read_file(run_dir / "arch_params.json", "arch_params.json"));
    auto cell = search_space::derive_architecture(arch);
    {
        std::ofstream out(run_dir / "arch.json");
        out << cell.to_json() << "\n";
    }
    auto set = load_prepared(run_dir);
    json scfg = json::object();
    {
        std::ifstream in(run_dir / "config.json");
        if (in) {
            json full = json::parse(in);
            if (full.contains("search")) scfg = full["search"];
        }
    }
    int d_teacher = 0;
    if (fs::exists(run_dir / "teacher.ckpt.json")) {
        auto teacher_model = load_teacher(run_dir);
        d_teacher = teacher_model.cfg.embed_dim;
    }
    if (d_teacher > 0) {
        int d_student = d_teacher / 4;
        int k_blocks = scfg.value("k_blocks", 4);
        auto table = cost::CostTable::build(d_student, set.max_len);
        json costs;
        costs["cell_normalized_cost"] = cost::discrete_efficiency_loss(cell, table);
        costs["cell_params_per_block"] = cost::discrete_cell_params(cell, d_student);
        costs["cell_flops_per_block"] =
            cost::discrete_cell_flops(cell, d_student, set.max_len);
        costs["blocks"] = k_blocks;
        costs["table"] = json::parse(table.to_json());
        std::ofstream out(run_dir / "cell_cost.json");
        out << costs.dump(2) << "\n";
    }
    std::cout << "derived cell:\n" << cell.to_json() << "\n";
    return kExitOk;
}

int cmd_retrain(const std::string& out_dir, const trainer::SearchConfig& cfg,
                const std::string& arch_path) {
    fs::path run_dir(out_dir);
    json retrain_cfg = json::parse(cfg.to_json());
    // default stays run-relative so config.json carries no absolute paths
    retrain_cfg["arch"] = arch_path.empty() ? "arch.json" : arch_path;
    merge_run_config(run_dir, "retrain", retrain_cfg);

    // --arch points at a foreign run's cell for cross-scene retraining;
    // relative paths resolve against the run directory
    fs::path cell_path = arch_path.empty() ? run_dir / "arch.json" : fs::path(arch_path);
    if (!arch_path.empty() && cell_path.is_relative()) cell_path = run_dir / cell_path;
    auto cell = search_space::DiscreteCell::from_json(
        read_file(cell_path, "arch.json"));
    auto set = load_prepared(run_dir);
    auto teacher_model = load_teacher(run_dir);
    data::SequenceSet train_set = set;
    train_set.sequences = data::train_split(set);

    trainer::History history;
    auto model = trainer::retrain(cell, train_set, teacher_model, cfg, &history);
    save_checkpoint((run_dir / "student.ckpt").string(), model.to_checkpoint());
    history.append_jsonl((run_dir / "history.jsonl").string(), "retrain");
    std::cout << "student retrained: " << model.param_count() << " params\n";
    return kExitOk;
}

int cmd_evaluate(const std::string& out_dir, const std::string& split_name,
                 std::vector<int> at, bool timed) {
    fs::path run_dir(out_dir);
    merge_run_config(run_dir, "evaluate",
                     json{{"split", split_name}, {"at", at}, {"timed", timed}});
    auto set = load_prepared(run_dir);
    auto model = student::StudentModel::from_checkpoint(
        load_checkpoint((run_dir / "student.ckpt").string()));
    if (!model.cell) throw InputError("student checkpoint has no fixed cell");

    eval::Split split = eval::Split::Test;
    if (split_name == "val") split = eval::Split::Val;
    else if (split_name == "train") split = eval::Split::Train;
    else if (split_name != "test") throw InputError("unknown split: " + split_name);

    auto scorer = student_scorer(model);
    auto ranks = eval::rank_split(scorer, set.sequences, split);

    json metrics;
    metrics["split"] = split_name;
    metrics["cases"] = ranks.size();
    json per_n = json::object();
    for (int n : at) {
        auto m = eval::metrics_at_n(ranks, n);
        per_n[std::to_string(n)] = {{"mrr", m.mrr}, {"hr", m.hr}, {"ndcg", m.ndcg}};
    }
    metrics["metrics"] = per_n;
    metrics["student_params"] = model.param_count();

    bool have_teacher = fs::exists(run_dir / "teacher.ckpt.json");
    double speedup = 0.0;
    long long teacher_params = 0;
    if (have_teacher) {
        auto teacher_model = load_teacher(run_dir);
        teacher_params = teacher_model.param_count();
        metrics["teacher_params"] = teacher_params;
        if (timed) {
            speedup = eval::measure_speedup(teacher_scorer(teacher_model), scorer,
                                            set.sequences, 100);
            // wall-clock measurements stay out of metrics.json so run
            // artifacts hash identically across repeats
            json timing{{"speedup", speedup}, {"timed_batches", 100}};
            std::ofstream tout(run_dir / "timing.json");
            tout << timing.dump(2) << "\n";
        }
    }
    {
        std::ofstream out(run_dir / "metrics.json");
        out << metrics.dump(2) << "\n";
    }

    std::cout << "split: " << split_name << " (" << ranks.size() << " cases)\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %10s %10s %10s\n", "N", "MRR", "HR", "NDCG");
    std::cout << line;
    for (int n : at) {
        auto m = eval::metrics_at_n(ranks, n);
        std::snprintf(line, sizeof(line), "@%-7d %10.4f %10.4f %10.4f\n", n, m.mrr,
                      m.hr, m.ndcg);
        std::cout << line;
    }
    std::cout << "params: student " << model.param_count();
    if (have_teacher) {
        std::cout << ", teacher " << teacher_params;
        if (timed && speedup > 0.0) {
            std::snprintf(line, sizeof(line), ", speedup %.2fx", speedup);
            std::cout << line;
        }
    }
    std::cout << "\n";
    return kExitOk;
}

int cmd_export_dot(const std::string& out_dir) {
    fs::path run_dir(out_dir);
    auto cell = search_space::DiscreteCell::from_json(
        read_file(run_dir / "arch.json", "arch.json"));
    fs::path path = run_dir / "cell.dot";
    std::ofstream out(path);
    out << cell.to_dot();
    std::cout << "wrote " << path.string() << "\n";
    return kExitOk;
}

void reject_unknown_keys(const json& section, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (const auto& [key, value] : section.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw InputError("unknown key '" + key + "' in config section " + where);
        (void)value;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AdaRec: teacher-to-student compression with searched cells"};
    app.require_subcommand(1);
    app.fallthrough();

    // a declarative config file supplies per-phase defaults; explicit flags
    // still win because CLI11 overwrites parsed values afterwards
    json file_cfg = json::object();
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in) {
                std::cerr << "error: cannot open config file: " << argv[i + 1] << "\n";
                return kExitInput;
            }
            try {
                file_cfg = json::parse(in);
            } catch (const std::exception& e) {
                std::cerr << "error: bad config file: " << e.what() << "\n";
                return kExitInput;
            }
        }
    }

    std::string config_path;
    app.add_option("--config", config_path, "json file with per-phase defaults");
    std::string out_dir;
    app.add_option("--out", out_dir, "run directory")->required();
    uint64_t global_seed = 0;
    auto* global_seed_opt =
        app.add_option("--seed", global_seed, "seed applied to phases lacking their own");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "build padded sequences and vocab");
    std::string input, format = "tsv", synthetic;
    int t = 10, min_count = 1;
    uint64_t prep_seed = 1;
    prepare->add_option("--input", input, "interaction log file");
    prepare->add_option("--format", format, "tsv or jsonl");
    prepare->add_option("--synthetic", synthetic,
                        "generate a scene, e.g. markov:k=1,v=60,users=120");
    prepare->add_option("--t", t, "sequence length");
    prepare->add_option("--min-count", min_count, "drop items seen fewer times");
    CLI::Option* prepare_seed_opt =
        prepare->add_option("--seed", prep_seed, "synthetic generator seed");

    // train-teacher
    auto* tt = app.add_subcommand("train-teacher", "pretrain the teacher network");
    teacher::TeacherConfig tcfg;
    std::string flavor = "conv", sasrec_order = "as_printed";
    int dilation_cycles = 8;
    tcfg.embed_dim = 0;  // resolved per flavor below
    tt->add_option("--flavor", flavor, "conv or attention");
    tt->add_option("--d", tcfg.embed_dim, "embedding dimension");
    tt->add_option("--dilation-cycles", dilation_cycles,
                   "repetitions of the 1,2,4,8 dilation schedule");
    tt->add_option("--blocks", tcfg.attn_blocks, "attention blocks");
    tt->add_option("--heads", tcfg.heads, "attention heads");
    tt->add_option("--kernel-size", tcfg.kernel_size, "conv kernel size");
    tt->add_option("--dropout", tcfg.dropout, "attention dropout rate");
    tt->add_option("--sasrec-order", sasrec_order, "as_printed or canonical");
    tt->add_option("--lr", tcfg.lr, "learning rate");
    tt->add_option("--weight-decay", tcfg.weight_decay, "weight decay");
    tt->add_option("--epochs", tcfg.epochs, "training epochs");
    tt->add_option("--batch-size", tcfg.batch_size, "mini-batch size");
    CLI::Option* tt_seed_opt = tt->add_option("--seed", tcfg.seed, "training seed");

    // search / retrain share the config surface
    trainer::SearchConfig scfg;
    auto add_search_flags = [&](CLI::App* cmd) -> CLI::Option* {
        cmd->add_option("--gamma", scfg.gamma, "loss mix in [0,1]");
        cmd->add_option("--beta", scfg.beta, "efficiency coefficient");
        cmd->add_option("--weight-lr", scfg.weight_lr, "weight optimizer lr");
        cmd->add_option("--weight-decay", scfg.weight_decay, "weight optimizer decay");
        cmd->add_option("--arch-lr", scfg.arch_lr, "architecture optimizer lr");
        cmd->add_option("--arch-decay", scfg.arch_decay, "architecture optimizer decay");
        cmd->add_option("--epochs", scfg.epochs, "search epochs");
        cmd->add_option("--retrain-epochs", scfg.retrain_epochs, "retrain epochs");
        cmd->add_option("--batch-size", scfg.batch_size, "mini-batch size");
        CLI::Option* seed_opt = cmd->add_option("--seed", scfg.seed, "run seed");
        cmd->add_option("--tau-start", scfg.tau_start, "initial Gumbel temperature");
        cmd->add_option("--tau-end", scfg.tau_end, "final Gumbel temperature");
        cmd->add_option("--m", scfg.m, "intermediate nodes per cell");
        cmd->add_option("--k", scfg.k_blocks, "student blocks");
        cmd->add_flag_callback("--no-ce", [&]() { scfg.use_ce = false; },
                               "drop the cross-entropy term");
        cmd->add_flag_callback("--no-emb-kd", [&]() { scfg.use_emb_kd = false; },
                               "drop the embedding distillation term");
        cmd->add_flag_callback("--no-pred-kd", [&]() { scfg.use_pred_kd = false; },
                               "drop the prediction distillation term");
        cmd->add_flag_callback("--no-hidden-kd", [&]() { scfg.use_hidden_kd = false; },
                               "drop the hidden-layer distillation term");
        return seed_opt;
    };
    auto* search_cmd = app.add_subcommand("search", "differentiable structure search");
    CLI::Option* search_seed_opt = add_search_flags(search_cmd);
    auto* retrain_cmd = app.add_subcommand("retrain", "retrain the derived cell");
    CLI::Option* retrain_seed_opt = add_search_flags(retrain_cmd);
    std::string arch_path;
    retrain_cmd->add_option("--arch", arch_path,
                            "cell file to retrain (defaults to the run's arch.json; "
                            "point at another run for cross-scene retraining)");

    auto* derive_cmd = app.add_subcommand("derive", "argmax the searched cell");

    auto* eval_cmd = app.add_subcommand("evaluate", "rank held-out targets");
    std::string split = "test";
    std::vector<int> at{5, 20};
    bool timed = true;
    eval_cmd->add_option("--split", split, "train, val, or test");
    eval_cmd->add_option("--at", at, "metric cutoffs");
    eval_cmd->add_flag("--timed,!--no-timed", timed, "measure teacher/student speedup");

    auto* dot_cmd = app.add_subcommand("export-dot", "write the cell as Graphviz DOT");

    // apply config-file sections before parsing so flags override them
    try {
        reject_unknown_keys(file_cfg,
                            {"prepare", "teacher", "search", "retrain", "evaluate"},
                            "(top level)");
        if (file_cfg.contains("prepare")) {
            const json& s = file_cfg["prepare"];
            reject_unknown_keys(
                s, {"input", "format", "synthetic", "t", "min_count", "seed"},
                "prepare");
            input = s.value("input", input);
            format = s.value("format", format);
            synthetic = s.value("synthetic", synthetic);
            t = s.value("t", t);
            min_count = s.value("min_count", min_count);
            prep_seed = s.value("seed", prep_seed);
        }
        if (file_cfg.contains("teacher")) {
            json s = file_cfg["teacher"];
            if (s.contains("dilation_cycles")) {
                dilation_cycles = s["dilation_cycles"].get<int>();
                s.erase("dilation_cycles");
            }
            if (s.contains("flavor")) flavor = s["flavor"].get<std::string>();
            if (s.contains("sasrec_canonical_order")) {
                sasrec_order =
                    s["sasrec_canonical_order"].get<bool>() ? "canonical" : "as_printed";
            }
            if (s.contains("dilations")) {
                tcfg.dilations = s["dilations"].get<std::vector<int>>();
                dilation_cycles = 0;  // explicit schedule wins
                s.erase("dilations");
            }
            teacher::TeacherConfig parsed = teacher::TeacherConfig::from_json(s.dump());
            tcfg.attn_blocks = parsed.attn_blocks;
            tcfg.heads = parsed.heads;
            tcfg.kernel_size = parsed.kernel_size;
            tcfg.dropout = parsed.dropout;
            tcfg.lr = parsed.lr;
            tcfg.weight_decay = parsed.weight_decay;
            tcfg.epochs = parsed.epochs;
            tcfg.batch_size = parsed.batch_size;
            tcfg.seed = parsed.seed;
            if (s.contains("embed_dim")) tcfg.embed_dim = parsed.embed_dim;
        }
        // the retrain section wins over search when retraining
        bool is_retrain = false;
        for (int i = 1; i < argc; ++i) {
            if (std::string(argv[i]) == "retrain") is_retrain = true;
        }
        const char* section = is_retrain && file_cfg.contains("retrain") ? "retrain"
                              : file_cfg.contains("search")              ? "search"
                                                                         : nullptr;
        if (section) {
            json s = file_cfg[section];
            if (s.contains("arch")) {
                arch_path = s["arch"].get<std::string>();
                s.erase("arch");
            }
            scfg = trainer::SearchConfig::from_json(s.dump());
        }
        if (file_cfg.contains("evaluate")) {
            const json& s = file_cfg["evaluate"];
            reject_unknown_keys(s, {"split", "at", "timed"}, "evaluate");
            split = s.value("split", split);
            if (s.contains("at")) at = s["at"].get<std::vector<int>>();
            timed = s.value("timed", timed);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInput;  // help exits clean
    }

    if (global_seed_opt->count() > 0) {
        if (prepare_seed_opt->count() == 0) prep_seed = global_seed;
        if (tt_seed_opt->count() == 0) tcfg.seed = global_seed;
        if (search_seed_opt->count() == 0 && retrain_seed_opt->count() == 0) {
            scfg.seed = global_seed;
        }
    }

    try {
        if (prepare->parsed()) {
            return cmd_prepare(out_dir, input, format, synthetic, t, min_count,
                               prep_seed);
        }
        if (tt->parsed()) {
            tcfg.flavor = teacher::flavor_from_name(flavor);
            tcfg.sasrec_canonical_order = sasrec_order == "canonical";
            if (sasrec_order != "canonical" && sasrec_order != "as_printed") {
                throw InputError("unknown sasrec order: " + sasrec_order);
            }
            if (tcfg.embed_dim == 0) {
                tcfg.embed_dim = tcfg.flavor == teacher::Flavor::DilatedConv ? 256 : 128;
            }
            return cmd_train_teacher(out_dir, tcfg, dilation_cycles);
        }
        if (search_cmd->parsed()) return cmd_search(out_dir, scfg);
        if (derive_cmd->parsed()) return cmd_derive(out_dir);
        if (retrain_cmd->parsed()) return cmd_retrain(out_dir, scfg, arch_path);
        if (eval_cmd->parsed()) return cmd_evaluate(out_dir, split, at, timed);
        if (dot_cmd->parsed()) return cmd_export_dot(out_dir);
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissing;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitOk;
}
