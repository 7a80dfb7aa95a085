// Exercises the command-line front door: exit codes, prerequisite checks,
// and artifact determinism. Needs ADAREC_CLI pointing at the binary.
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string cli() {
    const char* env = std::getenv("ADAREC_CLI");
    REQUIRE(env != nullptr);
    return env;
}

int run(const std::string& args) {
    std::string cmd = cli() + " " + args + " > /tmp/adarec_cli_out.txt 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string last_output() {
    std::ifstream in("/tmp/adarec_cli_out.txt");
    std::string all, line;
    while (std::getline(in, line)) all += line + "\n";
    return all;
}

uint64_t fnv1a_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    uint64_t h = 1469598103934665603ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

TEST_CASE("missing input file exits 2 and names the path") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t1";
    fs::remove_all(dir);
    int code = run("--out " + dir.string() +
                   " prepare --input /tmp/no_such_file.tsv --format tsv --t 8");
    CHECK(code == 2);
    CHECK(last_output().find("/tmp/no_such_file.tsv") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("search without a teacher checkpoint exits 3 naming the artifact") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t2";
    fs::remove_all(dir);
    REQUIRE(run("--out " + dir.string() +
                " prepare --synthetic markov:k=1,v=15,users=12 --t 8 --seed 2") == 0);
    int code = run("--out " + dir.string() + " search --epochs 1");
    CHECK(code == 3);
    CHECK(last_output().find("teacher.ckpt") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("retrain without a derived cell exits 3") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t3";
    fs::remove_all(dir);
    REQUIRE(run("--out " + dir.string() +
                " prepare --synthetic markov:k=1,v=15,users=12 --t 8 --seed 2") == 0);
    int code = run("--out " + dir.string() + " retrain --retrain-epochs 1");
    CHECK(code == 3);
    CHECK(last_output().find("arch.json") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("flag parse errors exit 2 and help exits 0") {
    CHECK(run("prepare --t 8") == 2);          // --out missing
    CHECK(run("--out /tmp/x prepare --bogus-flag 1") == 2);
    CHECK(run("--help") == 0);
}

TEST_CASE("bad synthetic scene string exits 2") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t4";
    fs::remove_all(dir);
    CHECK(run("--out " + dir.string() + " prepare --synthetic markov:bogus --t 8") == 2);
    CHECK(run("--out " + dir.string() + " prepare --synthetic lstm:k=1 --t 8") == 2);
    fs::remove_all(dir);
}

TEST_CASE("synthetic generation is deterministic per seed") {
    fs::path a = fs::temp_directory_path() / "adarec_cli_t5a";
    fs::path b = fs::temp_directory_path() / "adarec_cli_t5b";
    fs::path c = fs::temp_directory_path() / "adarec_cli_t5c";
    for (const auto& d : {a, b, c}) fs::remove_all(d);
    REQUIRE(run("--out " + a.string() +
                " prepare --synthetic markov:k=4,v=30,users=20 --t 8 --seed 9") == 0);
    REQUIRE(run("--out " + b.string() +
                " prepare --synthetic markov:k=4,v=30,users=20 --t 8 --seed 9") == 0);
    REQUIRE(run("--out " + c.string() +
                " prepare --synthetic markov:k=4,v=30,users=20 --t 8 --seed 10") == 0);
    CHECK(fnv1a_file(a / "synthetic.tsv") == fnv1a_file(b / "synthetic.tsv"));
    CHECK(fnv1a_file(a / "sequences.jsonl") == fnv1a_file(b / "sequences.jsonl"));
    CHECK(fnv1a_file(a / "synthetic.tsv") != fnv1a_file(c / "synthetic.tsv"));
    for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST_CASE("prepare logs the sequence count and writes the config first") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t6";
    fs::remove_all(dir);
    REQUIRE(run("--out " + dir.string() +
                " prepare --synthetic markov:k=1,v=15,users=12 --t 8 --seed 2") == 0);
    CHECK(last_output().find("prepared") != std::string::npos);
    CHECK(fs::exists(dir / "config.json"));
    std::ifstream in(dir / "config.json");
    std::string cfg((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    CHECK(cfg.find("\"prepare\"") != std::string::npos);
    CHECK(cfg.find("\"seed\"") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("export-dot writes a graphviz file after derive") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t7";
    fs::remove_all(dir);
    REQUIRE(run("--out " + dir.string() +
                " prepare --synthetic markov:k=1,v=15,users=16 --t 8 --seed 3") == 0);
    REQUIRE(run("--out " + dir.string() +
                " train-teacher --flavor conv --d 8 --dilation-cycles 1 --epochs 1 "
                "--batch-size 8 --seed 3") == 0);
    REQUIRE(run("--out " + dir.string() +
                " search --epochs 1 --batch-size 8 --seed 3") == 0);
    REQUIRE(run("--out " + dir.string() + " derive") == 0);
    REQUIRE(run("--out " + dir.string() + " export-dot") == 0);
    std::ifstream in(dir / "cell.dot");
    std::string dot((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
    CHECK(dot.find("digraph") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("config file supplies defaults that flags override") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t9";
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path cfg = dir / "my_config.json";
    {
        std::ofstream out(cfg);
        out << R"({"prepare": {"synthetic": "markov:k=1,v=18,users=14", "t": 8, "seed": 21}})";
    }
    REQUIRE(run("--config " + cfg.string() + " --out " + dir.string() + " prepare") == 0);
    CHECK(fs::exists(dir / "sequences.jsonl"));

    // same config but an explicit flag overrides the seed: different data
    fs::path dir2 = fs::temp_directory_path() / "adarec_cli_t9b";
    fs::remove_all(dir2);
    fs::create_directories(dir2);
    REQUIRE(run("--config " + cfg.string() + " --out " + dir2.string() +
                " prepare --seed 22") == 0);
    CHECK(fnv1a_file(dir / "synthetic.tsv") != fnv1a_file(dir2 / "synthetic.tsv"));

    // unknown keys are rejected
    fs::path bad = dir / "bad_config.json";
    {
        std::ofstream out(bad);
        out << R"({"prepare": {"synthetik": "markov:k=1"}})";
    }
    CHECK(run("--config " + bad.string() + " --out " + dir.string() + " prepare") == 2);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("a reproduced run from its own config file hashes identically") {
    fs::path a = fs::temp_directory_path() / "adarec_cli_t10a";
    fs::path b = fs::temp_directory_path() / "adarec_cli_t10b";
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run("--out " + a.string() +
                " prepare --synthetic markov:k=1,v=16,users=14 --t 8 --seed 6") == 0);
    REQUIRE(run("--out " + a.string() +
                " train-teacher --flavor conv --d 8 --dilation-cycles 1 --epochs 2 "
                "--batch-size 8 --seed 6") == 0);
    // replay both phases purely from the recorded config
    REQUIRE(run("--config " + (a / "config.json").string() + " --out " + b.string() +
                " prepare") == 0);
    REQUIRE(run("--config " + (a / "config.json").string() + " --out " + b.string() +
                " train-teacher") == 0);
    CHECK(fnv1a_file(a / "sequences.jsonl") == fnv1a_file(b / "sequences.jsonl"));
    CHECK(fnv1a_file(a / "teacher.ckpt.bin") == fnv1a_file(b / "teacher.ckpt.bin"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("a global seed reaches phases without their own") {
    fs::path a = fs::temp_directory_path() / "adarec_cli_t11a";
    fs::path b = fs::temp_directory_path() / "adarec_cli_t11b";
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run("--out " + a.string() + " --seed 33 prepare "
                "--synthetic markov:k=1,v=16,users=14 --t 8") == 0);
    REQUIRE(run("--out " + b.string() + " prepare "
                "--synthetic markov:k=1,v=16,users=14 --t 8 --seed 33") == 0);
    CHECK(fnv1a_file(a / "synthetic.tsv") == fnv1a_file(b / "synthetic.tsv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("retrain accepts a foreign run's cell for cross-scene transfer") {
    fs::path scene_a = fs::temp_directory_path() / "adarec_cli_t12a";
    fs::path scene_b = fs::temp_directory_path() / "adarec_cli_t12b";
    fs::remove_all(scene_a);
    fs::remove_all(scene_b);
    auto phase = [&](const fs::path& dir, const std::string& args) {
        REQUIRE(run("--out " + dir.string() + " " + args) == 0);
    };
    phase(scene_a, "prepare --synthetic markov:k=1,v=14,users=14 --t 8 --seed 8");
    phase(scene_a,
          "train-teacher --flavor conv --d 8 --dilation-cycles 1 --epochs 1 "
          "--batch-size 8 --seed 8");
    phase(scene_a, "search --epochs 1 --batch-size 8 --seed 8");
    phase(scene_a, "derive");

    phase(scene_b, "prepare --synthetic markov:k=3,v=18,users=14 --t 8 --seed 9");
    phase(scene_b,
          "train-teacher --flavor conv --d 8 --dilation-cycles 1 --epochs 1 "
          "--batch-size 8 --seed 9");
    phase(scene_b, "retrain --retrain-epochs 1 --batch-size 8 --seed 9 --arch " +
                       (scene_a / "arch.json").string());
    phase(scene_b, "evaluate --split test --no-timed");
    CHECK(fs::exists(scene_b / "metrics.json"));
    fs::remove_all(scene_a);
    fs::remove_all(scene_b);
}

TEST_CASE("evaluate prints the metric table with params") {
    fs::path dir = fs::temp_directory_path() / "adarec_cli_t8";
    fs::remove_all(dir);
    REQUIRE(run("--out " + dir.string() +
                " prepare --synthetic markov:k=1,v=15,users=20 --t 8 --seed 4") == 0);
    REQUIRE(run("--out " + dir.string() +
                " train-teacher --flavor conv --d 8 --dilation-cycles 1 --epochs 1 "
                "--batch-size 8 --seed 4") == 0);
    REQUIRE(run("--out " + dir.string() +
                " search --epochs 1 --batch-size 8 --seed 4") == 0);
    REQUIRE(run("--out " + dir.string() + " derive") == 0);
    REQUIRE(run("--out " + dir.string() +
                " retrain --retrain-epochs 1 --batch-size 8 --seed 4") == 0);
    REQUIRE(run("--out " + dir.string() + " evaluate --split test --at 5 --at 20") == 0);
    auto out = last_output();
    CHECK(out.find("MRR") != std::string::npos);
    CHECK(out.find("NDCG") != std::string::npos);
    CHECK(out.find("@5") != std::string::npos);
    CHECK(out.find("@20") != std::string::npos);
    CHECK(out.find("params: student") != std::string::npos);
    CHECK(out.find("speedup") != std::string::npos);
    CHECK(fs::exists(dir / "metrics.json"));
    CHECK(fs::exists(dir / "timing.json"));
    fs::remove_all(dir);
}
