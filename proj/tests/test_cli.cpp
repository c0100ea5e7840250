#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef PREFOPT_CLI_PATH
#define PREFOPT_CLI_PATH "prefopt"
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(PREFOPT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& sub) const { return (path / sub).string(); }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

} // namespace

TEST_CASE("gen is byte-identical across runs with the same seed") {
    TempDir dir("prefopt_cli_gen");
    write_file(dir / "gen.json",
               R"({"prompts": 10, "k": 4, "pairs_per_prompt": 3, "seed": 7})");
    REQUIRE(run_cli("gen --config " + (dir / "gen.json") + " --out " + (dir / "a")) == 0);
    REQUIRE(run_cli("gen --config " + (dir / "gen.json") + " --out " + (dir / "b")) == 0);
    CHECK(slurp(dir.path / "a" / "dataset.jsonl") == slurp(dir.path / "b" / "dataset.jsonl"));
    CHECK(slurp(dir.path / "a" / "reward_table.json") ==
          slurp(dir.path / "b" / "reward_table.json"));
    CHECK(!slurp(dir.path / "a" / "manifest.json").empty());
}

TEST_CASE("gen rejects more pairs than k*(k-1)/2") {
    TempDir dir("prefopt_cli_pigeon");
    write_file(dir / "gen.json",
               R"({"prompts": 2, "k": 4, "pairs_per_prompt": 7, "seed": 1})");
    CHECK(run_cli("gen --config " + (dir / "gen.json") + " --out " + (dir / "out")) == 2);
}

TEST_CASE("gen rejects unknown config keys") {
    TempDir dir("prefopt_cli_unknown");
    write_file(dir / "gen.json",
               R"({"prompts": 2, "k": 4, "pairs_per_prompt": 2, "beta": 1.0})");
    CHECK(run_cli("gen --config " + (dir / "gen.json") + " --out " + (dir / "out")) == 2);
}

TEST_CASE("train with c3dpo lambda=0 writes metrics identical to dpo") {
    TempDir dir("prefopt_cli_train");
    write_file(dir / "gen.json",
               R"({"prompts": 4, "k": 3, "pairs_per_prompt": 2, "seed": 11})");
    REQUIRE(run_cli("gen --config " + (dir / "gen.json") + " --out " + (dir / "data")) == 0);

    auto train_cfg = [&](const std::string& loss, const std::string& lambda) {
        return std::string("{\"model\": {\"kind\":\"tabular\",\"num_prompts\":4,\"k\":3,"
                           "\"init\":\"normal\"},\n\"dataset\": \"") +
               (dir / "data") + "/dataset.jsonl\",\n\"loss\": \"" + loss + "\"" + lambda +
               ",\n\"beta\": 0.5, \"learning_rate\": 0.1, \"steps\": 60, \"seed\": 3}";
    };
    write_file(dir / "dpo.json", train_cfg("dpo", ""));
    write_file(dir / "c3.json", train_cfg("c3dpo_log_l2", ", \"lambda\": 0.0"));
    REQUIRE(run_cli("train --config " + (dir / "dpo.json") + " --out " + (dir / "run_dpo")) == 0);
    REQUIRE(run_cli("train --config " + (dir / "c3.json") + " --out " + (dir / "run_c3")) == 0);
    CHECK(slurp(dir.path / "run_dpo" / "metrics.csv") ==
          slurp(dir.path / "run_c3" / "metrics.csv"));
    CHECK(slurp(dir.path / "run_dpo" / "model_final.json") ==
          slurp(dir.path / "run_c3" / "model_final.json"));
}

TEST_CASE("report summarizes a run and fails cleanly on an empty directory") {
    TempDir dir("prefopt_cli_report");
    CHECK(run_cli("report --out " + (dir / "nothing_here")) == 2);

    write_file(dir / "gen.json",
               R"({"prompts": 2, "k": 3, "pairs_per_prompt": 1, "seed": 5})");
    REQUIRE(run_cli("gen --config " + (dir / "gen.json") + " --out " + (dir / "data")) == 0);
    write_file(dir / "train.json",
               std::string("{\"model\": {\"kind\":\"tabular\",\"num_prompts\":2,\"k\":3},"
                           "\"dataset\": \"") +
                   (dir / "data") + "/dataset.jsonl\",\"loss\": \"dpo\","
                                    "\"steps\": 40, \"seed\": 1}");
    REQUIRE(run_cli("train --config " + (dir / "train.json") + " --out " + (dir / "run")) == 0);
    CHECK(run_cli("report --out " + (dir / "run")) == 0);
    CHECK(fs::exists(dir.path / "run" / "summary.csv"));
}

TEST_CASE("train propagates numerical failure as exit code 3") {
    TempDir dir("prefopt_cli_numfail");
    write_file(dir / "gen.json",
               R"({"prompts": 2, "k": 3, "pairs_per_prompt": 1, "seed": 5})");
    REQUIRE(run_cli("gen --config " + (dir / "gen.json") + " --out " + (dir / "data")) == 0);
    write_file(dir / "train.json",
               std::string("{\"model\": {\"kind\":\"tabular\",\"num_prompts\":2,\"k\":3},"
                           "\"dataset\": \"") +
                   (dir / "data") + "/dataset.jsonl\",\"loss\": \"ipo\","
                                    "\"steps\": 40, \"learning_rate\": 1e8, \"seed\": 1}");
    CHECK(run_cli("train --config " + (dir / "train.json") + " --out " + (dir / "run")) == 3);
}

TEST_CASE("sweep subcommand writes a csv") {
    TempDir dir("prefopt_cli_sweep");
    write_file(dir / "sweep.json",
               R"({"k": 6, "gamma": 1.5, "seeds": [0], "variants": ["c3dpo_log_l2"],
                   "lambdas": [0.1], "steps": 200, "win_rate_samples": 256})");
    REQUIRE(run_cli("sweep --config " + (dir / "sweep.json") + " --out " + (dir / "out") +
                    " --jobs 2") == 0);
    std::string csv = slurp(dir.path / "out" / "sweep.csv");
    CHECK(csv.find("variant,lambda,seed") == 0);
    CHECK(csv.find("dpo") != std::string::npos);
    CHECK(csv.find("c3dpo_log_l2") != std::string::npos);
}
