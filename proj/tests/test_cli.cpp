#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drivesql/cli.hpp"
#include "drivesql/generation.hpp"
#include "drivesql/hashing.hpp"

using namespace drivesql;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("drivesql-cli-" + std::to_string(std::rand()) + "-" +
                                            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "drivesql");
    return cli::run(args);
}

/// Writes a small synthesized corpus and its database.
void prepare(const TempDir& dir) {
    spit(dir / "scripts.json", R"({"random": {"scenes": 4, "seed": 3, "min_frames": 4, "max_frames": 6}})");
    REQUIRE(run_cli({"synth", dir / "scripts.json", "-o", dir / "ann.json"}) == 0);
    REQUIRE(run_cli({"build-db", dir / "ann.json", "-o", dir / "db.json"}) == 0);
}

}  // namespace

TEST_CASE("exit codes") {
    TempDir dir;
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({}) == 1);
    CHECK(run_cli({"build-db"}) == 1);
    CHECK(run_cli({"build-db", dir / "missing.json", "-o", dir / "db.json"}) == 2);
    spit(dir / "bad.json", R"({"scenes": 3})");
    CHECK(run_cli({"build-db", dir / "bad.json", "-o", dir / "db.json"}) == 1);
    spit(dir / "broken.json", "{not json");
    CHECK(run_cli({"build-db", dir / "broken.json", "-o", dir / "db.json"}) == 1);
    CHECK_FALSE(fs::exists(dir / "db.json"));
    prepare(dir);
    CHECK(run_cli({"build-db", dir / "ann.json", "-o", dir / "db2.json", "--radius", "-4"}) == 1);
    CHECK(run_cli({"generate", dir / "db.json", "-o", dir / "p.jsonl", "--subtasks", "teleport"}) == 1);
}

TEST_CASE("manifest fields") {
    TempDir dir;
    prepare(dir);
    REQUIRE(run_cli({"generate", dir / "db.json", "-o", dir / "pairs.jsonl", "--seed", "5"}) == 0);
    const json m = json::parse(slurp(dir / "pairs.jsonl.manifest.json"));
    for (const char* key : {"command", "config", "config_digest", "inputs", "outputs", "summary", "tool_version",
                            "wall_time_seconds"}) {
        CHECK(m.contains(key));
    }
    CHECK(m["command"] == "generate");
    CHECK(m["config"]["seed"] == 5);
    CHECK(m["config_digest"] == sha256_hex(m["config"].dump()));
    CHECK(m["outputs"][dir / "pairs.jsonl"] == sha256_hex(slurp(dir / "pairs.jsonl")));
    CHECK(m["inputs"][dir / "db.json"] == sha256_hex(slurp(dir / "db.json")));
    CHECK(m["tool_version"] == cli::kToolVersion);
}

TEST_CASE("generate is byte-identical across runs and job counts") {
    TempDir dir;
    prepare(dir);
    REQUIRE(run_cli({"generate", dir / "db.json", "-o", dir / "a.jsonl", "--seed", "9", "--jobs", "1"}) == 0);
    REQUIRE(run_cli({"generate", dir / "db.json", "-o", dir / "b.jsonl", "--seed", "9", "--jobs", "4"}) == 0);
    REQUIRE(run_cli({"generate", dir / "db.json", "-o", dir / "c.jsonl", "--seed", "9", "--jobs", "1"}) == 0);
    CHECK(sha256_hex(slurp(dir / "a.jsonl")) == sha256_hex(slurp(dir / "b.jsonl")));
    CHECK(sha256_hex(slurp(dir / "a.jsonl")) == sha256_hex(slurp(dir / "c.jsonl")));
    REQUIRE(run_cli({"generate", dir / "db.json", "-o", dir / "d.jsonl", "--seed", "10"}) == 0);
    CHECK(slurp(dir / "a.jsonl") != slurp(dir / "d.jsonl"));
}

TEST_CASE("environment and config file") {
    TempDir dir;
    prepare(dir);
    REQUIRE(run_cli({"generate", dir / "db.json", "-o", dir / "flag.jsonl", "--seed", "12"}) == 0);

    ::setenv("DRIVESQL_SEED", "12", 1);
    const int rc = run_cli({"generate", dir / "db.json", "-o", dir / "env.jsonl"});
    ::unsetenv("DRIVESQL_SEED");
    REQUIRE(rc == 0);
    CHECK(slurp(dir / "flag.jsonl") == slurp(dir / "env.jsonl"));

    spit(dir / "run.ini", "[generate]\nseed = 12\n");
    REQUIRE(run_cli({"--config", dir / "run.ini", "generate", dir / "db.json", "-o", dir / "cfg.jsonl"}) == 0);
    CHECK(slurp(dir / "flag.jsonl") == slurp(dir / "cfg.jsonl"));

    // The command line wins over the environment.
    ::setenv("DRIVESQL_SEED", "99", 1);
    const int rc2 = run_cli({"generate", dir / "db.json", "-o", dir / "both.jsonl", "--seed", "12"});
    ::unsetenv("DRIVESQL_SEED");
    REQUIRE(rc2 == 0);
    CHECK(slurp(dir / "flag.jsonl") == slurp(dir / "both.jsonl"));
}

TEST_CASE("split of 850 scenes") {
    TempDir dir;
    std::vector<InstructionResponsePair> pairs;
    for (int s = 0; s < 850; ++s) {
        InstructionResponsePair p;
        p.pair_id = "p" + std::to_string(s);
        p.scene_id = "scene-" + std::to_string(s);
        p.frame_ids = {"a", "b", "c"};
        p.task = "perception";
        p.views_used = {View::Front};
        p.ground_truth = NumericTruth{{1.0}};
        pairs.push_back(p);
    }
    std::ostringstream os;
    write_jsonl(os, pairs);
    spit(dir / "pairs.jsonl", os.str());
    REQUIRE(run_cli({"split", dir / "pairs.jsonl", "-o", dir / "out", "--seed", "1"}) == 0);
    const json listing = json::parse(slurp(dir / "out/split.json"));
    CHECK(listing["train"].size() == 607);
    CHECK(listing["val"].size() == 122);
    CHECK(listing["test"].size() == 121);
    const json m = json::parse(slurp(dir / "out/manifest.json"));
    CHECK(m["summary"]["train"]["pairs"] == 607);
    CHECK(run_cli({"split", dir / "pairs.jsonl", "-o", dir / "out2", "--ratios", "1,2"}) == 1);
}

TEST_CASE("desk pipeline round trip") {
    TempDir dir;
    prepare(dir);
    REQUIRE(run_cli({"generate", dir / "db.json", "-o", dir / "pairs.jsonl", "--seed", "1"}) == 0);
    REQUIRE(run_cli({"verify", dir / "pairs.jsonl", "--db", dir / "db.json", "-o", dir / "kept.jsonl"}) == 0);
    REQUIRE(run_cli({"stats", dir / "kept.jsonl", dir / "db.json", "-o", dir / "stats.json", "--csv", dir / "views.csv"}) == 0);
    REQUIRE(run_cli({"export-gt", dir / "kept.jsonl", "-o", dir / "preds.jsonl"}) == 0);
    REQUIRE(run_cli({"eval", dir / "kept.jsonl", dir / "preds.jsonl", "-o", dir / "report.json"}) == 0);
    const json r = json::parse(slurp(dir / "report.json"));
    CHECK(r["groups"]["perception_acc"] == 1.0);
    CHECK(r["groups"]["reasoning_bleu"] == 1.0);
    CHECK(fs::exists(dir / "views.csv"));
    const json st = json::parse(slurp(dir / "stats.json"));
    CHECK(st["keyframes"].get<int>() > 0);
}
