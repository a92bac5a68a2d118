#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lstmkd/cli/cli.hpp"
#include "lstmkd/distillpipe/pipeline.hpp"

using namespace lstmkd;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(const std::vector<std::string> &args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string &name) {
    auto dir = fs::temp_directory_path() / "lstmkd_test_cli";
    fs::create_directories(dir);
    return dir / name;
}

nlohmann::json read_json(const fs::path &p) {
    std::ifstream f(p);
    return nlohmann::json::parse(f);
}

std::string slurp(const fs::path &p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

fs::path tiny_config() {
    const auto p = scratch("tiny.json");
    std::ofstream(p) << R"({"synth": {"num_utterances": 6, "min_seconds": 0.4, "max_seconds": 0.5},
                            "pseudo_labels": {"restarts": 1}})";
    return p;
}

} // namespace

TEST_CASE("usage errors exit 2 with usage text; help exits 0") {
    auto r = cli({});
    CHECK(r.code == 2);
    CHECK(r.err.rfind("error: usage: ", 0) == 0);
    CHECK(r.err.find("Subcommands:") != std::string::npos);

    r = cli({"distill", "--mode", "kd"});
    CHECK(r.code == 2); // required inputs missing
    r = cli({"distill", "--corpus", "c", "--labels", "l", "--logits", "x", "--mode", "fancy"});
    CHECK(r.code == 2);
    r = cli({"param-count", "--unknown-flag"});
    CHECK(r.code == 2);
    r = cli({"synth", "--seed", "not-a-number"});
    CHECK(r.code == 2);

    r = cli({"--help"});
    CHECK(r.code == 0);
    CHECK(r.out.find("pseudo-labels") != std::string::npos);
    CHECK(cli({"distill", "--help"}).code == 0);
}

TEST_CASE("failed preconditions exit 1 with a single error line") {
    auto r = cli({"param-count", "--preset", "gigantic"});
    CHECK(r.code == 1);
    CHECK(r.err == "error: unknown_preset: unknown model preset 'gigantic'\n");

    r = cli({"synth", "--config", scratch("does-not-exist.json").string(), "--out", scratch("x").string()});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: missing_input: ", 0) == 0);

    const auto bad = scratch("bad.json");
    std::ofstream(bad) << R"({"distill": {"seed": 4}})";
    r = cli({"synth", "--config", bad.string(), "--out", scratch("y").string()});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: invalid_config: ", 0) == 0);

    std::ofstream(bad) << "{ not json";
    r = cli({"synth", "--config", bad.string(), "--out", scratch("y").string()});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: invalid_config: ", 0) == 0);

    std::ofstream(bad) << R"({"preset": "toy"})";
    r = cli({"synth", "--config", bad.string(), "--preset", "paper-shape", "--out", scratch("y").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("conflicts") != std::string::npos);

    r = cli({"synth"});
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error: missing_argument: ", 0) == 0);

    r = cli({"pseudo-labels", "--corpus", scratch("no-corpus").string(), "--out", scratch("z").string()});
    CHECK(r.code == 1);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("param-count prints an itemisation and total") {
    const auto r = cli({"param-count"});
    CHECK(r.code == 0);
    CHECK(r.out.find("encoder.conv0") != std::string::npos);
    CHECK(r.out.find("total") != std::string::npos);
    CHECK(r.out.find("17970676") != std::string::npos);
    CHECK(r.err.empty());
}

TEST_CASE("synth and pseudo-labels write config, outputs and a hash manifest; reruns are byte-identical") {
    const auto cfg = tiny_config().string();
    const auto s = scratch("run-synth"), l1 = scratch("run-labels-1"), l2 = scratch("run-labels-2");
    for (const auto &d : {s, l1, l2}) {
        fs::remove_all(d);
    }
    auto r = cli({"synth", "--config", cfg, "--seed", "4", "--out", s.string()});
    REQUIRE(r.code == 0);
    CHECK(fs::exists(s / "corpus" / "index.json"));

    const auto config = read_json(s / "config.json");
    CHECK(config.at("command") == "synth");
    CHECK(config.at("experiment").at("seed") == 4);
    CHECK(config.at("experiment").at("synth").at("num_utterances") == 6);

    const auto manifest = read_json(s / "manifest.json");
    CHECK(manifest.at("outputs").at("config.json") == file_sha256((s / "config.json").string()));
    CHECK(manifest.at("outputs").contains("corpus"));
    CHECK(slurp(s / "manifest.json").find("time") == std::string::npos);

    // the run directory and its corpus/ subdirectory are both accepted
    REQUIRE(cli({"pseudo-labels", "--config", cfg, "--seed", "4", "--corpus", s.string(), "--out", l1.string()})
                .code == 0);
    REQUIRE(cli({"pseudo-labels", "--config", cfg, "--seed", "4", "--corpus", (s / "corpus").string(), "--out",
                 l2.string()})
                .code == 0);
    CHECK(slurp(l1 / "labels.bin") == slurp(l2 / "labels.bin"));
    CHECK(slurp(l1 / "manifest.json") == slurp(l2 / "manifest.json"));
    const auto lm = read_json(l1 / "manifest.json");
    CHECK(lm.at("inputs").at("corpus").at("sha256") == manifest.at("outputs").at("corpus"));
    CHECK(lm.at("outputs").at("labels.bin") == file_sha256((l1 / "labels.bin").string()));

    // a different seed changes the clustering input stream
    const auto l3 = scratch("run-labels-3");
    fs::remove_all(l3);
    REQUIRE(cli({"pseudo-labels", "--config", cfg, "--seed", "5", "--corpus", s.string(), "--out", l3.string()})
                .code == 0);
    CHECK(read_json(l3 / "config.json").at("experiment").at("seed") == 5);
}
