#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rlrds/serialize.hpp"

namespace fs = std::filesystem;
using rlrds::Json;

namespace {

const std::string kCli = RLRDS_CLI;
const std::string kData = RLRDS_TEST_DATA;

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Concatenated contents of every file in dir, in name order.
std::string dir_contents(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += f.filename().string() + "\n" + slurp(f);
    return all;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("rlrds_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("golden trajectory replays exactly") {
    const fs::path out = scratch("golden_run");
    REQUIRE(run("run-study --config " + kData + "/golden/config.json --out " + out.string()) == 0);
    CHECK(slurp(out / "trajectory.csv") == slurp(fs::path(kData) / "golden/trajectory.csv"));
}

TEST_CASE("fit reproduces the stored estimate") {
    const fs::path out = scratch("golden_fit");
    REQUIRE(run("fit --config " + kData + "/golden/config.json --trajectory " + kData +
                "/golden/trajectory.csv --format json --out " + out.string()) == 0);
    const Json got = Json::parse(slurp(out / "beta_hat.json"));
    const Json want = Json::parse(slurp(fs::path(kData) / "golden/beta_hat.json"));
    const auto a = rlrds::to_flat(rlrds::branching_from_json(got));
    const auto b = rlrds::to_flat(rlrds::branching_from_json(want));
    REQUIRE(a.size() == b.size());
    for (int i = 0; i < a.size(); ++i) CHECK(std::abs(a(i) - b(i)) <= 1e-8 * std::max(1.0, std::abs(b(i))));
}

TEST_CASE("usage and configuration errors exit with 2") {
    const std::string cfg = kData + "/cli_small.json";
    CHECK(run("gen-network --config " + cfg + " --bogus 1") == 2);
    CHECK(run("gen-network") == 2);
    CHECK(run("") == 2);
    CHECK(run("gen-network --config " + cfg + " --format xml") == 2);
    const fs::path bad = scratch("bad") / "bad.json";
    fs::create_directories(bad.parent_path());
    std::ofstream(bad) << R"({"replicates": -4})";
    CHECK(run("compare-policies --config " + bad.string()) == 2);
    std::ofstream(bad) << "{ not json";
    CHECK(run("gen-network --config " + bad.string()) == 2);
}

TEST_CASE("every subcommand is deterministic across runs and thread counts") {
    const std::string cfg = kData + "/cli_small.json";
    const std::string traj = kData + "/golden/trajectory.csv";
    const std::vector<std::pair<std::string, std::string>> cmds{
        {"gen-network", "gen-network --config " + cfg},
        {"run-study", "run-study --config " + cfg},
        {"fit", "fit --config " + kData + "/golden/config.json --trajectory " + traj},
        {"infer", "infer --config " + cfg},
        {"compare-policies", "compare-policies --config " + cfg},
        {"coverage", "coverage --config " + cfg},
    };
    for (const auto& [name, cmd] : cmds) {
        CAPTURE(name);
        std::vector<std::string> seen;
        int k = 0;
        for (const char* threads : {"1", "4", "4"}) {
            const fs::path out = scratch(name + std::to_string(k++));
            REQUIRE(run(cmd + " --threads " + threads + " --out " + out.string()) == 0);
            seen.push_back(dir_contents(out));
        }
        CHECK(!seen[0].empty());
        CHECK(seen[0] == seen[1]);
        CHECK(seen[1] == seen[2]);
    }
}

TEST_CASE("seed override changes the output") {
    const std::string cfg = kData + "/cli_small.json";
    const fs::path a = scratch("seed_a"), b = scratch("seed_b");
    REQUIRE(run("gen-network --config " + cfg + " --out " + a.string()) == 0);
    REQUIRE(run("gen-network --config " + cfg + " --seed 12345 --out " + b.string()) == 0);
    CHECK(dir_contents(a) != dir_contents(b));
}

}
