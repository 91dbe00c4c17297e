#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "qzd/scenario.hpp"

using namespace qzd;
namespace fs = std::filesystem;

namespace {

std::string where_of(const std::string& text) {
    try {
        scenario_from_text(text);
    } catch (const ConfigError& e) {
        return e.where();
    }
    return "<accepted>";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(QZD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("qzd_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Config, ReportsTheFieldPathOfUnknownKeys) {
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "drive": {"omega_rfx_mhz": 1}})"), "drive.omega_rfx_mhz");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "colour": 3})"), "colour");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "ramsey": {"delays": {"count": 0}}})"), "ramsey.delays.count");
}

TEST(Config, ReportsLineAndColumnOfSyntaxErrors) {
    EXPECT_EQ(where_of("{\n  \"schema_version\": 1,\n  \"kind\": ,\n}"), "line 3, column 11");
    // comments are not JSON
    EXPECT_EQ(where_of("{\n  // note\n  \"schema_version\": 1}").rfind("line 2", 0), 0u);
}

TEST(Config, RejectsBadValues) {
    EXPECT_EQ(where_of(R"({"kind": "ramsey"})"), "schema_version");
    EXPECT_EQ(where_of(R"({"schema_version": 2, "kind": "ramsey"})"), "schema_version");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "teleport"})"), "kind");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "k_z": 60})"), "k_z");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "drive": {"omega_mw_mhz": "fast"}})"), "drive.omega_mw_mhz");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "cat_wigner", "drive": {"omega_mw_mhz": 0}})"), "drive");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "sequence": {"gap_us": 1, "gap_ns": 1}})"), "sequence.gap");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "inhomogeneity": {"samples": 4}})"), "inhomogeneity.samples");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "ramsey", "detection": {"steps": [7]}})"), "detection.steps");
    EXPECT_EQ(where_of(R"({"schema_version": 1, "kind": "tomography_roundtrip", "tomography": {"shots": 0}})"),
              "tomography.shots");
}

TEST(Config, ConvertsUnits) {
    const Scenario sc = scenario_from_text(R"({
        "schema_version": 1, "kind": "cat_wigner", "k_z": 4, "t1_ns": 760,
        "drive": {"omega_mw_mhz": 3.08, "detuning_mhz": 0.1},
        "sequence": {"gap_ns": 30, "t1_offset_us": 0.05}})");
    EXPECT_NEAR(sc.t1, 0.76, 1e-12);
    EXPECT_NEAR(sc.sequence.gap, 0.03, 1e-12);
    EXPECT_NEAR(sc.sequence.t1_offset, 0.05, 1e-12);
    EXPECT_NEAR(sc.setup.params.omega_mw, kTwoPi * 3.08, 1e-12);
    EXPECT_NEAR(sc.setup.params.detuning, kTwoPi * 0.1, 1e-12);
    EXPECT_NEAR(sc.setup.nominal.stark_frequency(), kTwoPi * 230.15, 1e-9);
    EXPECT_EQ(sc.resolved["t1_us"], 0.76);
}

TEST(Config, KindDefaults) {
    const Scenario qzd = scenario_from_text(R"({"schema_version": 1, "kind": "qzd_populations"})");
    EXPECT_EQ(qzd.setup.k_z, 5);
    EXPECT_TRUE(qzd.sequence.zeno_on);
    EXPECT_TRUE(qzd.sequence.switch_off.has_value());
    EXPECT_GT(qzd.inhomogeneity.relative_sigma, 0.0);
    const Scenario free = scenario_from_text(R"({"schema_version": 1, "kind": "free_rotation"})");
    EXPECT_FALSE(free.sequence.zeno_on);
    EXPECT_EQ(free.inhomogeneity.relative_sigma, 0.0);
    EXPECT_EQ(free.times.count, 50);
}

TEST(Config, HashDependsOnValuesOnly) {
    const std::string a = parameter_hash(scenario_from_text(R"({"schema_version": 1, "kind": "ramsey", "seed": 3})").resolved);
    const std::string b = parameter_hash(scenario_from_text(R"({"seed": 3, "kind": "ramsey", "schema_version": 1})").resolved);
    const std::string c = parameter_hash(scenario_from_text(R"({"schema_version": 1, "kind": "ramsey", "seed": 4})").resolved);
    const std::string d =
        parameter_hash(scenario_from_text(R"({"schema_version": 1, "kind": "ramsey", "seed": 3, "t1_ns": 760})").resolved);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_EQ(a, d);   // 760 ns is the default t1
    EXPECT_EQ(a.size(), 16u);
}

TEST(Cli, ValidatesEveryShippedScenario) {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(QZD_SCENARIO_DIR)) {
        if (entry.path().extension() != ".json") continue;
        ++seen;
        EXPECT_EQ(run_cli("run --validate-only " + entry.path().string()), 0) << entry.path();
        EXPECT_NO_THROW(load_scenario(entry.path().string())) << entry.path();
    }
    EXPECT_GE(seen, 6);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("codes");
    std::ofstream(dir / "bad.json") << R"({"schema_version": 1, "kind": "ramsey", "drive": {"bogus_mhz": 1}})";
    EXPECT_EQ(run_cli("run " + (dir / "bad.json").string() + " --out-dir " + (dir / "o").string()), 2);
    EXPECT_FALSE(fs::exists(dir / "o"));
    EXPECT_EQ(run_cli("run " + (dir / "missing.json").string()), 2);
    EXPECT_NE(run_cli("frobnicate"), 0);
    fs::remove_all(dir);
}

void expect_identical_rerun(const std::string& name, const std::string& extra = "") {
    const fs::path dir = scratch("rerun_" + name);
    const std::string cfg = std::string(QZD_SCENARIO_DIR) + "/" + name + ".json";
    ASSERT_EQ(run_cli("run " + cfg + " --out-dir " + (dir / "a").string() + " --threads 1" + extra), 0);
    ASSERT_EQ(run_cli("run " + cfg + " --out-dir " + (dir / "b").string() + " --threads 2" + extra), 0);
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        ++files;
        EXPECT_EQ(slurp(entry.path()), slurp(dir / "b" / entry.path().filename())) << name << "/" << entry.path().filename();
    }
    EXPECT_GE(files, 2);

    const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    EXPECT_EQ(manifest["schema_version"], kSchemaVersion);
    EXPECT_EQ(manifest["code_version"], kCodeVersion);
    const std::string hash = manifest["parameter_hash"];
    EXPECT_EQ(manifest["outputs"].size() + 1, static_cast<std::size_t>(files));
    for (const auto& entry : manifest["outputs"]) {
        const std::string file = entry;
        ASSERT_TRUE(fs::exists(dir / "a" / file)) << file;
        std::ifstream in(dir / "a" / file);
        if (file.ends_with(".csv")) {
            std::string first;
            std::getline(in, first);
            ASSERT_EQ(first.rfind("# ", 0), 0u) << file;
            EXPECT_EQ(nlohmann::json::parse(first.substr(2))["parameter_hash"], hash) << file;
        } else {
            EXPECT_EQ(nlohmann::json::parse(in)["parameter_hash"], hash) << file;
        }
    }
    fs::remove_all(dir);
}

TEST(Cli, RerunIsByteIdentical) {
    for (const char* name : {"free_rotation", "qzd_populations_kz5", "q_snapshots_kz4", "cat_wigner_kz4", "ramsey"}) {
        expect_identical_rerun(name);
    }
}

TEST(Cli, TomographyRerunIsByteIdentical) { expect_identical_rerun("tomography_kz4", " --seed 5"); }

TEST(Cli, SeedEntersTheHash) {
    const fs::path dir = scratch("seed");
    const std::string cfg = std::string(QZD_SCENARIO_DIR) + "/free_rotation.json";
    ASSERT_EQ(run_cli("run " + cfg + " --out-dir " + (dir / "a").string()), 0);
    ASSERT_EQ(run_cli("run " + cfg + " --seed 99 --out-dir " + (dir / "c").string()), 0);
    const auto a = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    const auto c = nlohmann::json::parse(slurp(dir / "c" / "manifest.json"));
    EXPECT_EQ(a["parameter_hash"], parameter_hash(load_scenario(cfg).resolved));
    EXPECT_NE(a["parameter_hash"], c["parameter_hash"]);
    EXPECT_EQ(c["parameters"]["seed"], 99);
    fs::remove_all(dir);
}
