#include <cardiodg/dataio.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace {

namespace fs = std::filesystem;

struct CliRun {
    int code = -1;
    std::string output;
};

CliRun cli(const std::string &args, const std::string &env = "")
{
    const std::string cmd = env + " " + std::string(CARDIODG_CLI_PATH) + " " + args + " 2>&1";
    CliRun r;
    FILE *p = ::popen(cmd.c_str(), "r");
    if (!p)
        return r;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0)
        r.output.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// One small two-domain dataset plus a short training run, shared by the suite.
class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite()
    {
        dir_ = fs::temp_directory_path() / ("cardiodg_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        ds_ = dir_ / "ds";
        const CliRun s = cli("synth --out " + ds_.string() + " --domains 2 --records-per-domain 20 --mix balanced");
        ASSERT_EQ(s.code, 0) << s.output;
        const CliRun t = cli("train --manifest " + (ds_ / "manifest.json").string() +
                          " --variant full --epochs 2 --quiet --out " + (dir_ / "full.ckpt").string());
        ASSERT_EQ(t.code, 0) << t.output;
    }
    static void TearDownTestSuite() { fs::remove_all(dir_); }

    static std::string manifest() { return (ds_ / "manifest.json").string(); }

    static inline fs::path dir_, ds_;
};

TEST_F(Cli, UsageErrorsExitTwo)
{
    EXPECT_EQ(cli("").code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
    EXPECT_EQ(cli("synth --out " + (dir_ / "z").string() + " --domains 0").code, 2);
    const CliRun missing = cli("train --manifest " + (dir_ / "absent.json").string() + " --variant full --out x.ckpt");
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.output.find("manifest not found"), std::string::npos);
    EXPECT_EQ(cli("train --manifest " + manifest() + " --variant huge --out x.ckpt").code, 2);
    EXPECT_EQ(cli("bench --variant full --runs 5").code, 2);
    EXPECT_EQ(cli("synth --out " + (dir_ / "z").string(), "CARDIO_DG_SEED=notanumber").code, 2);
    EXPECT_EQ(cli("--version").code, 0);
}

TEST_F(Cli, TrainWritesProvenancedArtifacts)
{
    for (const char *suffix : {".ckpt", ".trainlog.json", ".trainlog.csv", ".config.json"})
        EXPECT_TRUE(fs::exists(dir_ / (std::string("full") + suffix))) << suffix;
    const auto cfg = nlohmann::json::parse(slurp(dir_ / "full.config.json"));
    EXPECT_EQ(cfg.at("seed"), 42);
    EXPECT_EQ(cfg.at("manifest_hash"), cardiodg::hash_file(ds_ / "manifest.json"));
    EXPECT_EQ(cfg.at("config").at("variant"), "full");
    EXPECT_EQ(slurp(dir_ / "full.trainlog.csv").rfind("# {", 0), 0u);
    const auto cp = cardiodg::load_checkpoint(dir_ / "full.ckpt");
    EXPECT_EQ(cp.meta.protocol, "intra:ALL");
    EXPECT_EQ(cp.meta.seed, 42u);
}

TEST_F(Cli, SeedPrecedenceFlagOverEnvironment)
{
    const auto a = dir_ / "env";
    const auto b = dir_ / "flag";
    ASSERT_EQ(cli("synth --out " + a.string() + " --domains 1 --records-per-domain 7", "CARDIO_DG_SEED=9").code, 0);
    ASSERT_EQ(cli("synth --out " + b.string() + " --domains 1 --records-per-domain 7 --seed 3",
                  "CARDIO_DG_SEED=9")
                  .code,
              0);
    EXPECT_EQ(nlohmann::json::parse(slurp(a / "synth_config.json")).at("seed"), 9);
    EXPECT_EQ(nlohmann::json::parse(slurp(b / "synth_config.json")).at("seed"), 3);
}

TEST_F(Cli, EvalReportsAndStressLabel)
{
    const auto out = dir_ / "rep";
    const CliRun e = cli("eval --ckpt " + (dir_ / "full.ckpt").string() + " --manifest " + manifest() + " --out " +
                      out.string() + " --stress lead-drop:3");
    ASSERT_EQ(e.code, 0) << e.output;
    const auto rep = nlohmann::json::parse(slurp(out / "full.lead-drop-3.report.json"));
    EXPECT_EQ(rep.at("stress"), "lead-drop:3");
    EXPECT_EQ(rep.at("protocol"), "intra:ALL");
    EXPECT_TRUE(rep.contains("provenance"));
    EXPECT_TRUE(fs::exists(out / "full.lead-drop-3.confusion.csv"));
}

TEST_F(Cli, RefusesLeakedTargetDomain)
{
    // Trained on every domain, so any LODO target has been seen.
    const CliRun e = cli("eval --ckpt " + (dir_ / "full.ckpt").string() + " --manifest " + manifest() +
                      " --protocol lodo:ptbxl-like --out " + (dir_ / "leak").string());
    EXPECT_EQ(e.code, 1);
    EXPECT_NE(e.output.find("target domain leaked into training"), std::string::npos);
}

TEST_F(Cli, ComparisonNeedsFivePairs)
{
    const CliRun e = cli("eval --ckpt " + (dir_ / "full.ckpt").string() + " --compare " + (dir_ / "full.ckpt").string() +
                      " --manifest " + manifest() + " --out " + (dir_ / "cmp").string());
    EXPECT_EQ(e.code, 1);
    EXPECT_NE(e.output.find("insufficient pairs"), std::string::npos);
}

TEST_F(Cli, ExplainWritesOverlayAndRejectsUnknownRecord)
{
    const auto m = cardiodg::load_manifest(ds_ / "manifest.json", false);
    const std::string id = m.records.front().id;
    const auto out = dir_ / "x" / "overlay.csv";
    const CliRun e = cli("explain --ckpt " + (dir_ / "full.ckpt").string() + " --manifest " + manifest() +
                      " --record-id " + id + " --out " + out.string());
    ASSERT_EQ(e.code, 0) << e.output;
    std::ifstream in(out);
    std::string line;
    std::size_t lines = 0;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# {", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "t,time_s,II,V1,importance");
    while (std::getline(in, line))
        ++lines;
    EXPECT_EQ(lines, 2500u);
    EXPECT_EQ(cli("explain --ckpt " + (dir_ / "full.ckpt").string() + " --manifest " + manifest() +
                  " --record-id nobody --out " + out.string())
                  .code,
              1);
}

TEST_F(Cli, BenchReportsCounts)
{
    const auto out = dir_ / "bench.json";
    const CliRun b = cli("bench --ckpt " + (dir_ / "full.ckpt").string() + " --runs 10 --out " + out.string());
    ASSERT_EQ(b.code, 0) << b.output;
    const auto j = nlohmann::json::parse(slurp(out));
    EXPECT_GT(j.at("params").get<double>(), 0);
    EXPECT_GT(j.at("flops").get<double>(), 0);
    EXPECT_EQ(j.at("runs"), 10);
}

} // namespace
