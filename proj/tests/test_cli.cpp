#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "specflat/io.hpp"

using namespace specflat;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("specflat_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    Result run(const std::string& args, const std::string& env = "") const {
        const std::string err = path("stderr.txt");
        const std::string cmd = env + " " + SPECFLAT_CLI_PATH + " " + args + " 2>" + err;
        Result r;
        FILE* p = ::popen(cmd.c_str(), "r");
        if (!p) return r;
        char buf[4096];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
        const int status = ::pclose(p);
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = read_text_file(err);
        return r;
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenFnWritesValidSpectrumAndManifest) {
    const auto r = run("gen-fn --t 20 --degree 2 --omega 10 --seed 7 --out " + path("f.json"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto f = load_spectrum(path("f.json"));
    EXPECT_EQ(f.T, 20);
    EXPECT_EQ(f.sparsity(), 10);
    EXPECT_EQ(f.degree(), 2);
    const Json m = load_json(path("f.json.manifest.json"));
    EXPECT_EQ(m.at("subcommand"), "gen-fn");
    EXPECT_EQ(m.at("seeds").at("master"), 7);
    EXPECT_EQ(m.at("artifacts").at(path("f.json")), fnv1a_file(path("f.json")));
}

TEST_F(Cli, SameSeedReproducesBytes) {
    ASSERT_EQ(run("--seed 3 gen-fn --t 16 --degree 3 --omega 5 --out " + path("a.json")).code, 0);
    ASSERT_EQ(run("gen-fn --t 16 --degree 3 --omega 5 --seed 3 --out " + path("b.json")).code, 0);
    ASSERT_EQ(run("gen-fn --t 16 --degree 3 --omega 5 --seed 4 --out " + path("c.json")).code, 0);
    EXPECT_EQ(read_text_file(path("a.json")), read_text_file(path("b.json")));
    EXPECT_NE(read_text_file(path("a.json")), read_text_file(path("c.json")));
}

TEST_F(Cli, BoundAtComparisonPoint) {
    const auto r = run(
        "bound --omega 10 --degree 2 --t 20 --m 1000000 --big-sigma 0.01 --delta 0.05 --variant truncated "
        "--optimize continuous");
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_NEAR(j.at("total").get<double>(), 0.239, 0.005);
    EXPECT_NEAR(j.at("sigma").get<double>(), 2.27e-3, 0.01e-3);
}

TEST_F(Cli, BoundWritesCsvRowNextToJson) {
    ASSERT_EQ(run("bound --omega 10 --degree 2 --t 20 --sigma-big 0.01 --out " + path("b.json")).code, 0);
    std::istringstream csv(read_text_file(path("b.json.csv")));
    std::string head, row, extra;
    std::getline(csv, head);
    std::getline(csv, row);
    EXPECT_EQ(head, "omega,degree,t,m,variant,sigma,sharpness_term,norm_term,total,no_flip_ok");
    EXPECT_EQ(row.rfind("10,2,20,", 0), 0U) << row;
    EXPECT_FALSE(std::getline(csv, extra));
}

TEST_F(Cli, VerifyExhaustiveAtTwelveBits) {
    ASSERT_EQ(run("gen-fn --t 12 --degree 3 --omega 4 --out " + path("f.json")).code, 0);
    const auto r = run("verify --spectrum " + path("f.json") + " --mode idealized --exhaustive");
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j.at("points"), 4096);
    EXPECT_LE(j.at("max_err").get<double>(), 1e-9);
}

TEST_F(Cli, BuildThenSharpnessFromParameterDirectory) {
    ASSERT_EQ(run("gen-fn --t 8 --degree 1 --omega 2 --out " + path("f.json")).code, 0);
    ASSERT_EQ(run("build --spectrum " + path("f.json") + " --out " + path("theta")).code, 0);
    EXPECT_TRUE(fs::exists(path("theta/manifest.json")));
    EXPECT_TRUE(fs::exists(path("theta/run_manifest.json")));
    const auto r = run("sharpness --theta " + path("theta") + " --dataset sample:64 --sigma-mesh 0,1e-3 --draws 4 --out " +
                       path("s.json"));
    const Json j = load_json(path("s.json"));
    EXPECT_EQ(j.at("points"), 64);
    EXPECT_TRUE(j.at("identity_ok").get<bool>());
    EXPECT_TRUE(j.at("dominance_ok").get<bool>());
    // Exit status reflects the norm check alongside identity and dominance.
    EXPECT_EQ(r.code, j.at("norm_ok").get<bool>() ? 0 : 2);
    std::istringstream csv(read_text_file(path("s.json.csv")));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "sigma,trace,stderr");
    int rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 2);
}

TEST_F(Cli, SharpnessRejectsBadDatasetSpec) {
    ASSERT_EQ(run("gen-fn --t 6 --degree 1 --omega 1 --out " + path("f.json")).code, 0);
    EXPECT_EQ(run("sharpness --spectrum " + path("f.json") + " --dataset most").code, 1);
}

TEST_F(Cli, UnknownFlagPrintsUsageAndExitsOne) {
    const auto r = run("gen-fn --t 4 --degree 1 --omega 1 --bogus");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
    EXPECT_EQ(run("no-such-command").code, 1);
    EXPECT_EQ(run("").code, 1);
}

TEST_F(Cli, MissingInputFileExitsOne) {
    const auto r = run("verify --spectrum " + path("nope.json"));
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, DenseLimitExitsThree) {
    ASSERT_EQ(run("gen-fn --t 8 --degree 1 --omega 1 --out " + path("f.json")).code, 0);
    EXPECT_EQ(run("fwht --spectrum " + path("f.json"), "SPECFLAT_FWHT_LIMIT=6").code, 3);
    EXPECT_EQ(run("fwht --spectrum " + path("f.json")).code, 0);
}

TEST_F(Cli, SeparationViolationExitsTwo) {
    const auto ok = run("cot-compare --t-list 8 --m 8192 --sigma 1e-4 --big-sigma 0.01");
    EXPECT_EQ(ok.code, 0) << ok.err;
    EXPECT_EQ(ok.out.substr(0, ok.out.find('\n')).find("T"), 0U);
    EXPECT_EQ(run("cot-compare --t-list 2,8 --m 8192 --sigma 1e-4 --big-sigma 0.01").code, 2);
}

TEST_F(Cli, SweepBoundGridShape) {
    const auto r = run("sweep-bound --t 20 --degrees 1,2,3 --omegas 1,10");
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream csv(r.out);
    std::string line;
    int rows = -1;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 6);
}

TEST_F(Cli, PropertyTestersEmitSweepCsv) {
    ASSERT_EQ(run("gen-fn --t 10 --degree 2 --omega 3 --out " + path("f.json")).code, 0);
    const auto d = run("test-degree --spectrum " + path("f.json") + " --max 8 --eps 1e-3 --delta 1e-4");
    ASSERT_EQ(d.code, 0) << d.err;
    EXPECT_EQ(d.out.rfind("true_level,accepted_level,queries\n2,2,", 0), 0U) << d.out;
    const auto s = run("test-sparsity --spectrum " + path("f.json") + " --max 20 --eps 1e-3 --delta 1e-3 --k 10");
    ASSERT_EQ(s.code, 0) << s.err;
    EXPECT_EQ(s.out.rfind("true_level,accepted_level,queries\n3,3,", 0), 0U) << s.out;
}

TEST_F(Cli, PerturbStudyIsThreadCountInvariant) {
    write_text_file(path("study.json"),
                    R"({"sigma_mesh": [0.001, 0.01], "omega_list": [2], "degree_list": [1, 2], "t_list": [8],
                        "n_functions": 3, "dataset_size": 8})");
    ASSERT_EQ(run("--threads 1 perturb-study --config " + path("study.json") + " --out " + path("a.csv")).code, 0);
    ASSERT_EQ(run("--threads 3 perturb-study --config " + path("study.json") + " --out " + path("b.csv")).code, 0);
    EXPECT_EQ(read_text_file(path("a.csv")), read_text_file(path("b.csv")));
    EXPECT_EQ(read_text_file(path("a.csv")).substr(0, 32), "sigma,omega,degree,t,p90,pmax,n\n");
}
