#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using namespace wda;
using cli::json;

namespace {

const std::string kData = WDA_TEST_DATA_DIR;

struct Outcome {
    int code;
    std::string out;
    std::string err;
    json report() const { return json::parse(out); }
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("wda_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override {
        for (const auto& e : fs::directory_iterator(dir))
            EXPECT_EQ(e.path().filename().string().find(".tmp."), std::string::npos) << e.path();
        fs::remove_all(dir);
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    fs::path dir;
};

}  // namespace

TEST_F(Cli, BalanceSkStallsOnK1) {
    const Outcome r = run({"balance", "--builtin", "k1", "--alg", "sk", "--max-iter", "50"});
    EXPECT_EQ(r.code, cli::kNotConverged) << r.err;
    const json j = r.report();
    EXPECT_FALSE(j["converged"].get<bool>());
    EXPECT_EQ(j["iterations"].get<int>(), 50);
    EXPECT_EQ(j["error"].size(), 50u);
    EXPECT_EQ(j["config"]["epsilon"].get<double>(), 1e-8);
}

TEST_F(Cli, BalanceAccSkRecovers) {
    for (const char* k : {"k1", "k2"}) {
        const Outcome r = run({"balance", "--builtin", k, "--alg", "accsk"});
        EXPECT_EQ(r.code, cli::kOk) << r.err;
        const json j = r.report();
        EXPECT_TRUE(j["converged"].get<bool>());
        EXPECT_LE(j["iterations"].get<int>(), 15);
        EXPECT_LT(j["marginal_residual"].get<double>(), 1e-5);
    }
}

TEST_F(Cli, BalanceUniformOneIteration) {
    const Outcome r = run({"balance", "--builtin", "uniform", "--alg", "accsk", "--size", "4"});
    EXPECT_EQ(r.code, cli::kOk);
    EXPECT_EQ(r.report()["iterations"].get<int>(), 1);
}

TEST_F(Cli, BalanceKernelFileAndPowerMethod) {
    write_text(path("k.csv"), "2,1\n1,2\n");
    const Outcome r = run({"balance", "--kernel", path("k.csv"), "--eig-method", "power", "--tol", "1e-8", "--out", path("rep.json")});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    const json j = read_json(path("rep.json"));
    EXPECT_EQ(j["command"], "balance");
    EXPECT_EQ(j["version"], kVersion);
    EXPECT_EQ(j["config"]["eig_method"], "power");
    EXPECT_NEAR(j["total_mass"].get<double>(), 1.0, 1e-8);
}

TEST_F(Cli, BalanceErrors) {
    EXPECT_EQ(run({"balance"}).code, cli::kValidation);
    EXPECT_EQ(run({"balance", "--builtin", "k1", "--kernel", "x.csv"}).code, cli::kValidation);
    EXPECT_EQ(run({"balance", "--builtin", "k9"}).code, cli::kValidation);
    EXPECT_EQ(run({"balance", "--builtin", "k1", "--tol", "-1"}).code, cli::kValidation);
    write_text(path("bad.csv"), "1,x\n");
    EXPECT_EQ(run({"balance", "--kernel", path("bad.csv")}).code, cli::kParse);
    write_text(path("neg.csv"), "1,-1\n");
    EXPECT_EQ(run({"balance", "--kernel", path("neg.csv")}).code, cli::kValidation);
}

TEST_F(Cli, FitWritesProjectionAndReport) {
    const Outcome r = run({"fit", "--synthetic", "--lambda", "0.01", "--p", "2", "--out", path("p.txt")});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    const Projection p = cli::load_projection(path("p.txt"));
    EXPECT_EQ(p.dim(), 10);
    EXPECT_EQ(p.rank(), 2);
    const json j = read_json(path("p.txt.json"));
    EXPECT_EQ(j["command"], "fit");
    EXPECT_TRUE(j["converged"].get<bool>());
    EXPECT_EQ(j["config"]["lambda"].get<double>(), 0.01);
    EXPECT_EQ(j["config"]["p"].get<int>(), 2);
    EXPECT_EQ(j["data"]["source"], "synthetic");
    const auto f = j["trace"]["objective"].get<std::vector<double>>();
    ASSERT_GE(f.size(), 2u);
    double worst = 0;
    for (std::size_t k = 1; k < f.size(); ++k) worst = std::max(worst, f[k - 1] - f[k]);
    EXPECT_EQ(j["trace"]["max_objective_decrease"].get<double>(), worst);
    EXPECT_EQ(j["objective"].get<double>(), f.back());
    EXPECT_EQ(j["trace"]["subspace_step"].size(), static_cast<std::size_t>(j["iterations"].get<int>()));
    EXPECT_EQ(j["standardization"]["means"].size(), 10u);
    const auto proj = j["projection"].get<std::vector<std::vector<double>>>();
    for (Eigen::Index a = 0; a < 10; ++a)
        for (Eigen::Index b = 0; b < 2; ++b) EXPECT_EQ(proj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)], p.matrix()(a, b));
}

TEST_F(Cli, FitTraceToStdoutWithoutOut) {
    const Outcome r = run({"fit", "--synthetic", "--d", "4", "--counts", "10,12,10"});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_EQ(r.report()["data"]["counts"], json({10, 12, 10}));
}

TEST_F(Cli, ZeroLambdaMatchesLdaInit) {
    ASSERT_EQ(run({"fit", "--synthetic", "--lambda", "0", "--out", path("a.txt")}).code, cli::kOk);
    ASSERT_EQ(run({"fit", "--synthetic", "--lambda", "0", "--init", "lda", "--out", path("b.txt")}).code, cli::kOk);
    EXPECT_LT(subspace_distance(cli::load_projection(path("a.txt")), cli::load_projection(path("b.txt"))), 1e-8);
}

TEST_F(Cli, FitNonConvergenceExitCode) {
    EXPECT_EQ(run({"fit", "--synthetic", "--max-outer-iter", "1"}).code, cli::kNotConverged);
}

TEST_F(Cli, FitParseErrors) {
    EXPECT_EQ(run({"fit", "--data", kData + "/malformed.csv"}).code, cli::kParse);
    EXPECT_EQ(run({"fit", "--data", kData + "/ragged.csv"}).code, cli::kParse);
    EXPECT_EQ(run({"fit", "--data", path("missing.csv")}).code, cli::kParse);
}

TEST_F(Cli, FitValidationErrors) {
    EXPECT_EQ(run({"fit"}).code, cli::kValidation);
    EXPECT_EQ(run({"fit", "--synthetic", "--data", kData + "/toy.csv"}).code, cli::kValidation);
    EXPECT_EQ(run({"fit", "--synthetic", "--lambda", "-1"}).code, cli::kValidation);
    EXPECT_EQ(run({"fit", "--synthetic", "--p", "11"}).code, cli::kValidation);
    EXPECT_EQ(run({"fit", "--synthetic", "--counts", "31,40,30"}).code, cli::kValidation);
    EXPECT_EQ(run({"fit", "--synthetic", "--bogus"}).code, cli::kValidation);
    EXPECT_EQ(run({"frobnicate"}).code, cli::kValidation);
    EXPECT_EQ(run({}).code, cli::kValidation);
}

TEST_F(Cli, FitOnCsvData) {
    const Outcome r = run({"fit", "--data", kData + "/toy_lda.csv", "--lambda", "0.1", "--ridge", "--out", path("p.txt")});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_EQ(read_json(path("p.txt.json"))["config"]["ridge"].get<double>(), 1.0);
    EXPECT_EQ(cli::load_projection(path("p.txt")).dim(), 3);
}

TEST_F(Cli, ConfigFile) {
    write_text(path("cfg.json"), R"({"lambda": 0.1, "p": 3, "synthetic": true, "d": 5})");
    const Outcome r = run({"fit", "--config", path("cfg.json"), "--p", "1"});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    const json j = r.report();
    EXPECT_EQ(j["config"]["lambda"].get<double>(), 0.1);
    EXPECT_EQ(j["config"]["p"].get<int>(), 1);
    EXPECT_EQ(j["data"]["d"].get<int>(), 5);
}

TEST_F(Cli, ConfigFileRejectsUnknownKey) {
    write_text(path("cfg.json"), R"({"lambda": 0.1, "lamda": 0.2})");
    const Outcome r = run({"fit", "--synthetic", "--config", path("cfg.json")});
    EXPECT_EQ(r.code, cli::kValidation);
    EXPECT_NE(r.err.find("lamda"), std::string::npos);
    write_text(path("bad.json"), "{not json");
    EXPECT_NE(run({"fit", "--synthetic", "--config", path("bad.json")}).code, cli::kOk);
}

TEST_F(Cli, SeedFromEnvironment) {
    ::setenv("WDA_SEED", "17", 1);
    const Outcome fromEnv = run({"fit", "--synthetic", "--d", "4"});
    const Outcome explicitSeed = run({"fit", "--synthetic", "--d", "4", "--seed", "3"});
    ::unsetenv("WDA_SEED");
    ASSERT_EQ(fromEnv.code, cli::kOk);
    EXPECT_EQ(fromEnv.report()["config"]["seed"].get<std::uint64_t>(), 17u);
    EXPECT_EQ(explicitSeed.report()["config"]["seed"].get<std::uint64_t>(), 3u);
    EXPECT_EQ(run({"fit", "--synthetic", "--d", "4"}).report()["config"]["seed"].get<std::uint64_t>(), 0u);
}

TEST_F(Cli, ThreadsFromEnvironment) {
    ::setenv("WDA_THREADS", "2", 1);
    const Outcome r = run({"fit", "--synthetic", "--d", "4"});
    ::unsetenv("WDA_THREADS");
    EXPECT_EQ(r.report()["config"]["threads"].get<int>(), 2);
}

TEST_F(Cli, Deterministic) {
    const Outcome a = run({"fit", "--synthetic", "--seed", "5"});
    const Outcome b = run({"fit", "--synthetic", "--seed", "5"});
    EXPECT_EQ(a.report()["projection"], b.report()["projection"]);
    EXPECT_EQ(a.report()["trace"]["objective"], b.report()["trace"]["objective"]);
}

TEST_F(Cli, ProjectionFileRoundTrip) {
    const Projection p = Projection::random(7, 3, 11);
    std::istringstream in(cli::format_projection(p));
    EXPECT_EQ(cli::parse_projection(in).matrix(), p.matrix());
    std::istringstream shortFile("3 2\n1 0\n0 1\n");
    EXPECT_THROW(cli::parse_projection(shortFile), ParseError);
    std::istringstream badHeader("2 3\n");
    EXPECT_THROW(cli::parse_projection(badHeader), ParseError);
    std::istringstream notOrtho("2 1\n1\n1\n");
    EXPECT_THROW(cli::parse_projection(notOrtho), DomainError);
}

TEST_F(Cli, Transform) {
    ASSERT_EQ(run({"fit", "--data", kData + "/toy_lda.csv", "--out", path("p.txt")}).code, cli::kOk);
    const Outcome r = run({"transform", "--projection", path("p.txt"), "--data", kData + "/toy_lda.csv", "--stats", path("p.txt.json"),
                       "--out", path("t.csv")});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    const LabeledDataset t = load_csv(path("t.csv"));
    EXPECT_EQ(t.dim(), 2);
    EXPECT_EQ(t.total_points(), 30);
    EXPECT_EQ(t.classes[0].label, load_csv(kData + "/toy_lda.csv").classes[0].label);

    const LabeledDataset raw = standardize(load_csv(kData + "/toy_lda.csv"));
    const Matrix expect = transform(cli::load_projection(path("p.txt")), raw.classes[1].points);
    EXPECT_LT((t.classes[1].points - expect).cwiseAbs().maxCoeff(), 1e-12);

    EXPECT_EQ(run({"transform", "--projection", path("p.txt"), "--data", kData + "/toy.csv"}).code, cli::kValidation);
    EXPECT_EQ(run({"transform", "--projection", path("nope.txt"), "--data", kData + "/toy.csv"}).code, cli::kParse);
    EXPECT_EQ(run({"transform", "--data", kData + "/toy.csv"}).code, cli::kValidation);
}

TEST_F(Cli, EvalSynthetic) {
    const Outcome r = run({"eval", "--synthetic", "--p", "2", "--K", "10", "--repeats", "20", "--baseline", "--csv", path("e.csv")});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    const json j = r.report();
    EXPECT_LE(j["error"].get<double>(), 0.05);
    EXPECT_EQ(j["per_repeat_errors"].size(), 20u);
    EXPECT_EQ(j["baseline_errors"].size(), 20u);
    EXPECT_EQ(j["config"]["K"].get<int>(), 10);
    std::ifstream csv(path("e.csv"));
    std::string header;
    std::getline(csv, header);
    EXPECT_EQ(header, "repeat,error,baseline_error");
}

TEST_F(Cli, EvalIdentityDiagnostic) {
    const Outcome r = run({"eval", "--synthetic", "--identity", "--K", "1", "--repeats", "1"});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    EXPECT_EQ(r.report()["error"].get<double>(), 0.0);
}

TEST_F(Cli, EvalRejectsZeroNeighbours) {
    const Outcome r = run({"eval", "--synthetic", "--K", "0"});
    EXPECT_EQ(r.code, cli::kValidation);
    EXPECT_FALSE(r.err.empty());
    EXPECT_EQ(run({"eval", "--synthetic", "--train-fraction", "1.5"}).code, cli::kValidation);
}

TEST_F(Cli, Bench) {
    const Outcome r = run({"bench", "--axis", "p", "--grid", "1,2,3", "--repeats", "1", "--fixed-n", "40", "--csv", path("b.csv")});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    const json j = r.report();
    EXPECT_EQ(j["rows"].size(), 3u);
    EXPECT_TRUE(j.contains("linear_slope"));
    EXPECT_TRUE(j.contains("r2"));
    EXPECT_EQ(j["config"]["ridge"].get<double>(), 1.0);
    EXPECT_TRUE(fs::exists(path("b.csv")));
    EXPECT_TRUE(run({"bench", "--axis", "d", "--grid", "4,6,8", "--repeats", "1", "--fixed-n", "40"}).report().contains("loglog_slope"));
    EXPECT_EQ(run({"bench", "--axis", "d", "--grid", "8,6,4"}).code, cli::kValidation);
    EXPECT_EQ(run({"bench", "--axis", "d", "--grid", "4,x,8"}).code, cli::kValidation);
    EXPECT_EQ(run({"bench", "--axis", "q"}).code, cli::kValidation);
}

TEST_F(Cli, Tropt) {
    const Outcome r = run({"tropt", "--random", "6", "--p", "2", "--tol", "1e-10"});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    const json j = r.report();
    EXPECT_TRUE(j["converged"].get<bool>());
    const auto q = j["q_trace"].get<std::vector<double>>();
    for (std::size_t k = 1; k < q.size(); ++k) EXPECT_GE(q[k], q[k - 1] - 1e-12 * std::abs(q[k - 1]));

    write_text(path("a.csv"), "3,0,0\n0,2,0\n0,0,1\n");
    write_text(path("b.csv"), "1,0,0\n0,2,0\n0,0,3\n");
    const json d = run({"tropt", "--a", path("a.csv"), "--b", path("b.csv"), "--p", "1"}).report();
    EXPECT_NEAR(d["q"].get<double>(), 3.0, 1e-12);

    EXPECT_EQ(run({"tropt", "--p", "1"}).code, cli::kValidation);
    EXPECT_EQ(run({"tropt", "--random", "3", "--a", path("a.csv"), "--p", "1"}).code, cli::kValidation);
    write_text(path("z.csv"), "0,0,0\n0,0,0\n0,0,0\n");
    EXPECT_EQ(run({"tropt", "--a", path("a.csv"), "--b", path("z.csv"), "--p", "1"}).code, cli::kValidation);
}

TEST_F(Cli, VersionAndHelp) {
    const Outcome v = run({"--version"});
    EXPECT_EQ(v.code, cli::kOk);
    EXPECT_NE(v.out.find(kVersion), std::string::npos);
    const Outcome h = run({"fit", "--help"});
    EXPECT_EQ(h.code, cli::kOk);
    EXPECT_NE(h.out.find("--lambda"), std::string::npos);
}
