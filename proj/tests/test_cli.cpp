#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <gtest/gtest.h>

#include "gctrl/cli.hpp"
#include "gctrl/config.hpp"

using namespace gctrl;
namespace fs = std::filesystem;

namespace {

const char* const kHeat = R"(
[ambiguity]
sigma_lo_sq = 0.25
sigma_hi_sq = 1

[problem]
horizon = 1
payoff = square

[solver]
x_min = -5
x_max = 5
n_x = 101
)";

const char* const kDesk = R"(
[ambiguity]
sigma_lo_sq = 0.25
sigma_hi_sq = 1

[market]
r = 0.02
alpha = 0.06
gamma = 0.2

[utility]
kappa = 2
beta = 0.1

[merton]
x_min = 0.4
x_max = 2.5
n_x = 61
n_rho = 20
)";

class Workspace : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        root_ = fs::temp_directory_path() / fmt_name(info->test_suite_name(), info->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    static std::string fmt_name(const std::string& a, const std::string& b) { return "gctrl_" + a + "_" + b; }

    std::string write_config(const std::string& text, const std::string& name = "run.cfg") {
        const fs::path p = root_ / name;
        std::ofstream(p) << text;
        return p.string();
    }

    struct Outcome {
        int code;
        std::string out;
        std::string err;
    };

    Outcome run(const std::string& command, const std::string& config, bool force = false,
                std::optional<std::uint64_t> seed = std::nullopt, const std::string& out_dir = "out") {
        CliOptions opts;
        opts.config_path = config;
        opts.output_dir = (root_ / out_dir).string();
        opts.force = force;
        opts.seed = seed;
        std::ostringstream out, err;
        const int code = run_command(command, opts, out, err);
        return {code, out.str(), err.str()};
    }

    [[nodiscard]] std::string slurp(const fs::path& p) const {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    // Value of `key = ...` in a report.
    static std::string report_value(const std::string& report, const std::string& key) {
        const std::string needle = "\n" + key + " = ";
        const auto pos = report.find(needle);
        if (pos == std::string::npos) return {};
        const auto start = pos + needle.size();
        return report.substr(start, report.find('\n', start) - start);
    }

    fs::path root_;
};

}  // namespace

TEST(Config, EmitParseIsIdempotent) {
    const RunConfig c = parse_config(kDesk);
    const std::string once = emit_config(c);
    const RunConfig again = parse_config(once);
    EXPECT_TRUE(again == c);
    EXPECT_EQ(emit_config(again), once);
}

TEST(Config, MultiAssetListsRoundTrip) {
    const RunConfig c = parse_config(R"(
[ambiguity]
d = 2
[market]
breakpoints = 0, 0.5
r = 0.01 | 0.03
alpha = 0.05, 0.07 | 0.06, 0.08
gamma = 0.2, 0; 0.05, 0.3 | 0.25, 0; 0, 0.3
)");
    ASSERT_EQ(c.market.gamma.size(), 2u);
    EXPECT_EQ(c.market.gamma[0][1][0], 0.05);
    EXPECT_EQ(c.market.alpha[1][1], 0.08);
    EXPECT_TRUE(parse_config(emit_config(c)) == c);
}

TEST(Config, ErrorsCarryLineAndColumn) {
    try {
        (void)parse_config("[ambiguity]\nsigma_lo_sq = abc\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_EQ(e.column(), 15u);
    }
    try {
        (void)parse_config("[ambiguity]\n\n  bogus = 1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_EQ(e.column(), 3u);
    }
    EXPECT_THROW((void)parse_config("[nowhere]\n"), ConfigError);
    EXPECT_THROW((void)parse_config("x = 1\n"), ConfigError);
    EXPECT_THROW((void)parse_config("[utility]\nkappa = 2\nkappa = 3\n"), ConfigError);
    EXPECT_THROW((void)parse_config("[utility]\nkappa 2\n"), ConfigError);
}

TEST(Config, InvertedAmbiguityPointsAtTheKey) {
    try {
        (void)parse_config("[ambiguity]\nsigma_lo_sq = 2\nsigma_hi_sq = 1\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST_F(Workspace, SolveHjbReportsTheMomentIdentity) {
    const auto r = run("solve-hjb", write_config(kHeat));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NEAR(std::stod(report_value(r.out, "V(0,0)")), 1.0, 1e-2);
    EXPECT_TRUE(fs::exists(root_ / "out" / "run_solution.csv"));
    EXPECT_TRUE(fs::exists(root_ / "out" / "run_report.txt"));
    EXPECT_EQ(slurp(root_ / "out" / "run_report.txt"), r.out);
}

TEST_F(Workspace, RerunIsByteIdenticalAndNeedsForce) {
    const auto cfg = write_config(kHeat);
    ASSERT_EQ(run("solve-hjb", cfg, false, std::nullopt, "a").code, kExitOk);
    ASSERT_EQ(run("solve-hjb", cfg, false, std::nullopt, "b").code, kExitOk);
    EXPECT_EQ(slurp(root_ / "a" / "run_solution.csv"), slurp(root_ / "b" / "run_solution.csv"));

    const auto again = run("solve-hjb", cfg, false, std::nullopt, "a");
    EXPECT_EQ(again.code, kExitConfigError);
    EXPECT_NE(again.err.find("exists"), std::string::npos) << again.err;
    EXPECT_EQ(run("solve-hjb", cfg, true, std::nullopt, "a").code, kExitOk);
}

TEST_F(Workspace, CflViolationWritesNothing) {
    const auto r = run("solve-hjb", write_config(std::string(kHeat) + "n_t = 5\n"));
    EXPECT_EQ(r.code, kExitPrecondition);
    EXPECT_NE(r.err.find("bound"), std::string::npos);
    EXPECT_FALSE(fs::exists(root_ / "out"));
}

TEST_F(Workspace, ParseErrorExitsWithPosition) {
    const auto r = run("solve-hjb", write_config("[solver]\nn_x = 4.5\n"));
    EXPECT_EQ(r.code, kExitConfigError);
    EXPECT_NE(r.err.find(":2:"), std::string::npos) << r.err;
    const auto inverted = run("verify", write_config("[ambiguity]\nsigma_lo_sq = 1\nsigma_hi_sq = 0.5\n"));
    EXPECT_EQ(inverted.code, kExitConfigError);
}

TEST_F(Workspace, MertonReportsPortfolioAndTerminalA) {
    const auto r = run("merton", write_config(kDesk));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NEAR(std::stod(report_value(r.out, "pi_hat")), 0.5, 1e-12);
    EXPECT_EQ(report_value(r.out, "A(T)"), "1");
    EXPECT_TRUE(fs::exists(root_ / "out" / "run_A.csv"));
    EXPECT_TRUE(fs::exists(root_ / "out" / "run_policy.csv"));
}

TEST_F(Workspace, DegenerateMertonNotesCoincidingAttitudes) {
    std::string text = kDesk;
    text.replace(text.find("sigma_lo_sq = 0.25"), 18, "sigma_lo_sq = 1");
    text += "attitude = both\n";
    const auto r = run("merton", write_config(text));
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("pessimist == optimist"), std::string::npos);
    EXPECT_EQ(report_value(r.out, "pessimist.V(0,1)"), report_value(r.out, "optimist.V(0,1)"));
}

TEST_F(Workspace, SimulateConstantAndSeedSensitivity) {
    const std::string base = std::string(kHeat) +
                             "\n[simulation]\nn_paths = 4000\nn_steps = 20\nn_segments = 1\nseed = 1\n";
    const auto square = run("simulate", write_config(base), false, std::nullopt, "s1");
    ASSERT_EQ(square.code, kExitOk) << square.err;
    const double v1 = std::stod(report_value(square.out, "value"));
    const double se1 = std::stod(report_value(square.out, "std_error"));
    EXPECT_NEAR(v1, 1.0, 3.0 * se1);

    const auto reseeded = run("simulate", write_config(base), false, 99, "s2");
    ASSERT_EQ(reseeded.code, kExitOk);
    const double v2 = std::stod(report_value(reseeded.out, "value"));
    EXPECT_NE(slurp(root_ / "s1" / "run_paths.csv"), slurp(root_ / "s2" / "run_paths.csv"));
    EXPECT_NEAR(v1, v2, 6.0 * se1);

    std::string constant = base;
    constant.replace(constant.find("payoff = square"), 15, "payoff = constant\npayoff_constant = 7");
    const auto c = run("simulate", write_config(constant), false, std::nullopt, "s3");
    ASSERT_EQ(c.code, kExitOk) << c.err;
    EXPECT_EQ(std::stod(report_value(c.out, "value")), 7.0);
    EXPECT_NEAR(std::stod(report_value(c.out, "std_error")), 0.0, 1e-12);
}

TEST_F(Workspace, PerturbedClosedFormFailsVerify) {
    const std::string text = std::string(kDesk) + R"(
[simulation]
n_paths = 500
n_steps = 50
n_segments = 1
n_grid = 2

[verify]
perturb_a = 1.01
property_trials = 5
)";
    const auto r = run("verify", write_config(text));
    EXPECT_EQ(r.code, kExitVerifyFailed);
    EXPECT_EQ(report_value(r.out, "hjb_residual").rfind("FAIL", 0), 0u) << r.out;
    EXPECT_TRUE(fs::exists(root_ / "out" / "run_verify.txt"));
}
