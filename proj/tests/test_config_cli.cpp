#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "tamed_sde/config.hpp"
#include "tamed_sde/report_io.hpp"

using namespace tsde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("tamed_sde_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_config(const std::string& name, const std::string& text) {
        auto p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    // Returns the process exit code; stdout and stderr go to dir_/log.txt.
    int run(const std::string& args) {
        const std::string cmd = std::string(TAMED_SDE_CLI) + " " + args + " > " + (dir_ / "log.txt").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WEXITSTATUS(status);
    }
    std::string log() { return slurp(dir_ / "log.txt"); }

    fs::path dir_;
};

const char* small_m1 =
    "model = M1\nschemes = tamed_milstein, tamed_em\nn_list = 8, 16, 32\nn_ref = 256\nsamples = 40\nseed = 3\n";

} // namespace

TEST(ConfigParse, AllKeys) {
    auto cfg = parse_config(R"(
# comment line
model = M3   # trailing comment
schemes = tamed_milstein, tamed_em, ablated_milstein
n_list = 16, 32
n_ref = 1024
T = 2
samples = 50
seed = 18446744073709551615
refinement_ratio = 8
p = 6
generator = [[-1, 1], [0.5, -0.5]]
x0 = 1.5, -2
initial_state = 1
reference = fine
threads = 3
jump_samples = 500
n = 128
)");
    EXPECT_EQ(cfg.model, "M3");
    EXPECT_EQ(cfg.schemes.size(), 3u);
    EXPECT_EQ(cfg.schemes[2], scheme_id::ablated_milstein);
    EXPECT_EQ(cfg.n_list, (std::vector<std::size_t>{16, 32}));
    EXPECT_EQ(cfg.n_ref, 1024u);
    EXPECT_EQ(cfg.horizon, 2.0);
    EXPECT_EQ(cfg.samples, 50u);
    EXPECT_EQ(cfg.seed, 18446744073709551615ULL);
    EXPECT_EQ(cfg.refinement_ratio, 8u);
    EXPECT_EQ(cfg.moment_p, 6.0);
    ASSERT_TRUE(cfg.generator.has_value());
    EXPECT_EQ((*cfg.generator)(1, 0), 0.5);
    ASSERT_TRUE(cfg.x0.has_value());
    EXPECT_EQ((*cfg.x0)(1), -2.0);
    EXPECT_EQ(cfg.initial_state, 1u);
    EXPECT_EQ(cfg.threads, 3u);
    EXPECT_EQ(cfg.jump_samples, 500u);
    EXPECT_EQ(cfg.simulate_n, 128u);
}

TEST(ConfigParse, MissingModelNamesKey) {
    try {
        parse_config("schemes = tamed_em\n", "exp.cfg");
        FAIL();
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("'model'"), std::string::npos);
    }
}

TEST(ConfigParse, ErrorsCarryLineAndKey) {
    auto message = [](const std::string& text) {
        try {
            parse_config(text, "exp.cfg");
        } catch (const config_error& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_EQ(message("model = M1\nsamples = ten\n"), "exp.cfg:2: key 'samples': 'ten' is not a valid number");
    EXPECT_EQ(message("model = M1\n\nbogus = 1\n"), "exp.cfg:3: key 'bogus' is not a recognized setting");
    EXPECT_NE(message("model = M1\nschemes = rk4\n").find("exp.cfg:2: key 'schemes'"), std::string::npos);
    EXPECT_NE(message("model = M1\ngenerator = [[-1, 0.5], [2, -2]]\n").find("does not sum to zero"), std::string::npos);
    EXPECT_NE(message("model = M1\ngenerator = [[-1, 1]]\n").find("square"), std::string::npos);
    EXPECT_NE(message("model = M1\nreference = approx\n").find("'fine' or 'exact'"), std::string::npos);
    EXPECT_NE(message("model = M1\nmodel = M2\n").find("repeats line 1"), std::string::npos);
    EXPECT_NE(message("model = M1\njust words\n").find("exp.cfg:2"), std::string::npos);
    EXPECT_NE(message("model = M1\nn_list = 16, -32\n").find("'-32'"), std::string::npos);
}

TEST(ConfigParse, CanonicalFormRoundTrips) {
    auto cfg = parse_config("model = M1\nx0 = 0.1\ngenerator = [[-1,1],[1,-1]]\nthreads = 8\n");
    const auto text = canonical_config(cfg);
    auto again = parse_config(text);
    EXPECT_EQ(canonical_config(again), text);
    EXPECT_EQ(text.find("threads"), std::string::npos);
    EXPECT_NE(text.find("x0 = 0.1\n"), std::string::npos);
}

TEST(ConfigParse, HashTracksResultAffectingKeys) {
    auto a = parse_config("model = M1\n");
    auto b = parse_config("model = M1\nthreads = 4\n");
    auto c = parse_config("model = M1\nseed = 2\n");
    EXPECT_EQ(provenance_of(a).config_hash, provenance_of(b).config_hash);
    EXPECT_NE(provenance_of(a).config_hash, provenance_of(c).config_hash);
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Formatting, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.1), "0.1");
    EXPECT_EQ(format_double(1.0), "1");
    EXPECT_EQ(format_double(1e-20), "1e-20");
    const double x = 0.1 + 0.2;
    EXPECT_EQ(std::stod(format_double(x)), x);
}

TEST_F(CliTest, ConvergeWritesOneRowPerSchemeAndN) {
    auto cfg = write_config("m1.cfg", small_m1);
    ASSERT_EQ(run("converge --config " + cfg.string() + " --out " + (dir_ / "out").string()), 0) << log();
    const auto csv = slurp(dir_ / "out" / "errors.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# config_hash=", 0), 0u);
    EXPECT_NE(line.find(" seed=3"), std::string::npos);
    std::getline(in, line);
    EXPECT_EQ(line, "scheme,n,error,stderr");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 6);
    EXPECT_TRUE(fs::exists(dir_ / "out" / "report.json"));
    EXPECT_NE(log().find("tamed_milstein"), std::string::npos);
}

TEST_F(CliTest, ConvergeIsReproducible) {
    auto cfg = write_config("m1.cfg", small_m1);
    ASSERT_EQ(run("converge --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0);
    ASSERT_EQ(run("converge --config " + cfg.string() + " --out " + (dir_ / "b").string() + " --threads 3"), 0);
    EXPECT_EQ(slurp(dir_ / "a" / "errors.csv"), slurp(dir_ / "b" / "errors.csv"));
    EXPECT_EQ(slurp(dir_ / "a" / "report.json"), slurp(dir_ / "b" / "report.json"));
}

TEST_F(CliTest, OverridesChangeProvenance) {
    auto cfg = write_config("m1.cfg", small_m1);
    ASSERT_EQ(run("converge --config " + cfg.string() + " --out " + (dir_ / "a").string() + " --seed 9 --samples 20"), 0);
    const auto csv = slurp(dir_ / "a" / "errors.csv");
    EXPECT_NE(csv.find(" seed=9"), std::string::npos);
    EXPECT_NE(slurp(dir_ / "a" / "report.json").find("\"samples\": 20"), std::string::npos);
}

TEST_F(CliTest, RefusesToOverwriteWithoutForce) {
    auto cfg = write_config("m1.cfg", small_m1);
    const std::string out = " --out " + (dir_ / "out").string();
    ASSERT_EQ(run("converge --config " + cfg.string() + out), 0);
    EXPECT_EQ(run("converge --config " + cfg.string() + out), 2);
    EXPECT_NE(log().find("--force"), std::string::npos);
    EXPECT_EQ(run("converge --config " + cfg.string() + out + " --force"), 0);
}

TEST_F(CliTest, MissingModelIsConfigError) {
    auto cfg = write_config("bad.cfg", "schemes = tamed_em\n");
    EXPECT_EQ(run("converge --config " + cfg.string() + " --out " + (dir_ / "out").string()), 2);
    EXPECT_NE(log().find("missing required key 'model'"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(CliTest, UnknownModelIsConfigError) {
    auto cfg = write_config("bad.cfg", "model = M7\n");
    EXPECT_EQ(run("validate --config " + cfg.string()), 2);
    EXPECT_NE(log().find("unknown model"), std::string::npos);
}

TEST_F(CliTest, ValidateM1Passes) {
    auto cfg = write_config("m1.cfg", small_m1);
    EXPECT_EQ(run("validate --config " + cfg.string()), 0);
    const auto out = log();
    EXPECT_EQ(out.find("warn"), std::string::npos) << out;
    EXPECT_NE(out.find("commutativity residual 0"), std::string::npos);
}

TEST_F(CliTest, CommutativeSchemeOnM3IsRejected) {
    auto cfg = write_config("m3.cfg", "model = M3\nschemes = commutative_milstein\nn_list = 16, 32, 64\nn_ref = 1024\n");
    EXPECT_EQ(run("validate --config " + cfg.string()), 2);
    const auto out = log();
    EXPECT_NE(out.find("non-commutative noise"), std::string::npos);
    EXPECT_NE(out.find("commutative condition"), std::string::npos);
    EXPECT_EQ(run("converge --config " + cfg.string() + " --out " + (dir_ / "o").string()), 2);
}

TEST_F(CliTest, SimulateWritesTrajectory) {
    auto cfg = write_config("sim.cfg", "model = M1\nn = 64\nseed = 7\n");
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "o").string()), 0) << log();
    std::istringstream in(slurp(dir_ / "o" / "trajectory.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# config_hash=", 0), 0u);
    std::getline(in, line);
    EXPECT_EQ(line, "t,x1,state");
    int rows = 0;
    std::string first;
    while (std::getline(in, line)) {
        if (rows == 0) first = line;
        ++rows;
    }
    EXPECT_EQ(rows, 65);
    EXPECT_EQ(first, "0,1,0");
}

TEST_F(CliTest, SimulateZeroModelIsConstant) {
    auto cfg = write_config("sim.cfg", "model = zero\nn = 16\n");
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "o").string() + " --scheme tamed_em"), 0);
    std::istringstream in(slurp(dir_ / "o" / "trajectory.csv"));
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        EXPECT_EQ(line.substr(a + 1, b - a - 1), "1");
    }
}

TEST_F(CliTest, SimulateEmBlowUpWarns) {
    auto cfg = write_config("em.cfg", "model = M1\nx0 = 10\nn = 16\nseed = 1\n");
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "o").string() + " --scheme em"), 0);
    EXPECT_NE(log().find("blew up at index"), std::string::npos);
    EXPECT_NE(slurp(dir_ / "o" / "simulate.json").find("first_bad_index"), std::string::npos);
}

TEST_F(CliTest, SimulateUnknownSchemeIsConfigError) {
    auto cfg = write_config("sim.cfg", "model = M1\n");
    EXPECT_EQ(run("simulate --config " + cfg.string() + " --out " + (dir_ / "o").string() + " --scheme rk4"), 2);
}

TEST_F(CliTest, AblationOnStateFreeNoiseIsRuntimeFailure) {
    auto cfg = write_config("m2.cfg", "model = M2\nn_list = 8, 16, 32\nn_ref = 256\nsamples = 10\n");
    EXPECT_EQ(run("ablate --config " + cfg.string() + " --out " + (dir_ / "o").string()), 3);
    EXPECT_FALSE(fs::exists(dir_ / "o" / "ablation.json"));
}

TEST_F(CliTest, DiagnoseWritesJson) {
    auto cfg = write_config("d.cfg", "model = M1\nn_list = 8, 16, 32\nn_ref = 256\nsamples = 20\njump_samples = 1000\n");
    ASSERT_EQ(run("diagnose --config " + cfg.string() + " --out " + (dir_ / "o").string()), 0) << log();
    EXPECT_NE(slurp(dir_ / "o" / "diagnostics.json").find("moment_trend_tau"), std::string::npos);
}

TEST_F(CliTest, UsageErrors) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("converge"), 2);
    EXPECT_EQ(run("converge --config /does/not/exist.cfg"), 2);
}
