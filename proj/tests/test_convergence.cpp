#include <gtest/gtest.h>

#include <cmath>

#include "tamed_sde/convergence.hpp"
#include "tamed_sde/report_io.hpp"

using namespace tsde;

namespace {

experiment_config small_config(std::string model) {
    experiment_config cfg;
    cfg.model = std::move(model);
    cfg.schemes = {scheme_id::tamed_milstein, scheme_id::tamed_em};
    cfg.n_list = {8, 16, 32};
    cfg.n_ref = 256;
    cfg.samples = 60;
    cfg.seed = 17;
    cfg.threads = 1;
    return cfg;
}

} // namespace

TEST(Experiment, ZeroModelIsExact) {
    auto cfg = small_config("zero");
    auto rep = run_experiment(cfg);
    for (const auto& e : rep.errors) EXPECT_EQ(e.error, 0.0);
    for (const auto& o : rep.orders) EXPECT_EQ(o.status, fit_status::exact);
}

TEST(Experiment, OneRowPerSchemeAndN) {
    auto cfg = small_config("M1");
    auto rep = run_experiment(cfg);
    ASSERT_EQ(rep.errors.size(), 6u);
    EXPECT_EQ(rep.errors[0].scheme, scheme_id::tamed_milstein);
    EXPECT_EQ(rep.errors[3].scheme, scheme_id::tamed_em);
    EXPECT_EQ(rep.errors[4].n, 16u);
    for (const auto& e : rep.errors) {
        EXPECT_GE(e.error, 0.0);
        EXPECT_GE(e.std_error, 0.0);
        EXPECT_EQ(e.rms_profile.size(), e.n + 1);
        EXPECT_EQ(e.rms_profile.front(), 0.0);
        EXPECT_EQ(e.used_samples, cfg.samples);
    }
    EXPECT_EQ(rep.orders.size(), 2u);
    EXPECT_EQ(rep.jumps.size(), 3u);
}

TEST(Experiment, SerialAndParallelAreBitwiseIdentical) {
    auto cfg = small_config("M1");
    cfg.samples = 37;
    auto serial = run_experiment(cfg);
    cfg.threads = 4;
    auto parallel = run_experiment(cfg);
    const auto prov = provenance_of(cfg);
    EXPECT_EQ(errors_csv(serial, prov), errors_csv(parallel, prov));
    EXPECT_EQ(report_json(serial, prov).dump(), report_json(parallel, prov).dump());
}

TEST(Experiment, NonCommutativeModelRuns) {
    auto cfg = small_config("M3");
    cfg.samples = 20;
    cfg.refinement_ratio = 4;
    auto rep = run_experiment(cfg);
    for (const auto& e : rep.errors) {
        EXPECT_GT(e.error, 0.0);
        EXPECT_TRUE(std::isfinite(e.error));
    }
}

TEST(Experiment, ErrorsDecreaseWithinTwoStandardErrors) {
    for (const char* name : {"M1", "M2", "M3"}) {
        auto cfg = small_config(name);
        cfg.samples = 200;
        cfg.refinement_ratio = 4;
        auto rep = run_experiment(cfg);
        for (std::size_t i = 0; i + 1 < rep.errors.size(); ++i) {
            const auto& a = rep.errors[i];
            const auto& b = rep.errors[i + 1];
            if (a.scheme != b.scheme) continue;
            EXPECT_LE(b.error, a.error + 2.0 * (a.std_error + b.std_error)) << name << " n=" << b.n;
        }
    }
}

TEST(Experiment, ExactReferenceOnM2) {
    auto cfg = small_config("M2");
    cfg.schemes = {scheme_id::tamed_milstein};
    cfg.reference = reference_kind::exact;
    cfg.n_list = {16, 32, 64, 128};
    cfg.samples = 300;
    auto rep = run_experiment(cfg);
    const auto& o = rep.order_of(scheme_id::tamed_milstein);
    ASSERT_EQ(o.status, fit_status::ok);
    EXPECT_NEAR(o.fit.order, 1.0, 0.15);
}

TEST(Experiment, SeedChangesResult) {
    auto cfg = small_config("M1");
    auto a = run_experiment(cfg);
    cfg.seed += 1;
    auto b = run_experiment(cfg);
    EXPECT_NE(a.errors[0].error, b.errors[0].error);
}

TEST(ConfigValidation, RejectsBrokenExperiments) {
    auto bad = [](auto mutate) {
        auto cfg = small_config("M1");
        mutate(cfg);
        return cfg;
    };
    EXPECT_THROW(run_experiment(bad([](auto& c) { c.n_list = {8, 24}; })), config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) { c.n_ref = 128; })), config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) { c.samples = 1; })), config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) { c.schemes = {scheme_id::reference}; })), config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) {
                     Eigen::MatrixXd q(2, 2);
                     q << -5, 5, 5, -5;
                     c.generator = q;
                 })),
                 config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) {
                     c.model = "M3";
                     c.schemes = {scheme_id::commutative_milstein};
                 })),
                 config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) { c.reference = reference_kind::exact; })), config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) { c.x0 = vec::Zero(2); })), config_error);
    EXPECT_THROW(run_experiment(bad([](auto& c) { c.model = "nope"; })), config_error);
}

TEST(Diagnostics, ZeroGeneratorHasNoJumps) {
    auto cfg = small_config("M1");
    cfg.generator = Eigen::MatrixXd::Zero(2, 2);
    cfg.jump_samples = 2000;
    auto rep = run_diagnostics(cfg);
    ASSERT_EQ(rep.points.size(), 3u);
    for (const auto& p : rep.points) {
        EXPECT_EQ(p.jumps.p_at_least_1.value, 0.0);
        EXPECT_EQ(p.jumps.mean_count.value, 0.0);
        EXPECT_GT(p.sup_moment.value, 0.0);
    }
    EXPECT_TRUE(std::isnan(rep.mean_count_slope));
}

TEST(Diagnostics, TwoJumpTailAtSixtyFourSteps) {
    auto cfg = small_config("M1");
    cfg.n_list = {64};
    cfg.n_ref = 512;
    cfg.jump_samples = 100000;
    auto rep = run_diagnostics(cfg);
    const auto& p = rep.points.front();
    const double h = 1.0 / 64;
    EXPECT_LE(p.jumps.p_at_least_2.value, h * h + 3.0 * p.jumps.p_at_least_2.std_error);
    EXPECT_TRUE(p.tail_bounds_hold);
    EXPECT_TRUE(p.second_moment_holds);
}

TEST(Ablation, VacuousWhenNoiseIgnoresChain) {
    auto cfg = small_config("M2");
    EXPECT_THROW(ablation_study(cfg), ablation_vacuous);
}

TEST(Ablation, ReportsRatiosPerN) {
    auto cfg = small_config("M1");
    auto rep = ablation_study(cfg);
    ASSERT_EQ(rep.error_ratio.size(), 3u);
    for (const auto& [n, r] : rep.error_ratio) EXPECT_GT(r, 0.0);
    EXPECT_TRUE(std::isfinite(rep.full_order));
}

TEST(SimulateSingle, GridOfSixtyFourSteps) {
    experiment_config cfg;
    cfg.model = "M1";
    cfg.simulate_n = 64;
    auto t = simulate_single(cfg, models::m1(), scheme_id::tamed_milstein);
    EXPECT_EQ(t.values.size(), 65u);
    EXPECT_EQ(t.times.front(), 0.0);
    EXPECT_EQ(t.times.back(), 1.0);
}
