// tamed-sde: command-line front end for the switching-SDE schemes.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tamed_sde/config.hpp"
#include "tamed_sde/convergence.hpp"
#include "tamed_sde/models.hpp"
#include "tamed_sde/report_io.hpp"

namespace {

struct run_options {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> threads;
    std::string scheme;
    bool force = false;
};

tsde::experiment_config load(const run_options& o) {
    auto loaded = tsde::load_config_file(o.config_path);
    auto cfg = loaded.experiment;
    if (o.seed) cfg.seed = *o.seed;
    if (o.samples) cfg.samples = *o.samples;
    if (o.threads) cfg.threads = *o.threads;
    return cfg;
}

int cmd_converge(const run_options& o) {
    const auto cfg = load(o);
    const auto rep = tsde::run_experiment(cfg);
    const auto prov = tsde::provenance_of(cfg);
    tsde::write_outputs(o.out_dir,
                        {{"errors.csv", tsde::errors_csv(rep, prov)}, {"report.json", tsde::report_json(rep, prov).dump(2) + "\n"}},
                        o.force);
    std::cout << tsde::summary_table(rep);
    return 0;
}

int cmd_simulate(const run_options& o) {
    const auto cfg = load(o);
    const auto spec = tsde::models::builtin(cfg.model);
    const auto id = o.scheme.empty() ? tsde::scheme_id::tamed_milstein : tsde::parse_scheme(o.scheme);
    const auto traj = tsde::simulate_single(cfg, spec, id);
    const auto prov = tsde::provenance_of(cfg);

    nlohmann::json j{{"config_hash", prov.config_hash}, {"seed", prov.seed}, {"model", spec.name},
                     {"scheme", tsde::to_string(id)}, {"n", traj.n}, {"rows", traj.values.size()}};
    if (traj.blew_up_at) {
        j["blow_up"] = {{"first_bad_index", *traj.blew_up_at}, {"time", traj.times[*traj.blew_up_at]}};
        std::cerr << "warning: trajectory blew up at index " << *traj.blew_up_at << " (t = " << traj.times[*traj.blew_up_at]
                  << ")\n";
    }
    tsde::write_outputs(o.out_dir,
                        {{"trajectory.csv", tsde::trajectory_csv(traj, prov)}, {"simulate.json", j.dump(2) + "\n"}},
                        o.force);
    std::cout << "wrote " << traj.values.size() << " rows for " << tsde::to_string(id) << " on " << spec.name
              << " (n = " << traj.n << ")\n";
    return 0;
}

int cmd_diagnose(const run_options& o) {
    const auto cfg = load(o);
    const auto rep = tsde::run_diagnostics(cfg);
    const auto prov = tsde::provenance_of(cfg);
    tsde::write_outputs(o.out_dir, {{"diagnostics.json", tsde::diagnostics_json(rep, prov).dump(2) + "\n"}}, o.force);
    std::cout << tsde::diagnostics_table(rep);
    return 0;
}

int cmd_ablate(const run_options& o) {
    const auto cfg = load(o);
    const auto rep = tsde::ablation_study(cfg);
    const auto prov = tsde::provenance_of(cfg);
    tsde::write_outputs(o.out_dir,
                        {{"errors.csv", tsde::errors_csv(rep.experiment, prov)},
                         {"ablation.json", tsde::ablation_json(rep, prov).dump(2) + "\n"}},
                        o.force);
    std::cout << tsde::summary_table(rep.experiment) << "\n";
    std::printf("order gap (full - ablated): %.3f\n", rep.full_order - rep.ablated_order);
    for (const auto& [n, r] : rep.error_ratio) std::printf("  n = %-5zu ablated/full error ratio %.3f\n", n, r);
    return 0;
}

int cmd_validate(const run_options& o) {
    const auto cfg = load(o);
    const auto spec = tsde::models::builtin(cfg.model);
    const auto setup = tsde::resolve_setup(cfg, spec);

    tsde::rng_stream rng(tsde::derive_seed(cfg.seed, 0, tsde::stream_role::diagnostics));
    std::vector<double> ns(cfg.n_list.begin(), cfg.n_list.end());
    // Bounded constants settle well before |x| = 10; unbounded ones keep growing polynomially.
    const auto small = tsde::check_assumptions(spec, tsde::sample_box::cube(spec.d, 10.0), 4000, ns, rng);
    const auto large = tsde::check_assumptions(spec, tsde::sample_box::cube(spec.d, 20.0), 4000, ns, rng);
    std::cout << "model " << spec.name << ": assumption constants on |x| <= 10 and |x| <= 20\n";
    for (const auto& v : tsde::compare_assumption_reports(small, large))
        std::printf("  %-5s %-14s %12.5g %12.5g\n", v.violated ? "warn" : "pass", v.name.c_str(), v.small_box,
                    v.large_box);

    const double residual = tsde::check_commutativity(spec, tsde::sample_box::cube(spec.d, 2.0), 500, rng);
    const bool comm_ok = residual <= 1e-12;
    std::printf("  %-5s commutativity residual %.6g%s\n", comm_ok == spec.commutative ? "pass" : "warn", residual,
                comm_ok ? "" : " (non-commutative noise)");

    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const tsde::vec x = tsde::sample_box::cube(spec.d, 2.0).draw(rng);
        for (tsde::state_index i = 0; i < spec.states; ++i)
            worst = std::max(worst, tsde::finite_difference_jacobian_check(spec, x, i, 1e-6));
    }
    std::printf("  %-5s jacobian finite-difference deviation %.3g\n", worst <= 1e-5 ? "pass" : "warn", worst);

    // Config-level checks last so the report above is printed even when they fail.
    tsde::validate_config(cfg, setup);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tamed Milstein-type schemes for SDEs with Markovian switching"};
    app.require_subcommand(1);
    run_options o;

    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "experiment config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", o.out_dir, "output directory (created if absent)");
        sub->add_option("--seed", o.seed, "override the base seed");
        sub->add_option("--samples", o.samples, "override the Monte Carlo sample count");
        sub->add_option("--threads", o.threads, "worker threads (0 = all cores)");
        sub->add_flag("--force", o.force, "overwrite existing output files");
    };

    auto* converge = app.add_subcommand("converge", "strong-error experiment: errors.csv and report.json");
    auto* simulate = app.add_subcommand("simulate", "one trajectory: trajectory.csv");
    auto* diagnose = app.add_subcommand("diagnose", "jump statistics and moment bounds: diagnostics.json");
    auto* ablate = app.add_subcommand("ablate", "full scheme against the scheme without the jump correction");
    auto* validate = app.add_subcommand("validate", "sampled assumption, commutativity and Jacobian checks");
    for (auto* sub : {converge, simulate, diagnose, ablate, validate}) add_common(sub);
    simulate->add_option("--scheme", o.scheme, "scheme to run (default tamed_milstein)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*converge) return cmd_converge(o);
        if (*simulate) return cmd_simulate(o);
        if (*diagnose) return cmd_diagnose(o);
        if (*ablate) return cmd_ablate(o);
        if (*validate) return cmd_validate(o);
    } catch (const tsde::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
