#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "chain.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "models.hpp"
#include "noise.hpp"
#include "rng.hpp"
#include "scheme.hpp"
#include "stats.hpp"

namespace tsde {

enum class reference_kind { fine, exact };

struct experiment_config {
    std::string model = "M1";
    std::vector<scheme_id> schemes{scheme_id::tamed_milstein, scheme_id::tamed_em};
    std::vector<std::size_t> n_list{16, 32, 64, 128, 256, 512};
    std::size_t n_ref = 8192;
    double horizon = 1.0;
    std::size_t samples = 1000;
    std::uint64_t seed = 1;
    double moment_p = 4.0;
    std::size_t refinement_ratio = 16;
    std::optional<mat> generator;    // model default when unset
    std::optional<vec> x0;           // model default when unset
    state_index initial_state = 0;
    reference_kind reference = reference_kind::fine;
    std::size_t threads = 0;         // 0: hardware concurrency
    std::size_t jump_samples = 100000;
    std::size_t simulate_n = 64;     // grid used by the single-trajectory command
};

/// Model plus the resolved generator and initial value of a config.
struct experiment_setup {
    model_spec spec;
    generator_matrix generator;
    vec x0;
};

inline experiment_setup resolve_setup(const experiment_config& cfg, const model_spec& spec) {
    validate_model(spec);
    experiment_setup s{spec, generator_matrix(cfg.generator.value_or(spec.default_generator)),
                       cfg.x0.value_or(spec.x0)};
    if (s.generator.states() != spec.states)
        throw config_error("generator has " + std::to_string(s.generator.states()) + " states but model '" +
                           spec.name + "' expects " + std::to_string(spec.states));
    if (static_cast<std::size_t>(s.x0.size()) != spec.d)
        throw config_error("x0 has " + std::to_string(s.x0.size()) + " components, model dimension is " +
                           std::to_string(spec.d));
    if (cfg.initial_state >= spec.states) throw config_error("initial_state outside the state space");
    return s;
}

/// Checks the experiment invariants; throws config_error.
inline void validate_config(const experiment_config& cfg, const experiment_setup& setup) {
    if (cfg.samples < 2) throw config_error("samples must be at least 2");
    if (!(cfg.horizon > 0.0)) throw config_error("T must be positive");
    if (cfg.n_list.empty()) throw config_error("n_list must not be empty");
    if (cfg.schemes.empty()) throw config_error("schemes must not be empty");
    if (cfg.refinement_ratio < 1) throw config_error("refinement_ratio must be at least 1");
    if (!(cfg.moment_p >= 2.0)) throw config_error("p must be at least 2");
    const std::size_t max_n = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
    if (cfg.reference == reference_kind::fine && cfg.n_ref < 8 * max_n)
        throw config_error("n_ref must be at least 8 * max(n_list)");
    const double q = setup.generator.q_max();
    for (std::size_t n : cfg.n_list) {
        if (n == 0 || cfg.n_ref % n != 0)
            throw config_error("n=" + std::to_string(n) + " does not divide n_ref=" + std::to_string(cfg.n_ref));
        const double steps = static_cast<double>(n) * cfg.horizon;
        if (std::abs(steps - std::round(steps)) > 1e-9) throw config_error("n * T must be an integer");
        if (q > 0.0 && !(1.0 / static_cast<double>(n) < 1.0 / (2.0 * q)))
            throw config_error("n=" + std::to_string(n) + " violates the step constraint h < 1/(2q), q=" +
                               std::to_string(q));
    }
    for (scheme_id id : cfg.schemes) {
        if (id == scheme_id::reference) throw config_error("'reference' is not a comparable scheme");
        if (id == scheme_id::commutative_milstein && !setup.spec.commutative)
            throw config_error("scheme commutative_milstein requested but model '" + setup.spec.name +
                               "' does not satisfy the commutative condition");
    }
    if (cfg.reference == reference_kind::exact && !setup.spec.exact_solution)
        throw config_error("reference = exact but model '" + setup.spec.name + "' has no closed-form solution");
}

/// Strong error of one scheme at one n.
struct error_point {
    scheme_id scheme{};
    std::size_t n = 0;
    double error = 0.0;       // max_k sqrt(mean_s |X_ref(t_k) - X^n(t_k)|^2)
    double std_error = 0.0;   // delta-method standard error at the maximizing grid point
    double worst_time = 0.0;  // t_k attaining the maximum
    std::vector<double> rms_profile;  // RMS error at every t_k
    std::size_t used_samples = 0;
    std::size_t blow_ups = 0;
    estimate sup_moment;      // E[sup_k |X^n_{t_k}|^p] over non-flagged samples
};

enum class fit_status { ok, exact, degenerate, too_few_points };

inline std::string_view to_string(fit_status s) {
    switch (s) {
    case fit_status::ok: return "ok";
    case fit_status::exact: return "exact";
    case fit_status::degenerate: return "degenerate";
    case fit_status::too_few_points: return "too_few_points";
    }
    return "?";
}

struct scheme_order {
    scheme_id scheme{};
    fit_status status = fit_status::ok;
    order_fit fit;
};

/// Jump data seen by the sampled chain paths on each coarse grid.
struct path_jump_summary {
    std::size_t n = 0;
    double p_at_least_1 = 0.0;
    double p_at_least_2 = 0.0;
    double mean_count = 0.0;
};

struct convergence_report {
    experiment_config config;
    std::string model_name;
    double q_max = 0.0;
    std::vector<error_point> errors;  // scheme-major, then n in config order
    std::vector<scheme_order> orders;
    std::vector<path_jump_summary> jumps;

    const error_point& at(scheme_id id, std::size_t n) const {
        for (const auto& e : errors)
            if (e.scheme == id && e.n == n) return e;
        throw error("no error entry for scheme " + std::string(to_string(id)) + " at n=" + std::to_string(n));
    }
    const scheme_order& order_of(scheme_id id) const {
        for (const auto& o : orders)
            if (o.scheme == id) return o;
        throw error("no order entry for scheme " + std::string(to_string(id)));
    }
};

namespace detail {

/// Runs body(sample) for every sample on `threads` workers. Each sample writes
/// only its own slot, so the result does not depend on the schedule.
template <typename Body>
void for_each_sample(std::size_t count, std::size_t threads, Body&& body) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t s = 0; s < count; ++s) body(s);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t s = next.fetch_add(1);
                    if (s >= count) return;
                    try {
                        body(s);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next.store(count);
                        return;
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
}

/// Sample mean and standard error with fixed-order pairwise summation.
inline estimate mean_estimate(std::span<const double> v) {
    if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const double m = static_cast<double>(v.size());
    const double mean = pairwise_sum(v) / m;
    if (v.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
    std::vector<double> dev(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - mean) * (v[i] - mean);
    return {mean, std::sqrt(pairwise_sum(dev) / (m - 1.0) / m)};
}

struct sample_outcome {
    // [scheme][n] -> squared deviation at every coarse grid point; empty if the path blew up
    std::vector<std::vector<std::vector<double>>> squared;
    std::vector<std::vector<double>> sup_power;  // sup_k |X^n_{t_k}|^p
    std::vector<std::vector<std::size_t>> jumps_ge;  // [n] -> {#steps with N>=1, N>=2, total N}
};

inline vec reference_value(const experiment_setup& setup, const experiment_config& cfg, const trajectory* ref,
                           const chain_path& path, std::size_t n, std::size_t k) {
    if (cfg.reference == reference_kind::exact)
        return setup.spec.exact_solution(setup.x0, path,
                                         std::min(cfg.horizon, static_cast<double>(k) / static_cast<double>(n)));
    return ref->values[k * (cfg.n_ref / n)];
}

} // namespace detail

/// Coupled-noise strong error experiment.
///
/// Every sample draws one chain path and one Brownian path at the reference
/// resolution (refinement_ratio times finer for non-commutative models, which
/// need Levy areas); the reference and every (scheme, n) pair are driven by
/// that same path. Flagged (blown-up) trajectories are excluded per (scheme, n)
/// and counted.
inline convergence_report run_experiment(const experiment_config& cfg, const model_spec& spec) {
    const experiment_setup setup = resolve_setup(cfg, spec);
    validate_config(cfg, setup);

    const std::size_t ratio = spec.commutative ? 1 : cfg.refinement_ratio;
    const std::size_t ref_steps = detail::grid_steps(cfg.n_ref, cfg.horizon);
    simulate_options opt;
    opt.q_max = setup.generator.q_max();
    opt.x0 = setup.x0;
    opt.refinement = spec.commutative ? 0 : cfg.refinement_ratio;

    const std::size_t n_count = cfg.n_list.size();
    const std::size_t s_count = cfg.schemes.size();
    std::vector<detail::sample_outcome> outcomes(cfg.samples);

    detail::for_each_sample(cfg.samples, cfg.threads, [&](std::size_t s) {
        rng_stream chain_rng(derive_seed(cfg.seed, s, stream_role::chain));
        rng_stream noise_rng(derive_seed(cfg.seed, s, stream_role::brownian));
        rng_stream bridge_rng(derive_seed(cfg.seed, s, stream_role::bridge));
        const chain_path path = sample_chain_path(setup.generator, cfg.initial_state, cfg.horizon, chain_rng);
        brownian_grid grid(spec.m, cfg.horizon, ref_steps * ratio, noise_rng);

        std::optional<trajectory> ref;
        if (cfg.reference == reference_kind::fine)
            ref = reference_solution(spec, cfg.n_ref, cfg.horizon, path, grid, bridge_rng, opt);

        auto& out = outcomes[s];
        out.squared.assign(s_count, std::vector<std::vector<double>>(n_count));
        out.sup_power.assign(s_count, std::vector<double>(n_count, 0.0));
        out.jumps_ge.assign(n_count, std::vector<std::size_t>(3, 0));
        for (std::size_t ni = 0; ni < n_count; ++ni) {
            const std::size_t n = cfg.n_list[ni];
            const std::size_t steps = detail::grid_steps(n, cfg.horizon);
            for (std::size_t k = 0; k < steps; ++k) {
                const double t0 = static_cast<double>(k) / static_cast<double>(n);
                const double t1 = k + 1 == steps ? cfg.horizon : static_cast<double>(k + 1) / static_cast<double>(n);
                const auto info = interval_jump_info(path, t0, t1);
                out.jumps_ge[ni][0] += info.count >= 1;
                out.jumps_ge[ni][1] += info.count >= 2;
                out.jumps_ge[ni][2] += info.count;
            }
            for (std::size_t si = 0; si < s_count; ++si) {
                const trajectory traj = simulate(spec, cfg.schemes[si], n, cfg.horizon, path, grid, bridge_rng, opt);
                if (traj.blew_up_at || (ref && ref->blew_up_at)) continue;
                auto& sq = out.squared[si][ni];
                sq.resize(traj.values.size());
                double sup = 0.0;
                for (std::size_t k = 0; k < traj.values.size(); ++k) {
                    sq[k] = (detail::reference_value(setup, cfg, ref ? &*ref : nullptr, path, n, k) - traj.values[k])
                                .squaredNorm();
                    sup = std::max(sup, traj.values[k].norm());
                }
                out.sup_power[si][ni] = std::pow(sup, cfg.moment_p);
            }
        }
    });

    convergence_report rep;
    rep.config = cfg;
    rep.model_name = spec.name;
    rep.q_max = setup.generator.q_max();

    for (std::size_t ni = 0; ni < n_count; ++ni) {
        const std::size_t steps = detail::grid_steps(cfg.n_list[ni], cfg.horizon);
        std::vector<double> ge1, ge2, cnt;
        for (const auto& o : outcomes) {
            ge1.push_back(static_cast<double>(o.jumps_ge[ni][0]));
            ge2.push_back(static_cast<double>(o.jumps_ge[ni][1]));
            cnt.push_back(static_cast<double>(o.jumps_ge[ni][2]));
        }
        const double denom = static_cast<double>(steps) * static_cast<double>(cfg.samples);
        rep.jumps.push_back({cfg.n_list[ni], pairwise_sum(ge1) / denom, pairwise_sum(ge2) / denom,
                             pairwise_sum(cnt) / denom});
    }

    for (std::size_t si = 0; si < s_count; ++si) {
        std::vector<std::pair<double, double>> points;
        bool all_zero = true, any_zero = false;
        for (std::size_t ni = 0; ni < n_count; ++ni) {
            error_point ep;
            ep.scheme = cfg.schemes[si];
            ep.n = cfg.n_list[ni];
            const std::size_t points_k = detail::grid_steps(ep.n, cfg.horizon) + 1;
            std::vector<double> sups;
            std::vector<const std::vector<double>*> used;
            for (const auto& o : outcomes) {
                if (o.squared[si][ni].empty()) {
                    ++ep.blow_ups;
                    continue;
                }
                used.push_back(&o.squared[si][ni]);
                sups.push_back(o.sup_power[si][ni]);
            }
            ep.used_samples = used.size();
            ep.sup_moment = detail::mean_estimate(sups);
            if (used.size() < 2) throw error("fewer than two usable samples for scheme " +
                                             std::string(to_string(ep.scheme)) + " at n=" + std::to_string(ep.n));
            std::vector<double> column(used.size());
            ep.rms_profile.resize(points_k);
            for (std::size_t k = 0; k < points_k; ++k) {
                for (std::size_t u = 0; u < used.size(); ++u) column[u] = (*used[u])[k];
                const estimate msq = detail::mean_estimate(column);
                const double rms = std::sqrt(msq.value);
                ep.rms_profile[k] = rms;
                if (k == 0 || rms > ep.error) {
                    ep.error = rms;
                    ep.std_error = rms > 0.0 ? msq.std_error / (2.0 * rms) : 0.0;
                    ep.worst_time = std::min(cfg.horizon, static_cast<double>(k) / static_cast<double>(ep.n));
                }
            }
            all_zero = all_zero && ep.error == 0.0;
            any_zero = any_zero || ep.error == 0.0;
            points.emplace_back(static_cast<double>(ep.n), ep.error);
            rep.errors.push_back(std::move(ep));
        }

        scheme_order so;
        so.scheme = cfg.schemes[si];
        if (all_zero) {
            so.status = fit_status::exact;
        } else if (points.size() < 3) {
            so.status = fit_status::too_few_points;
        } else if (any_zero) {
            so.status = fit_status::degenerate;
        } else {
            so.fit = fit_order(points);
        }
        if (so.status != fit_status::ok) so.fit.order = std::numeric_limits<double>::quiet_NaN();
        rep.orders.push_back(std::move(so));
    }
    return rep;
}

inline convergence_report run_experiment(const experiment_config& cfg) {
    return run_experiment(cfg, models::builtin(cfg.model));
}

/// Jump statistics and moment bound for one n.
struct diagnostics_point {
    std::size_t n = 0;
    jump_count_stats jumps;
    double bound_k1 = 0.0;  // q h
    double bound_k2 = 0.0;  // (q h)^2
    double bound_k3 = 0.0;
    bool tail_bounds_hold = true;   // P(N>=k) <= (qh)^k + 3 SE for k = 1, 2, 3
    bool second_moment_holds = true; // E[N^2] <= 6
    double mean_count_over_h = 0.0;
    estimate sup_moment;               // E[sup_k |X^n_{t_k}|^p] over this n's own grid
    estimate sup_moment_common_grid;   // same, sup over the grid points shared by every n
    std::size_t blow_ups = 0;
};

struct diagnostics_report {
    experiment_config config;
    std::string model_name;
    double q_max = 0.0;
    std::vector<diagnostics_point> points;
    double mean_count_slope = std::numeric_limits<double>::quiet_NaN();  // d log E[N] / d log h
    std::size_t common_grid = 0;      // gcd of n_list; the shared grid is t = k / common_grid
    double moment_trend_tau = 0.0;    // Kendall tau of sup_moment against n
    double common_grid_trend_tau = 0.0;
    bool moment_trend_flagged = false;  // |tau| >= 0.5
    static constexpr double trend_threshold = 0.5;
};

/// Single-step jump statistics per n, and the moment E[sup |X^n|^p] of the
/// tamed Milstein scheme.
///
/// The trend test uses the supremum over each n's own grid. That supremum grows
/// with n because finer grids see more of the path, even when the moments are
/// uniformly bounded, so the supremum over the grid points shared by every n is
/// reported as well. Moments at different n come from independent sample sets.
inline diagnostics_report run_diagnostics(const experiment_config& cfg, const model_spec& spec) {
    const experiment_setup setup = resolve_setup(cfg, spec);
    validate_config(cfg, setup);

    diagnostics_report rep;
    rep.config = cfg;
    rep.model_name = spec.name;
    rep.q_max = setup.generator.q_max();
    const double q = rep.q_max;
    const std::size_t ratio = spec.commutative ? 1 : cfg.refinement_ratio;

    simulate_options opt;
    opt.q_max = q;
    opt.x0 = setup.x0;
    opt.refinement = spec.commutative ? 0 : cfg.refinement_ratio;

    std::size_t common = 0;
    for (std::size_t n : cfg.n_list) common = std::gcd(common, n);
    rep.common_grid = common;

    std::vector<double> ns, moments, moments_common, log_h, log_mean;
    bool all_positive = true;
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const std::size_t n = cfg.n_list[ni];
        const double h = 1.0 / static_cast<double>(n);
        diagnostics_point pt;
        pt.n = n;
        rng_stream jump_rng(derive_seed(cfg.seed ^ 0x6a756d70ULL, n, stream_role::diagnostics));
        pt.jumps = jump_count_statistics(setup.generator, h, cfg.jump_samples, jump_rng);
        pt.bound_k1 = q * h;
        pt.bound_k2 = pt.bound_k1 * pt.bound_k1;
        pt.bound_k3 = pt.bound_k2 * pt.bound_k1;
        pt.tail_bounds_hold = pt.jumps.p_at_least_1.value <= pt.bound_k1 + 3.0 * pt.jumps.p_at_least_1.std_error &&
                              pt.jumps.p_at_least_2.value <= pt.bound_k2 + 3.0 * pt.jumps.p_at_least_2.std_error &&
                              pt.jumps.p_at_least_3.value <= pt.bound_k3 + 3.0 * pt.jumps.p_at_least_3.std_error;
        pt.second_moment_holds = pt.jumps.mean_square_count.value <= 6.0;
        pt.mean_count_over_h = pt.jumps.mean_count.value / h;

        const std::size_t steps = detail::grid_steps(n, cfg.horizon);
        const std::size_t stride = n / common;
        std::vector<double> sups(cfg.samples, 0.0), sups_common(cfg.samples, 0.0);
        std::vector<char> flagged(cfg.samples, 0);
        const std::uint64_t base = derive_seed(cfg.seed, n, stream_role::diagnostics);
        detail::for_each_sample(cfg.samples, cfg.threads, [&](std::size_t s) {
            rng_stream chain_rng(derive_seed(base, s, stream_role::chain));
            rng_stream noise_rng(derive_seed(base, s, stream_role::brownian));
            rng_stream bridge_rng(derive_seed(base, s, stream_role::bridge));
            const chain_path path = sample_chain_path(setup.generator, cfg.initial_state, cfg.horizon, chain_rng);
            brownian_grid grid(spec.m, cfg.horizon, steps * ratio, noise_rng);
            const trajectory traj = simulate(spec, scheme_id::tamed_milstein, n, cfg.horizon, path, grid, bridge_rng, opt);
            if (traj.blew_up_at) {
                flagged[s] = 1;
                return;
            }
            double sup = 0.0, sup_own = 0.0;
            for (std::size_t k = 0; k < traj.values.size(); ++k) {
                const double r = traj.values[k].norm();
                sup_own = std::max(sup_own, r);
                if (k % stride == 0) sup = std::max(sup, r);
            }
            sups[s] = std::pow(sup_own, cfg.moment_p);
            sups_common[s] = std::pow(sup, cfg.moment_p);
        });
        std::vector<double> kept, kept_common;
        for (std::size_t s = 0; s < cfg.samples; ++s) {
            if (flagged[s]) {
                ++pt.blow_ups;
            } else {
                kept.push_back(sups[s]);
                kept_common.push_back(sups_common[s]);
            }
        }
        pt.sup_moment = detail::mean_estimate(kept);
        pt.sup_moment_common_grid = detail::mean_estimate(kept_common);

        ns.push_back(static_cast<double>(n));
        moments.push_back(pt.sup_moment.value);
        moments_common.push_back(pt.sup_moment_common_grid.value);
        if (pt.jumps.mean_count.value > 0.0) {
            log_h.push_back(std::log2(h));
            log_mean.push_back(std::log2(pt.jumps.mean_count.value));
        } else {
            all_positive = false;
        }
        rep.points.push_back(std::move(pt));
    }

    if (all_positive && log_h.size() >= 3) {
        std::vector<std::pair<double, double>> pts;
        // fit_order regresses log2 e on log2 n; feeding (1/h, E[N]) gives -slope in h.
        for (std::size_t i = 0; i < log_h.size(); ++i)
            pts.emplace_back(std::exp2(-log_h[i]), std::exp2(log_mean[i]));
        rep.mean_count_slope = fit_order(pts).order;
    }
    if (ns.size() >= 2) {
        rep.moment_trend_tau = kendall_tau(ns, moments);
        rep.common_grid_trend_tau = kendall_tau(ns, moments_common);
        rep.moment_trend_flagged = std::abs(rep.moment_trend_tau) >= diagnostics_report::trend_threshold;
    }
    return rep;
}

inline diagnostics_report run_diagnostics(const experiment_config& cfg) {
    return run_diagnostics(cfg, models::builtin(cfg.model));
}

struct ablation_report {
    convergence_report experiment;
    double full_order = 0.0;
    double ablated_order = 0.0;
    std::vector<std::pair<std::size_t, double>> error_ratio;  // n -> e_ablated / e_full
};

/// Full scheme against the same scheme without the jump-correction term, on common paths.
inline ablation_report ablation_study(const experiment_config& cfg, const model_spec& spec) {
    rng_stream probe(derive_seed(cfg.seed, 0, stream_role::diagnostics));
    const vec x0 = cfg.x0.value_or(spec.x0);
    const vec pad = 2.0 * (1.0 + x0.array().abs()).matrix();
    const sample_box box{x0 - pad, x0 + pad};
    if (!diffusion_depends_on_state(spec, box, 256, probe)) throw ablation_vacuous();

    experiment_config run = cfg;
    run.schemes = {scheme_id::tamed_milstein, scheme_id::ablated_milstein};
    ablation_report rep;
    rep.experiment = run_experiment(run, spec);
    rep.full_order = rep.experiment.order_of(scheme_id::tamed_milstein).fit.order;
    rep.ablated_order = rep.experiment.order_of(scheme_id::ablated_milstein).fit.order;
    for (std::size_t n : run.n_list) {
        const double full = rep.experiment.at(scheme_id::tamed_milstein, n).error;
        const double abl = rep.experiment.at(scheme_id::ablated_milstein, n).error;
        rep.error_ratio.emplace_back(n, full > 0.0 ? abl / full : std::numeric_limits<double>::infinity());
    }
    return rep;
}

inline ablation_report ablation_study(const experiment_config& cfg) {
    return ablation_study(cfg, models::builtin(cfg.model));
}

/// One trajectory of `id` at n = cfg.simulate_n, driven by sample 0's streams.
inline trajectory simulate_single(const experiment_config& cfg, const model_spec& spec, scheme_id id) {
    const experiment_setup setup = resolve_setup(cfg, spec);
    if (!(cfg.horizon > 0.0)) throw config_error("T must be positive");
    if (id == scheme_id::commutative_milstein && !spec.commutative)
        throw config_error("scheme commutative_milstein requested but model '" + spec.name +
                           "' does not satisfy the commutative condition");
    const std::size_t n = cfg.simulate_n;
    const double q = setup.generator.q_max();
    if (n == 0 || (q > 0.0 && !(1.0 / static_cast<double>(n) < 1.0 / (2.0 * q))))
        throw config_error("n=" + std::to_string(n) + " violates the step constraint h < 1/(2q)");
    const std::size_t ratio = spec.commutative ? 1 : cfg.refinement_ratio;
    simulate_options opt;
    opt.q_max = q;
    opt.x0 = setup.x0;
    opt.refinement = spec.commutative ? 0 : cfg.refinement_ratio;

    rng_stream chain_rng(derive_seed(cfg.seed, 0, stream_role::chain));
    rng_stream noise_rng(derive_seed(cfg.seed, 0, stream_role::brownian));
    rng_stream bridge_rng(derive_seed(cfg.seed, 0, stream_role::bridge));
    const chain_path path = sample_chain_path(setup.generator, cfg.initial_state, cfg.horizon, chain_rng);
    brownian_grid grid(spec.m, cfg.horizon, detail::grid_steps(n, cfg.horizon) * ratio, noise_rng);
    return simulate(spec, id, n, cfg.horizon, path, grid, bridge_rng, opt);
}

} // namespace tsde
