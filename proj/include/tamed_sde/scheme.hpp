#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "chain.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "noise.hpp"
#include "rng.hpp"

namespace tsde {

enum class scheme_id { tamed_milstein, commutative_milstein, ablated_milstein, tamed_em, em, reference };

inline constexpr std::string_view to_string(scheme_id id) {
    switch (id) {
    case scheme_id::tamed_milstein: return "tamed_milstein";
    case scheme_id::commutative_milstein: return "commutative_milstein";
    case scheme_id::ablated_milstein: return "ablated_milstein";
    case scheme_id::tamed_em: return "tamed_em";
    case scheme_id::em: return "em";
    case scheme_id::reference: return "reference";
    }
    return "?";
}

inline scheme_id parse_scheme(std::string_view name) {
    for (auto id : {scheme_id::tamed_milstein, scheme_id::commutative_milstein, scheme_id::ablated_milstein,
                    scheme_id::tamed_em, scheme_id::em, scheme_id::reference})
        if (to_string(id) == name) return id;
    throw config_error("unknown scheme '" + std::string(name) + "'");
}

inline bool uses_iterated_integrals(scheme_id id) {
    return id == scheme_id::tamed_milstein || id == scheme_id::ablated_milstein || id == scheme_id::reference;
}

/// Everything one step of a scheme may look at: data up to t_{k+1} only.
struct step_inputs {
    vec x;                       // X_{t_k}
    state_index state_now = 0;   // alpha_{t_k}
    state_index state_next = 0;  // alpha_{t_{k+1}}
    double dt = 0.0;
    vec dw;                      // W_{t_{k+1}} - W_{t_k}
    mat iterated;                // iterated(l1, l); unused by EM-type steps
    std::size_t jump_count = 0;  // jumps in (t_k, t_{k+1})
    std::optional<vec> w_after_first_jump;  // W_{t_{k+1}} - W_{tau_1}, iff jump_count == 1
};

namespace detail {

inline void check_inputs(const step_inputs& in) {
    if (!(in.dt > 0.0)) throw error("step size must be positive");
    if (in.jump_count == 1 && !in.w_after_first_jump) throw missing_bridge_value();
    if (in.jump_count != 1 && in.w_after_first_jump)
        throw error("bridge value supplied for a step without exactly one jump");
}

/// x + drift dt + sum_l sigma^(l) dW^l, with sigma evaluated once and reused.
inline vec euler_part(const vec& drift, const mat& sig, const step_inputs& in) {
    return in.x + drift * in.dt + sig * in.dw;
}

inline vec milstein_term(const model_spec& spec, const mat& sig, const step_inputs& in, const mat& iterated) {
    vec out = vec::Zero(static_cast<Eigen::Index>(spec.d));
    for (std::size_t l = 0; l < spec.m; ++l) {
        const mat jac = spec.diffusion_jacobian(in.x, in.state_now, l);
        for (std::size_t l1 = 0; l1 < spec.m; ++l1)
            out += (jac * sig.col(static_cast<Eigen::Index>(l1))) *
                   iterated(static_cast<Eigen::Index>(l1), static_cast<Eigen::Index>(l));
    }
    return out;
}

/// 1{N = 1} sum_l (sigma^(l)(x, alpha_{k+1}) - sigma^(l)(x, alpha_k)) (W_{t_{k+1}} - W_{tau_1}).
inline vec jump_correction(const model_spec& spec, const mat& sig, const step_inputs& in) {
    if (in.jump_count != 1) return vec::Zero(static_cast<Eigen::Index>(spec.d));
    return (spec.diffusion(in.x, in.state_next) - sig) * *in.w_after_first_jump;
}

inline vec milstein_step(const model_spec& spec, double n, const step_inputs& in, const mat& iterated,
                         bool with_correction) {
    check_inputs(in);
    const mat sig = spec.diffusion(in.x, in.state_now);
    vec out = euler_part(tamed_drift(spec, n, in.x, in.state_now), sig, in);
    out += milstein_term(spec, sig, in, iterated);
    if (with_correction) out += jump_correction(spec, sig, in);
    return out;
}

} // namespace detail

/// One step of the tamed Milstein scheme for switching SDEs. `n` is the taming index.
inline vec tamed_milstein_step(const model_spec& spec, double n, const step_inputs& in) {
    return detail::milstein_step(spec, n, in, in.iterated, true);
}

/// The scheme with I[l1][l] replaced by (dW^l1 dW^l - 1{l = l1} dt) / 2. Needs a commutative model.
inline vec commutative_milstein_step(const model_spec& spec, double n, const step_inputs& in) {
    if (!spec.commutative)
        throw not_commutative("model '" + spec.name + "' does not satisfy the commutative condition");
    return detail::milstein_step(spec, n, in, symmetric_iterated_integrals(in.dw, in.dt), true);
}

/// Tamed Milstein without the jump-correction term.
inline vec ablated_milstein_step(const model_spec& spec, double n, const step_inputs& in) {
    return detail::milstein_step(spec, n, in, in.iterated, false);
}

inline vec tamed_em_step(const model_spec& spec, double n, const step_inputs& in) {
    detail::check_inputs(in);
    return detail::euler_part(tamed_drift(spec, n, in.x, in.state_now), spec.diffusion(in.x, in.state_now), in);
}

inline vec em_step(const model_spec& spec, const step_inputs& in) {
    detail::check_inputs(in);
    return detail::euler_part(spec.drift(in.x, in.state_now), spec.diffusion(in.x, in.state_now), in);
}

/// Values of a scheme on its grid t_k = k / n.
struct trajectory {
    scheme_id scheme = scheme_id::tamed_milstein;
    std::size_t n = 0;
    std::vector<double> times;
    std::vector<vec> values;
    std::vector<state_index> chain_states;
    std::optional<std::size_t> blew_up_at;  // first grid index with a non-finite value

    std::size_t steps() const noexcept { return values.empty() ? 0 : values.size() - 1; }
};

struct simulate_options {
    /// Iterated-integral realization; unset picks exact_diagonal for commutative
    /// models and fine_sum otherwise.
    std::optional<levy_mode> levy;
    /// Sub-steps per coarse step for fine_sum (0 = every fine step of the noise grid).
    std::size_t refinement = 0;
    /// Taming index override for consistency checks; production runs leave it unset (n_tame = n).
    std::optional<double> n_tame;
    /// Generator bound q; when positive the step must satisfy h < 1/(2q).
    double q_max = 0.0;
    /// Initial value; the model's x0 when unset.
    std::optional<vec> x0;
};

namespace detail {

inline std::size_t grid_steps(std::size_t n, double horizon) {
    const double steps = static_cast<double>(n) * horizon;
    const double rounded = std::round(steps);
    if (n == 0 || rounded < 1.0 || std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps))
        throw grid_mismatch("n * T must be a positive integer (n=" + std::to_string(n) + ")");
    return static_cast<std::size_t>(rounded);
}

inline void check_step(std::size_t n, double q_max) {
    const double h = 1.0 / static_cast<double>(n);
    if (q_max > 0.0 && !(h < 1.0 / (2.0 * q_max))) throw step_too_large(h, q_max);
}

inline levy_mode resolve_levy(const model_spec& spec, const simulate_options& opt) {
    return opt.levy.value_or(spec.commutative ? levy_mode::exact_diagonal : levy_mode::fine_sum);
}

inline vec apply_step(const model_spec& spec, scheme_id id, double n_tame, const step_inputs& in) {
    switch (id) {
    case scheme_id::tamed_milstein:
    case scheme_id::reference: return tamed_milstein_step(spec, n_tame, in);
    case scheme_id::commutative_milstein: return commutative_milstein_step(spec, n_tame, in);
    case scheme_id::ablated_milstein: return ablated_milstein_step(spec, n_tame, in);
    case scheme_id::tamed_em: return tamed_em_step(spec, n_tame, in);
    case scheme_id::em: return em_step(spec, in);
    }
    throw error("unhandled scheme");
}

inline void freeze_after_blow_up(trajectory& out, std::size_t index, std::size_t total, double horizon) {
    out.blew_up_at = index;
    while (out.values.size() < total + 1) {
        const std::size_t k = out.values.size();
        out.values.push_back(out.values.back());
        out.times.push_back(k == total ? horizon : static_cast<double>(k) / static_cast<double>(out.n));
    }
}

} // namespace detail

trajectory reference_solution(const model_spec& spec, std::size_t n_ref, double horizon, const chain_path& chain,
                              brownian_grid& noise, rng_stream& rng, const simulate_options& opt = {});

/// Runs a scheme over k = 0 .. nT-1 on the coarse grid of n steps per unit time.
///
/// Per step the driver reads the chain at both endpoints and the jump data of
/// the open interval, and (only when exactly one jump occurred) W at the jump
/// time through the noise grid's bridge. The first non-finite state freezes the
/// trajectory and sets blew_up_at.
inline trajectory simulate(const model_spec& spec, scheme_id id, std::size_t n, double horizon,
                           const chain_path& chain, brownian_grid& noise, rng_stream& rng,
                           const simulate_options& opt = {}) {
    if (id == scheme_id::reference) return reference_solution(spec, n, horizon, chain, noise, rng, opt);
    if (id == scheme_id::commutative_milstein && !spec.commutative)
        throw not_commutative("model '" + spec.name + "' does not satisfy the commutative condition");
    const std::size_t steps = detail::grid_steps(n, horizon);
    detail::check_step(n, opt.q_max);
    const std::size_t r = refinement_of(noise, steps);
    const levy_mode mode = detail::resolve_levy(spec, opt);
    const double n_tame = opt.n_tame.value_or(static_cast<double>(n));
    const double h = 1.0 / static_cast<double>(n);

    trajectory out;
    out.scheme = id;
    out.n = n;
    out.times.reserve(steps + 1);
    out.values.reserve(steps + 1);
    out.chain_states.reserve(steps + 1);
    out.times.push_back(0.0);
    out.values.push_back(opt.x0.value_or(spec.x0));
    out.chain_states.push_back(state_at(chain, 0.0));

    step_inputs in;
    in.dt = h;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t0 = static_cast<double>(k) / static_cast<double>(n);
        const double t1 = k + 1 == steps ? horizon : static_cast<double>(k + 1) / static_cast<double>(n);
        in.x = out.values.back();
        in.state_now = out.chain_states.back();
        in.state_next = state_at(chain, t1);
        in.dw = coarse_increment(noise, steps, k);
        if (uses_iterated_integrals(id)) in.iterated = compute_iterated_integrals(noise, steps, k, mode, opt.refinement).values;
        const auto jumps = interval_jump_info(chain, t0, t1);
        in.jump_count = jumps.count;
        in.w_after_first_jump.reset();
        if (jumps.count == 1) in.w_after_first_jump = noise.at_index((k + 1) * r) - noise.value_at(*jumps.first_jump, rng);

        vec next = detail::apply_step(spec, id, n_tame, in);
        out.times.push_back(t1);
        out.chain_states.push_back(in.state_next);
        out.values.push_back(std::move(next));
        if (!out.values.back().allFinite()) {
            for (std::size_t j = k + 2; j <= steps; ++j)
                out.chain_states.push_back(state_at(chain, std::min(horizon, static_cast<double>(j) / static_cast<double>(n))));
            detail::freeze_after_blow_up(out, k + 1, steps, horizon);
            break;
        }
    }
    return out;
}

/// Fine-grid proxy for the exact solution.
///
/// Tamed Milstein with n_ref steps per unit time, where every step containing
/// chain jumps is split at the jump times. No sub-step then has a jump in its
/// interior, so the scheme's correction term never fires and every piece uses
/// the chain state in force on it. Split pieces use W at the jump times from the
/// bridge and the closed-form symmetric iterated integrals (exact on the
/// diagonal). Values are reported on the uniform grid.
inline trajectory reference_solution(const model_spec& spec, std::size_t n_ref, double horizon,
                                     const chain_path& chain, brownian_grid& noise, rng_stream& rng,
                                     const simulate_options& opt) {
    const std::size_t steps = detail::grid_steps(n_ref, horizon);
    detail::check_step(n_ref, opt.q_max);
    const std::size_t r = refinement_of(noise, steps);
    const levy_mode mode = detail::resolve_levy(spec, opt);
    const double n_tame = opt.n_tame.value_or(static_cast<double>(n_ref));
    const double h = 1.0 / static_cast<double>(n_ref);

    trajectory out;
    out.scheme = scheme_id::reference;
    out.n = n_ref;
    out.times.reserve(steps + 1);
    out.values.reserve(steps + 1);
    out.times.push_back(0.0);
    out.values.push_back(opt.x0.value_or(spec.x0));
    out.chain_states.push_back(state_at(chain, 0.0));

    step_inputs in;
    std::vector<double> cuts;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t0 = static_cast<double>(k) / static_cast<double>(n_ref);
        const double t1 = k + 1 == steps ? horizon : static_cast<double>(k + 1) / static_cast<double>(n_ref);
        vec x = out.values.back();
        const auto inside = jumps_between(chain, t0, t1);
        in.jump_count = 0;
        in.w_after_first_jump.reset();
        if (inside.empty()) {
            in.x = std::move(x);
            in.dt = h;
            in.state_now = out.chain_states.back();
            in.state_next = state_at(chain, t1);
            in.dw = coarse_increment(noise, steps, k);
            in.iterated = compute_iterated_integrals(noise, steps, k, mode, opt.refinement).values;
            x = tamed_milstein_step(spec, n_tame, in);
        } else {
            cuts.assign(1, t0);
            cuts.insert(cuts.end(), inside.begin(), inside.end());
            cuts.push_back(t1);
            vec w_prev = noise.at_index(k * r);
            for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
                const vec w_next = p + 2 == cuts.size() ? noise.at_index((k + 1) * r) : noise.value_at(cuts[p + 1], rng);
                in.x = std::move(x);
                in.dt = cuts[p + 1] - cuts[p];
                in.state_now = state_at(chain, cuts[p]);
                in.state_next = state_at(chain, cuts[p + 1]);
                in.dw = w_next - w_prev;
                in.iterated = symmetric_iterated_integrals(in.dw, in.dt);
                x = tamed_milstein_step(spec, n_tame, in);
                w_prev = w_next;
            }
        }
        out.times.push_back(t1);
        out.chain_states.push_back(state_at(chain, t1));
        out.values.push_back(std::move(x));
        if (!out.values.back().allFinite()) {
            for (std::size_t j = k + 2; j <= steps; ++j)
                out.chain_states.push_back(state_at(chain, std::min(horizon, static_cast<double>(j) / static_cast<double>(n_ref))));
            detail::freeze_after_blow_up(out, k + 1, steps, horizon);
            break;
        }
    }
    return out;
}

} // namespace tsde
