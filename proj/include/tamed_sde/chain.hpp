#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "rng.hpp"

namespace tsde {

using state_index = std::size_t;

/// Validated generator of a continuous-time Markov chain on {0, ..., states-1}.
class generator_matrix {
public:
    static constexpr double row_sum_tolerance = 1e-12;

    /// Throws negative_off_diagonal / row_sum_nonzero on invalid input.
    explicit generator_matrix(Eigen::MatrixXd rates) : rates_(std::move(rates)) {
        if (rates_.rows() != rates_.cols() || rates_.rows() < 1)
            throw error("generator must be a non-empty square matrix");
        if (!rates_.allFinite()) throw error("generator entries must be finite");
        const auto n = static_cast<std::size_t>(rates_.rows());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                if (i != j && rate(i, j) < 0.0) throw negative_off_diagonal(i, j, rate(i, j));
            double residual = rates_.row(static_cast<Eigen::Index>(i)).sum();
            if (std::abs(residual) > row_sum_tolerance) throw row_sum_nonzero(i, residual);
            q_max_ = std::max(q_max_, -rate(i, i));
        }
    }

    std::size_t states() const noexcept { return static_cast<std::size_t>(rates_.rows()); }
    double rate(state_index i, state_index j) const {
        return rates_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    /// Total jump intensity out of state i, i.e. -q_ii.
    double exit_rate(state_index i) const { return -rate(i, i); }
    /// q = max_i (-q_ii).
    double q_max() const noexcept { return q_max_; }
    const Eigen::MatrixXd& rates() const noexcept { return rates_; }

private:
    Eigen::MatrixXd rates_;
    double q_max_ = 0.0;
};

inline generator_matrix validate_generator(const Eigen::MatrixXd& rates) { return generator_matrix(rates); }

/// Exact right-continuous chain trajectory on [0, T].
struct chain_path {
    double horizon = 0.0;
    state_index initial_state = 0;
    std::vector<double> jump_times;       // strictly increasing, in (0, T)
    std::vector<state_index> post_jump_states;

    std::size_t jump_count() const noexcept { return jump_times.size(); }
};

struct interval_jumps {
    std::size_t count = 0;
    std::optional<double> first_jump;
};

/// Simulates the chain by exponential holding times and the embedded jump chain.
inline chain_path sample_chain_path(const generator_matrix& gen, state_index initial_state, double horizon,
                                    rng_stream& rng) {
    if (!(horizon > 0.0)) throw error("chain horizon must be positive");
    if (initial_state >= gen.states()) throw error("initial state outside the state space");

    chain_path path;
    path.horizon = horizon;
    path.initial_state = initial_state;

    state_index current = initial_state;
    double t = 0.0;
    for (;;) {
        const double exit = gen.exit_rate(current);
        t += rng.exponential(exit);
        if (!(t < horizon)) break;

        // Next state with probability q_ij / (-q_ii), by inverse CDF over j != i.
        const double target = rng.uniform_open_closed() * exit;
        double acc = 0.0;
        state_index next = current;
        for (state_index j = 0; j < gen.states(); ++j) {
            if (j == current) continue;
            acc += gen.rate(current, j);
            next = j;
            if (target <= acc) break;
        }
        // Rounding can leave target slightly above the running sum; the loop then
        // falls through to the last state with positive rate.
        if (gen.rate(current, next) <= 0.0) {
            for (state_index j = gen.states(); j-- > 0;)
                if (j != current && gen.rate(current, j) > 0.0) { next = j; break; }
        }
        path.jump_times.push_back(t);
        path.post_jump_states.push_back(next);
        current = next;
    }
    return path;
}

/// State in effect at time t (post-jump state at a jump instant).
inline state_index state_at(const chain_path& path, double t) {
    if (!(t >= 0.0 && t <= path.horizon)) throw time_out_of_range(t);
    auto it = std::upper_bound(path.jump_times.begin(), path.jump_times.end(), t);
    if (it == path.jump_times.begin()) return path.initial_state;
    return path.post_jump_states[static_cast<std::size_t>(it - path.jump_times.begin()) - 1];
}

/// Number of jumps in the open interval (s, t) and the first of them.
inline interval_jumps interval_jump_info(const chain_path& path, double s, double t) {
    if (!(s >= 0.0 && s < t && t <= path.horizon)) throw invalid_interval(s, t);
    auto lo = std::upper_bound(path.jump_times.begin(), path.jump_times.end(), s);
    auto hi = std::lower_bound(lo, path.jump_times.end(), t);
    interval_jumps out;
    out.count = static_cast<std::size_t>(hi - lo);
    if (out.count > 0) out.first_jump = *lo;
    return out;
}

/// Jump times strictly inside (s, t), in order.
inline std::span<const double> jumps_between(const chain_path& path, double s, double t) {
    auto lo = std::upper_bound(path.jump_times.begin(), path.jump_times.end(), s);
    auto hi = std::lower_bound(lo, path.jump_times.end(), t);
    return {lo, hi};
}

/// Empirical mean and its standard error.
struct estimate {
    double value = 0.0;
    double std_error = 0.0;
};

struct jump_count_stats {
    double h = 0.0;
    double q_max = 0.0;
    std::size_t samples = 0;
    estimate p_at_least_1, p_at_least_2, p_at_least_3;
    estimate mean_count, mean_square_count;
};

/// Single-step statistics of N over an interval of length h, starting from a
/// uniformly drawn state. Requires h < 1/(2q) whenever q > 0.
inline jump_count_stats jump_count_statistics(const generator_matrix& gen, double h, std::size_t sample_count,
                                              rng_stream& rng) {
    if (!(h > 0.0)) throw error("step must be positive");
    if (gen.q_max() > 0.0 && !(h < 1.0 / (2.0 * gen.q_max()))) throw step_too_large(h, gen.q_max());
    if (sample_count < 2) throw error("need at least two samples");

    std::size_t ge[4] = {0, 0, 0, 0};
    double sum_n = 0.0, sum_n2 = 0.0, sum_n4 = 0.0;
    for (std::size_t s = 0; s < sample_count; ++s) {
        auto start = static_cast<state_index>(
            std::min<double>(std::floor(rng.uniform_open() * static_cast<double>(gen.states())),
                             static_cast<double>(gen.states() - 1)));
        auto path = sample_chain_path(gen, start, h, rng);
        const auto n = path.jump_count();
        for (std::size_t k = 1; k <= 3; ++k)
            if (n >= k) ++ge[k];
        const double dn = static_cast<double>(n);
        sum_n += dn;
        sum_n2 += dn * dn;
        sum_n4 += dn * dn * dn * dn;
    }

    const double m = static_cast<double>(sample_count);
    auto binomial = [m](std::size_t hits) {
        double p = static_cast<double>(hits) / m;
        return estimate{p, std::sqrt(p * (1.0 - p) / m)};
    };
    auto moment = [m](double s1, double s2) {
        double mean = s1 / m;
        double var = std::max(0.0, (s2 - m * mean * mean) / (m - 1.0));
        return estimate{mean, std::sqrt(var / m)};
    };

    jump_count_stats out;
    out.h = h;
    out.q_max = gen.q_max();
    out.samples = sample_count;
    out.p_at_least_1 = binomial(ge[1]);
    out.p_at_least_2 = binomial(ge[2]);
    out.p_at_least_3 = binomial(ge[3]);
    out.mean_count = moment(sum_n, sum_n2);
    out.mean_square_count = moment(sum_n2, sum_n4);
    return out;
}

} // namespace tsde
