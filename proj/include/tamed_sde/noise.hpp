#pragma once

#include <cmath>
#include <cstddef>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <algorithm>

#include <Eigen/Dense>

#include "errors.hpp"
#include "rng.hpp"

namespace tsde {

/// m-dimensional Brownian path sampled on a uniform grid of n_fine steps over
/// [0, T], plus Brownian-bridge values at off-grid times drawn on demand.
///
/// The increments and cumulative values never change after construction; only
/// the bridge cache grows. Bridge queries are not thread-safe.
class brownian_grid {
public:
    brownian_grid(std::size_t dimension, double horizon, std::size_t n_fine, rng_stream& rng)
        : dim_(dimension), horizon_(horizon), n_fine_(n_fine), h_fine_(horizon / static_cast<double>(n_fine)),
          increments_(static_cast<Eigen::Index>(n_fine), static_cast<Eigen::Index>(dimension)),
          cumulative_(static_cast<Eigen::Index>(n_fine + 1), static_cast<Eigen::Index>(dimension)) {
        if (dimension < 1) throw error("noise dimension must be at least 1");
        if (n_fine < 1) throw error("fine grid needs at least one step");
        if (!(horizon > 0.0)) throw error("horizon must be positive");
        const double scale = std::sqrt(h_fine_);
        cumulative_.row(0).setZero();
        for (Eigen::Index j = 0; j < increments_.rows(); ++j) {
            for (Eigen::Index l = 0; l < increments_.cols(); ++l) increments_(j, l) = scale * rng.normal();
            cumulative_.row(j + 1) = cumulative_.row(j) + increments_.row(j);
        }
    }

    /// Builds a grid from given increments (tests, replay).
    brownian_grid(double horizon, Eigen::MatrixXd increments)
        : dim_(static_cast<std::size_t>(increments.cols())), horizon_(horizon),
          n_fine_(static_cast<std::size_t>(increments.rows())),
          h_fine_(horizon / static_cast<double>(increments.rows())), increments_(std::move(increments)),
          cumulative_(increments_.rows() + 1, increments_.cols()) {
        if (dim_ < 1 || n_fine_ < 1) throw error("increment matrix must be non-empty");
        cumulative_.row(0).setZero();
        for (Eigen::Index j = 0; j < increments_.rows(); ++j)
            cumulative_.row(j + 1) = cumulative_.row(j) + increments_.row(j);
    }

    std::size_t dimension() const noexcept { return dim_; }
    double horizon() const noexcept { return horizon_; }
    std::size_t fine_steps() const noexcept { return n_fine_; }
    double fine_step() const noexcept { return h_fine_; }
    const Eigen::MatrixXd& increments() const noexcept { return increments_; }
    const Eigen::MatrixXd& cumulative() const noexcept { return cumulative_; }

    /// W at fine grid index j.
    Eigen::VectorXd at_index(std::size_t j) const { return cumulative_.row(static_cast<Eigen::Index>(j)).transpose(); }

    /// Fine-grid index of t if t is a grid point (within a relative 1e-12 of the step).
    std::optional<std::size_t> grid_index(double t) const {
        double pos = t / h_fine_;
        double r = std::round(pos);
        if (std::abs(pos - r) <= 1e-12 * std::max(1.0, r) && r >= 0.0 && r <= static_cast<double>(n_fine_))
            return static_cast<std::size_t>(r);
        return std::nullopt;
    }

    /// W_t. Off-grid values are drawn from the Brownian bridge between the nearest
    /// known values (grid points or earlier bridge samples) and cached, so the
    /// joint law of all queried values is that of one Brownian path regardless
    /// of query order.
    Eigen::VectorXd value_at(double t, rng_stream& rng) {
        if (!(t >= 0.0 && t <= horizon_)) throw time_out_of_range(t);
        if (auto j = grid_index(t)) return at_index(*j);
        if (auto hit = bridge_cache_.find(t); hit != bridge_cache_.end()) return hit->second;

        auto j = static_cast<std::size_t>(std::floor(t / h_fine_));
        if (j >= n_fine_) j = n_fine_ - 1;
        double a = static_cast<double>(j) * h_fine_;
        double b = static_cast<double>(j + 1) * h_fine_;
        Eigen::VectorXd wa = at_index(j);
        Eigen::VectorXd wb = at_index(j + 1);

        auto right = bridge_cache_.upper_bound(t);
        if (right != bridge_cache_.end() && right->first < b) {
            b = right->first;
            wb = right->second;
        }
        if (right != bridge_cache_.begin()) {
            auto left = std::prev(right);
            if (left->first > a) {
                a = left->first;
                wa = left->second;
            }
        }

        const double frac = (t - a) / (b - a);
        const double sd = std::sqrt((t - a) * (b - t) / (b - a));
        Eigen::VectorXd w(static_cast<Eigen::Index>(dim_));
        for (Eigen::Index l = 0; l < w.size(); ++l) w(l) = wa(l) + frac * (wb(l) - wa(l)) + sd * rng.normal();
        bridge_cache_.emplace(t, w);
        return w;
    }

    std::size_t bridge_cache_size() const noexcept { return bridge_cache_.size(); }
    void clear_bridge_cache() { bridge_cache_.clear(); }

private:
    std::size_t dim_;
    double horizon_;
    std::size_t n_fine_;
    double h_fine_;
    Eigen::MatrixXd increments_;  // n_fine x m
    Eigen::MatrixXd cumulative_;  // (n_fine + 1) x m
    std::map<double, Eigen::VectorXd> bridge_cache_;
};

inline brownian_grid generate_brownian(std::size_t m, double horizon, std::size_t n_fine, rng_stream& rng) {
    return brownian_grid(m, horizon, n_fine, rng);
}

/// Fine steps per coarse step; throws grid_mismatch unless coarse_steps divides n_fine.
inline std::size_t refinement_of(const brownian_grid& grid, std::size_t coarse_steps) {
    if (coarse_steps == 0 || grid.fine_steps() % coarse_steps != 0)
        throw grid_mismatch("coarse grid of " + std::to_string(coarse_steps) + " steps does not nest in " +
                            std::to_string(grid.fine_steps()) + " fine steps");
    return grid.fine_steps() / coarse_steps;
}

/// Increment over coarse step k of a grid with coarse_steps steps on [0, T]:
/// the fine increments of that step summed in index order. For k = 0 this
/// equals the cumulative value bitwise; elsewhere it agrees with the
/// cumulative difference up to rounding.
inline Eigen::VectorXd coarse_increment(const brownian_grid& grid, std::size_t coarse_steps, std::size_t k) {
    const std::size_t r = refinement_of(grid, coarse_steps);
    if (k >= coarse_steps) throw error("coarse step index out of range");
    Eigen::VectorXd sum = grid.increments().row(static_cast<Eigen::Index>(k * r)).transpose();
    for (std::size_t j = k * r + 1; j < (k + 1) * r; ++j) sum += grid.increments().row(static_cast<Eigen::Index>(j)).transpose();
    return sum;
}

enum class levy_mode { exact_diagonal, fine_sum };

/// Approximations of the double integrals
/// I[l1][l] = int_{t_k}^{t_{k+1}} int_{t_k}^{s} dW^{l1}_u dW^l_s over one coarse step.
struct iterated_integrals {
    std::size_t step = 0;
    Eigen::MatrixXd values;         // values(l1, l)
    double symmetry_residual = 0.0; // max |I[a][b] + I[b][a] - dW_a dW_b| over a != b
};

/// Diagonal (dW^2 - dt)/2, off-diagonal dW_a dW_b / 2. Exact on the diagonal; the
/// off-diagonal entries are only the symmetric part, which is all that enters
/// the scheme under the commutative condition.
inline Eigen::MatrixXd symmetric_iterated_integrals(const Eigen::VectorXd& dw, double dt) {
    const Eigen::Index m = dw.size();
    Eigen::MatrixXd out(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b) out(a, b) = a == b ? 0.5 * (dw(a) * dw(a) - dt) : 0.5 * (dw(a) * dw(b));
    return out;
}

inline double symmetry_residual_of(const Eigen::MatrixXd& values, const Eigen::VectorXd& dw) {
    double worst = 0.0;
    for (Eigen::Index a = 0; a < values.rows(); ++a)
        for (Eigen::Index b = a + 1; b < values.cols(); ++b)
            worst = std::max(worst, std::abs(values(a, b) + values(b, a) - dw(a) * dw(b)));
    return worst;
}

/// Iterated integrals over coarse step k.
///
/// fine_sum uses the Ito-Riemann sum over `refinement` equal sub-steps of the
/// coarse step (0 means every fine step). Each sub-step must be a whole number
/// of fine steps. The sum's mean-square error is O(h^2 / refinement).
inline iterated_integrals compute_iterated_integrals(const brownian_grid& grid, std::size_t coarse_steps, std::size_t k,
                                                     levy_mode mode, std::size_t refinement = 0) {
    const std::size_t r = refinement_of(grid, coarse_steps);
    const double dt = grid.horizon() / static_cast<double>(coarse_steps);
    const Eigen::VectorXd dw = coarse_increment(grid, coarse_steps, k);

    iterated_integrals out;
    out.step = k;
    out.values = symmetric_iterated_integrals(dw, dt);
    const auto m = static_cast<Eigen::Index>(grid.dimension());
    if (mode == levy_mode::exact_diagonal || m == 1) return out;

    const std::size_t sub = refinement == 0 ? r : refinement;
    if (r % sub != 0)
        throw grid_mismatch("refinement " + std::to_string(sub) + " does not divide the " + std::to_string(r) +
                            " fine steps per coarse step");
    const std::size_t per_sub = r / sub;

    Eigen::VectorXd running = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t s = 0; s < sub; ++s) {
        Eigen::VectorXd inc = Eigen::VectorXd::Zero(m);
        for (std::size_t j = 0; j < per_sub; ++j)
            inc += grid.increments().row(static_cast<Eigen::Index>(k * r + s * per_sub + j)).transpose();
        for (Eigen::Index a = 0; a < m; ++a)
            for (Eigen::Index b = 0; b < m; ++b)
                if (a != b) sums(a, b) += running(a) * inc(b);
        running += inc;
    }
    for (Eigen::Index a = 0; a < m; ++a)
        for (Eigen::Index b = 0; b < m; ++b)
            if (a != b) out.values(a, b) = sums(a, b);
    out.symmetry_residual = symmetry_residual_of(out.values, dw);
    return out;
}

} // namespace tsde
