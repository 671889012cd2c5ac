#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "chain.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace tsde {

using vec = Eigen::VectorXd;
using mat = Eigen::MatrixXd;

/// A switching SDE dX = b(X, a) dt + sum_l sigma^(l)(X, a) dW^l with its first
/// derivatives and taming exponents. Coefficients must be pure functions.
struct model_spec {
    std::string name;
    std::size_t d = 1;       // state dimension
    std::size_t m = 1;       // noise dimension
    std::size_t states = 1;  // chain state count

    std::function<vec(const vec&, state_index)> drift;
    /// d x m matrix; column l is sigma^(l).
    std::function<mat(const vec&, state_index)> diffusion;
    std::function<mat(const vec&, state_index)> drift_jacobian;
    /// Jacobian of sigma^(l), d x d.
    std::function<mat(const vec&, state_index, std::size_t l)> diffusion_jacobian;

    double rho = 0.0;   // growth exponent of Db
    double rho1 = 0.0;  // exponent in the tamed-drift bounds
    bool commutative = false;

    vec x0;                    // deterministic initial value, shared by every scheme
    mat default_generator;     // used when the config does not name one

    /// Closed-form solution X_t along a given chain path, when the model has one.
    std::function<vec(const vec& x0, const chain_path&, double t)> exact_solution;
};

inline void validate_model(const model_spec& spec) {
    if (spec.d < 1 || spec.m < 1 || spec.states < 1) throw config_error("model dimensions must be at least 1");
    if (spec.rho < 0.0 || spec.rho1 < 0.0) throw config_error("taming exponents must be non-negative");
    if (!spec.drift || !spec.diffusion || !spec.drift_jacobian || !spec.diffusion_jacobian)
        throw config_error("model '" + spec.name + "' is missing a coefficient function");
    if (static_cast<std::size_t>(spec.x0.size()) != spec.d) throw config_error("initial value has wrong dimension");
}

/// b^n(x, i) = b(x, i) / (1 + |x|^{2 rho} / n).
inline vec tamed_drift(const model_spec& spec, double n, const vec& x, state_index i) {
    return spec.drift(x, i) / (1.0 + std::pow(x.norm(), 2.0 * spec.rho) / n);
}

/// Signature of a tamed drift b^n(x, i); check_assumptions accepts alternatives.
using tamed_drift_fn = std::function<vec(const vec&, state_index, double n)>;

/// Axis-aligned sampling box.
struct sample_box {
    vec lower, upper;

    static sample_box cube(std::size_t d, double half_width) {
        return {vec::Constant(static_cast<Eigen::Index>(d), -half_width),
                vec::Constant(static_cast<Eigen::Index>(d), half_width)};
    }

    vec draw(rng_stream& rng) const {
        vec x(lower.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = lower(i) + (upper(i) - lower(i)) * rng.uniform_open();
        return x;
    }
};

/// Smallest constants making each assumption hold on the sampled points.
/// Names follow the assumption labels H-2 ... H-6.
struct assumption_report {
    std::size_t samples = 0;
    double h2_drift = -std::numeric_limits<double>::infinity();  // (x-y)(b(x)-b(y)) / |x-y|^2
    double h2_diffusion = 0.0;                                   // |sigma(x)-sigma(y)|^2 / |x-y|^2
    double h3_drift = 0.0;                                       // |Db(x)-Db(y)| / ((1+|x|+|y|)^{rho-1}|x-y|)
    double h3_diffusion = 0.0;                                   // |Dsigma(x)-Dsigma(y)| / |x-y|
    double h5_one_sided = -std::numeric_limits<double>::infinity(); // x b^n(x) / (1+|x|)^2
    double h5_c1 = 0.0;                                          // |b^n| / (sqrt(n)(1+|x|))
    double h5_c2 = 0.0;                                          // |b^n| / (1+|x|)^{rho1+1}
    double h6 = 0.0;                                             // n |b - b^n| / (1+|x|)^{rho1+1}

    double h2() const { return std::max(h2_drift, h2_diffusion); }

    std::vector<std::pair<std::string, double>> entries() const {
        return {{"H-2 drift", h2_drift},        {"H-2 diffusion", h2_diffusion}, {"H-3 drift", h3_drift},
                {"H-3 diffusion", h3_diffusion}, {"H-5 one-sided", h5_one_sided}, {"H-5 c1", h5_c1},
                {"H-5 c2", h5_c2},               {"H-6", h6}};
    }
};

/// Empirical surrogates for the assumption constants over random points of the box.
inline assumption_report check_assumptions(const model_spec& spec, const sample_box& box, std::size_t sample_count,
                                           std::span<const double> n_list, rng_stream& rng,
                                           const tamed_drift_fn& tamed = {}) {
    if (sample_count < 2) throw error("need at least two sample points");
    auto bn = tamed ? tamed : tamed_drift_fn([&spec](const vec& x, state_index i, double n) {
        return tamed_drift(spec, n, x, i);
    });

    assumption_report rep;
    rep.samples = sample_count;
    for (std::size_t s = 0; s < sample_count; ++s) {
        const vec x = box.draw(rng);
        const vec y = box.draw(rng);
        const double dist = (x - y).norm();
        const double nx = x.norm(), ny = y.norm();
        for (state_index i = 0; i < spec.states; ++i) {
            if (dist > 0.0) {
                const double d2 = dist * dist;
                rep.h2_drift = std::max(rep.h2_drift, (x - y).dot(spec.drift(x, i) - spec.drift(y, i)) / d2);
                rep.h2_diffusion = std::max(rep.h2_diffusion, (spec.diffusion(x, i) - spec.diffusion(y, i)).squaredNorm() / d2);
                const double w = std::pow(1.0 + nx + ny, spec.rho - 1.0) * dist;
                rep.h3_drift = std::max(rep.h3_drift, (spec.drift_jacobian(x, i) - spec.drift_jacobian(y, i)).norm() / w);
                for (std::size_t l = 0; l < spec.m; ++l)
                    rep.h3_diffusion = std::max(
                        rep.h3_diffusion, (spec.diffusion_jacobian(x, i, l) - spec.diffusion_jacobian(y, i, l)).norm() / dist);
            }
            const vec b = spec.drift(x, i);
            const double grow = 1.0 + nx;
            for (double n : n_list) {
                const vec b_n = bn(x, i, n);
                const double mag = b_n.norm();
                rep.h5_one_sided = std::max(rep.h5_one_sided, x.dot(b_n) / (grow * grow));
                rep.h5_c1 = std::max(rep.h5_c1, mag / (std::sqrt(n) * grow));
                rep.h5_c2 = std::max(rep.h5_c2, mag / std::pow(grow, spec.rho1 + 1.0));
                rep.h6 = std::max(rep.h6, n * (b - b_n).norm() / std::pow(grow, spec.rho1 + 1.0));
            }
        }
    }
    return rep;
}

/// Per-assumption verdict from two reports on nested boxes. An entry is flagged
/// when its constant grows by more than `growth_threshold` times from the
/// smaller box to the larger one.
struct assumption_verdict {
    std::string name;
    double small_box = 0.0;
    double large_box = 0.0;
    bool violated = false;
};

inline std::vector<assumption_verdict> compare_assumption_reports(const assumption_report& small,
                                                                  const assumption_report& large,
                                                                  double growth_threshold = 1.5) {
    std::vector<assumption_verdict> out;
    auto a = small.entries();
    auto b = large.entries();
    for (std::size_t k = 0; k < a.size(); ++k) {
        assumption_verdict v{a[k].first, a[k].second, b[k].second, false};
        const double base = std::max(std::abs(v.small_box), 1e-12);
        v.violated = v.large_box > 1e-12 && v.large_box > growth_threshold * base;
        out.push_back(v);
    }
    return out;
}

/// max |Dsigma^(l) sigma^(l1) - Dsigma^(l1) sigma^(l)| over samples, states and column pairs.
inline double check_commutativity(const model_spec& spec, const sample_box& box, std::size_t sample_count,
                                  rng_stream& rng) {
    if (spec.d == 1 || spec.m == 1) return 0.0;
    double worst = 0.0;
    for (std::size_t s = 0; s < sample_count; ++s) {
        const vec x = box.draw(rng);
        for (state_index i = 0; i < spec.states; ++i) {
            const mat sig = spec.diffusion(x, i);
            std::vector<mat> jac;
            for (std::size_t l = 0; l < spec.m; ++l) jac.push_back(spec.diffusion_jacobian(x, i, l));
            for (std::size_t l = 0; l < spec.m; ++l)
                for (std::size_t l1 = l + 1; l1 < spec.m; ++l1) {
                    vec r = jac[l] * sig.col(static_cast<Eigen::Index>(l1)) - jac[l1] * sig.col(static_cast<Eigen::Index>(l));
                    worst = std::max(worst, r.norm());
                }
        }
    }
    return worst;
}

namespace detail {

inline double jacobian_deviation(const mat& supplied, const mat& fd) {
    const double scale = std::max(supplied.norm(), fd.norm());
    const double diff = (supplied - fd).norm();
    return scale < 1e-12 ? diff : diff / scale;
}

template <typename F>
mat central_difference(const F& f, const vec& x, double step) {
    const vec f0 = f(x);
    mat out(f0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        vec xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        out.col(j) = (f(xp) - f(xm)) / (2.0 * step);
    }
    return out;
}

} // namespace detail

/// Worst relative deviation of the supplied Jacobians (drift and every
/// diffusion column) from central finite differences at (x, i).
inline double finite_difference_jacobian_check(const model_spec& spec, const vec& x, state_index i, double step) {
    if (!(step > 0.0)) throw error("finite-difference step must be positive");
    double worst = detail::jacobian_deviation(
        spec.drift_jacobian(x, i), detail::central_difference([&](const vec& y) { return spec.drift(y, i); }, x, step));
    for (std::size_t l = 0; l < spec.m; ++l) {
        auto col = [&](const vec& y) -> vec { return spec.diffusion(y, i).col(static_cast<Eigen::Index>(l)); };
        worst = std::max(worst, detail::jacobian_deviation(spec.diffusion_jacobian(x, i, l),
                                                           detail::central_difference(col, x, step)));
    }
    return worst;
}

/// True if sigma differs between some pair of chain states at some sampled point.
inline bool diffusion_depends_on_state(const model_spec& spec, const sample_box& box, std::size_t sample_count,
                                       rng_stream& rng) {
    if (spec.states < 2) return false;
    for (std::size_t s = 0; s < sample_count; ++s) {
        const vec x = box.draw(rng);
        const mat ref = spec.diffusion(x, 0);
        for (state_index i = 1; i < spec.states; ++i)
            if ((spec.diffusion(x, i) - ref).norm() > 1e-14 * (1.0 + ref.norm())) return true;
    }
    return false;
}

} // namespace tsde
