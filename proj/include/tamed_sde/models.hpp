#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "chain.hpp"
#include "errors.hpp"
#include "model.hpp"

namespace tsde::models {

/// Integral of rate[alpha_s] over [0, t] along the path.
inline double occupation_integral(const chain_path& path, std::span<const double> rate, double t) {
    double total = 0.0;
    double prev = 0.0;
    state_index state = path.initial_state;
    for (std::size_t j = 0; j < path.jump_times.size() && path.jump_times[j] < t; ++j) {
        total += rate[state] * (path.jump_times[j] - prev);
        prev = path.jump_times[j];
        state = path.post_jump_states[j];
    }
    return total + rate[state] * (t - prev);
}

inline mat two_state_generator() {
    mat q(2, 2);
    q << -1.0, 1.0, 1.0, -1.0;
    return q;
}

/// d = m = 1, two states. b(x,0) = x - x^3, b(x,1) = -2x - x^3,
/// sigma(x,0) = 0.4x, sigma(x,1) = 0.3x + 0.1, rho = 2.
inline model_spec m1() {
    model_spec s;
    s.name = "M1";
    s.d = 1;
    s.m = 1;
    s.states = 2;
    s.drift = [](const vec& x, state_index i) -> vec {
        const double v = x(0);
        return vec::Constant(1, i == 0 ? v - v * v * v : -2.0 * v - v * v * v);
    };
    s.diffusion = [](const vec& x, state_index i) -> mat {
        return mat::Constant(1, 1, i == 0 ? 0.4 * x(0) : 0.3 * x(0) + 0.1);
    };
    s.drift_jacobian = [](const vec& x, state_index i) -> mat {
        const double v = x(0);
        return mat::Constant(1, 1, i == 0 ? 1.0 - 3.0 * v * v : -2.0 - 3.0 * v * v);
    };
    s.diffusion_jacobian = [](const vec&, state_index i, std::size_t) -> mat {
        return mat::Constant(1, 1, i == 0 ? 0.4 : 0.3);
    };
    s.rho = 2.0;
    s.rho1 = 6.0;
    s.commutative = true;
    s.x0 = vec::Constant(1, 1.0);
    s.default_generator = two_state_generator();
    return s;
}

/// Pure switching linear drift: b(x,i) = a_i x with a = (1, -1), sigma = 0.
/// X_t = X_0 exp(int_0^t a_{alpha_s} ds).
inline model_spec m2() {
    static constexpr std::array<double, 2> a{1.0, -1.0};
    model_spec s;
    s.name = "M2";
    s.d = 1;
    s.m = 1;
    s.states = 2;
    s.drift = [](const vec& x, state_index i) -> vec { return a[i] * x; };
    s.diffusion = [](const vec&, state_index) -> mat { return mat::Zero(1, 1); };
    s.drift_jacobian = [](const vec&, state_index i) -> mat { return mat::Constant(1, 1, a[i]); };
    s.diffusion_jacobian = [](const vec&, state_index, std::size_t) -> mat { return mat::Zero(1, 1); };
    s.rho = 0.0;
    s.rho1 = 0.0;
    s.commutative = true;
    s.x0 = vec::Constant(1, 1.0);
    s.default_generator = two_state_generator();
    s.exact_solution = [](const vec& x0, const chain_path& path, double t) -> vec {
        return x0 * std::exp(occupation_integral(path, a, t));
    };
    return s;
}

/// d = m = 2 with non-commuting noise: sigma^(1) = s_i (x2, 0), sigma^(2) = s_i (0, x1),
/// s = (1, 0.5); drift b(x,i) = c_i x - |x|^2 x with c = (1, -2), rho = 2.
inline model_spec m3() {
    static constexpr std::array<double, 2> c{1.0, -2.0};
    static constexpr std::array<double, 2> scale{1.0, 0.5};
    model_spec s;
    s.name = "M3";
    s.d = 2;
    s.m = 2;
    s.states = 2;
    s.drift = [](const vec& x, state_index i) -> vec { return c[i] * x - x.squaredNorm() * x; };
    s.diffusion = [](const vec& x, state_index i) -> mat {
        mat sig(2, 2);
        sig << x(1), 0.0, 0.0, x(0);
        return scale[i] * sig;
    };
    s.drift_jacobian = [](const vec& x, state_index i) -> mat {
        return (c[i] - x.squaredNorm()) * mat::Identity(2, 2) - 2.0 * x * x.transpose();
    };
    s.diffusion_jacobian = [](const vec&, state_index i, std::size_t l) -> mat {
        mat j = mat::Zero(2, 2);
        if (l == 0)
            j(0, 1) = scale[i];
        else
            j(1, 0) = scale[i];
        return j;
    };
    s.rho = 2.0;
    s.rho1 = 6.0;
    s.commutative = false;
    s.x0 = (vec(2) << 1.0, 0.5).finished();
    s.default_generator = two_state_generator();
    return s;
}

/// b = 0, sigma = 0; every scheme returns X_0.
inline model_spec zero() {
    model_spec s;
    s.name = "zero";
    s.d = 1;
    s.m = 1;
    s.states = 2;
    s.drift = [](const vec&, state_index) -> vec { return vec::Zero(1); };
    s.diffusion = [](const vec&, state_index) -> mat { return mat::Zero(1, 1); };
    s.drift_jacobian = [](const vec&, state_index) -> mat { return mat::Zero(1, 1); };
    s.diffusion_jacobian = [](const vec&, state_index, std::size_t) -> mat { return mat::Zero(1, 1); };
    s.commutative = true;
    s.x0 = vec::Constant(1, 1.0);
    s.default_generator = two_state_generator();
    s.exact_solution = [](const vec& x0, const chain_path&, double) -> vec { return x0; };
    return s;
}

inline std::vector<std::string> builtin_names() { return {"M1", "M2", "M3", "zero"}; }

inline model_spec builtin(std::string_view name) {
    if (name == "M1") return m1();
    if (name == "M2") return m2();
    if (name == "M3") return m3();
    if (name == "zero") return zero();
    throw config_error("unknown model '" + std::string(name) + "' (built-in models: M1, M2, M3, zero)");
}

} // namespace tsde::models
