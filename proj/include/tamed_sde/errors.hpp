#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsde {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class negative_off_diagonal : public error {
public:
    negative_off_diagonal(std::size_t row, std::size_t col, double value)
        : error("generator entry (" + std::to_string(row) + "," + std::to_string(col) +
                ") is negative: " + std::to_string(value)),
          row(row), col(col), value(value) {}
    std::size_t row, col;
    double value;
};

class row_sum_nonzero : public error {
public:
    row_sum_nonzero(std::size_t row, double residual)
        : error("generator row " + std::to_string(row) + " does not sum to zero (residual " +
                std::to_string(residual) + ")"),
          row(row), residual(residual) {}
    std::size_t row;
    double residual;
};

class time_out_of_range : public error {
public:
    explicit time_out_of_range(double t)
        : error("time " + std::to_string(t) + " lies outside the path horizon"), t(t) {}
    double t;
};

class invalid_interval : public error {
public:
    invalid_interval(double s, double t)
        : error("invalid interval (" + std::to_string(s) + ", " + std::to_string(t) + ")") {}
};

class step_too_large : public error {
public:
    step_too_large(double h, double q_max)
        : error("step h=" + std::to_string(h) + " violates h < 1/(2q) with q=" +
                std::to_string(q_max)),
          h(h), q_max(q_max) {}
    double h, q_max;
};

class grid_mismatch : public error {
public:
    using error::error;
};

class missing_bridge_value : public error {
public:
    missing_bridge_value()
        : error("step has exactly one jump but no W(t_{k+1}) - W(tau) value was supplied") {}
};

class not_commutative : public error {
public:
    using error::error;
};

class degenerate_errors : public error {
public:
    using error::error;
};

class ablation_vacuous : public error {
public:
    ablation_vacuous()
        : error("diffusion does not depend on the chain state; ablation is a no-op") {}
};

/// Invalid configuration (bad key, value or combination). The CLI maps it to exit code 2.
class config_error : public error {
public:
    using error::error;
};

} // namespace tsde
