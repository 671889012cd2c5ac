#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace tsde {

/// Pairwise (cascade) summation in index order; the result depends only on the
/// values and their order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

struct order_fit {
    double order = 0.0;         // -slope of log2 e against log2 n
    double slope_std_error = 0.0;
    double intercept = 0.0;
    std::vector<double> residuals;  // in log2 units, same order as the input
};

/// Ordinary least squares of log2 e(n) on log2 n; order = -slope.
inline order_fit fit_order(std::span<const std::pair<double, double>> points) {
    if (points.size() < 3) throw degenerate_errors("order fit needs at least three points");
    std::vector<double> xs, ys;
    for (auto [n, e] : points) {
        if (!(e > 0.0) || !std::isfinite(e)) throw degenerate_errors("order fit needs positive finite errors");
        if (!(n > 0.0)) throw degenerate_errors("order fit needs positive step counts");
        xs.push_back(std::log2(n));
        ys.push_back(std::log2(e));
    }
    const double k = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx <= 0.0) throw degenerate_errors("order fit needs at least two distinct step counts");
    const double slope = sxy / sxx;

    order_fit fit;
    fit.order = -slope;
    fit.intercept = my - slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double r = ys[i] - (fit.intercept + slope * xs[i]);
        fit.residuals.push_back(r);
        ssr += r * r;
    }
    fit.slope_std_error = std::sqrt(ssr / (k - 2.0) / sxx);
    return fit;
}

/// Kendall's tau-b rank correlation.
inline double kendall_tau(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw error("kendall_tau needs two equal-length series");
    double concordant = 0.0, discordant = 0.0, ties_x = 0.0, ties_y = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            const double dx = x[j] - x[i], dy = y[j] - y[i];
            if (dx == 0.0 && dy == 0.0) continue;
            if (dx == 0.0) {
                ties_x += 1.0;
            } else if (dy == 0.0) {
                ties_y += 1.0;
            } else if ((dx > 0.0) == (dy > 0.0)) {
                concordant += 1.0;
            } else {
                discordant += 1.0;
            }
        }
    const double denom = std::sqrt((concordant + discordant + ties_x) * (concordant + discordant + ties_y));
    return denom > 0.0 ? (concordant - discordant) / denom : 0.0;
}

} // namespace tsde
