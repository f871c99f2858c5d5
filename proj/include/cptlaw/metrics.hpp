#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cptlaw/errors.hpp"

namespace cptlaw {

inline constexpr double kDefaultHuberDelta = 0.02;
inline constexpr double kDefaultYClip = 1e-8;

// Huber penalty: quadratic r^2/2 inside |r| <= delta, linear beyond.
inline double huber(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

inline double d_huber(double r, double delta) {
    if (r > delta) return delta;
    if (r < -delta) return -delta;
    return r;
}

namespace detail {

inline void check_pairs(std::span<const double> preds, std::span<const double> obs) {
    if (preds.size() != obs.size())
        throw DataError("metric inputs differ in length (" + std::to_string(preds.size()) + " vs " +
                        std::to_string(obs.size()) + ")");
    if (preds.empty()) throw DataError("metric inputs are empty");
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (!(preds[i] > 0.0) || !(obs[i] > 0.0))
            throw DataError("metric inputs must be positive (pair " + std::to_string(i) + ")");
}

} // namespace detail

// Mean Huber penalty on log residuals ln(pred) - ln(obs).
inline double huber_log(std::span<const double> preds, std::span<const double> obs,
                        double delta = kDefaultHuberDelta) {
    detail::check_pairs(preds, obs);
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        sum += huber(std::log(preds[i]) - std::log(obs[i]), delta);
    return sum / static_cast<double>(preds.size());
}

inline double rmse_log(std::span<const double> preds, std::span<const double> obs) {
    detail::check_pairs(preds, obs);
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double r = std::log(preds[i]) - std::log(obs[i]);
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(preds.size()));
}

inline double mae_rel(std::span<const double> preds, std::span<const double> obs) {
    detail::check_pairs(preds, obs);
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        sum += std::abs(preds[i] - obs[i]) / obs[i];
    return sum / static_cast<double>(preds.size());
}

// MAPE with the denominator clipped below at y_clip; equals mae_rel whenever
// all observations exceed y_clip.
inline double mape_clip(std::span<const double> preds, std::span<const double> obs,
                        double y_clip = kDefaultYClip) {
    detail::check_pairs(preds, obs);
    if (!(y_clip > 0.0)) throw ConfigError("y_clip must be > 0");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        sum += std::abs(preds[i] - obs[i]) / std::max(obs[i], y_clip);
    return sum / static_cast<double>(preds.size());
}

struct Calibration {
    double intercept = 0.0;
    double slope = 1.0;
};

// OLS of ln(obs) on ln(pred). An ideal forecaster gives intercept 0, slope 1.
inline Calibration calibration_ols(std::span<const double> preds, std::span<const double> obs) {
    detail::check_pairs(preds, obs);
    const std::size_t n = preds.size();
    if (n < 2) throw DataError("calibration_ols needs at least 2 points");

    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += std::log(preds[i]);
        mean_y += std::log(obs[i]);
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);

    double sxx = 0.0, sxy = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(preds[i]) - mean_x;
        const double dy = std::log(obs[i]) - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        scale += std::log(preds[i]) * std::log(preds[i]);
    }
    if (sxx <= 1e-14 * std::max(scale, 1e-300))
        throw DataError("calibration_ols: predictions are (numerically) constant in log space");

    Calibration c;
    c.slope = sxy / sxx;
    c.intercept = mean_y - c.slope * mean_x;
    return c;
}

struct MetricsReport {
    double huber_log = 0.0;
    double rmse_log = 0.0;
    double mae_rel = 0.0;
    double mape_clip = 0.0;
    double intercept = 0.0;
    double slope = 1.0;
    std::size_t n_points = 0;
};

inline MetricsReport metrics_report(std::span<const double> preds, std::span<const double> obs,
                                    double delta = kDefaultHuberDelta,
                                    double y_clip = kDefaultYClip) {
    MetricsReport r;
    r.huber_log = huber_log(preds, obs, delta);
    r.rmse_log = rmse_log(preds, obs);
    r.mae_rel = mae_rel(preds, obs);
    r.mape_clip = mape_clip(preds, obs, y_clip);
    const Calibration c = calibration_ols(preds, obs);
    r.intercept = c.intercept;
    r.slope = c.slope;
    r.n_points = preds.size();
    return r;
}

} // namespace cptlaw
