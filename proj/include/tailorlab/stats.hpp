#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "tailorlab/error.hpp"

namespace tailorlab::stats {

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? std::nan("") : s / static_cast<double>(xs.size());
}

/// Unbiased sample variance; NaN for fewer than two values.
inline double variance(std::span<const double> xs) {
    if (xs.size() < 2) return std::nan("");
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

inline double sd(std::span<const double> xs) { return std::sqrt(variance(xs)); }

/// Two-sided p-value of a t statistic; df <= 0 or infinite falls back to normal.
inline double two_sided_p(double t, double df) {
    if (std::isnan(t)) return std::nan("");
    if (std::isinf(t)) return 0.0;
    if (!(df > 0.0) || std::isinf(df)) {
        boost::math::normal_distribution<double> z;
        return 2.0 * boost::math::cdf(boost::math::complement(z, std::abs(t)));
    }
    boost::math::students_t_distribution<double> dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct WelchResult {
    double difference = 0.0;
    double se = 0.0;
    double df = 0.0;
    double t = 0.0;
    double p = 1.0;
};

/// Welch two-sample t-test of mean(a) - mean(b). With equal group sizes the
/// standard error equals the pooled-variance one.
inline WelchResult welch(std::span<const double> a, std::span<const double> b) {
    WelchResult r;
    r.difference = mean(a) - mean(b);
    const double va = variance(a) / static_cast<double>(a.size());
    const double vb = variance(b) / static_cast<double>(b.size());
    r.se = std::sqrt(va + vb);
    if (!(r.se > 0.0)) {
        r.df = std::nan("");
        r.t = r.difference == 0.0 ? 0.0 : std::copysign(INFINITY, r.difference);
        r.p = r.difference == 0.0 ? 1.0 : 0.0;
        if (std::isnan(r.se)) {
            r.t = std::nan("");
            r.p = std::nan("");
        }
        return r;
    }
    r.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    r.t = r.difference / r.se;
    r.p = two_sided_p(r.t, r.df);
    return r;
}

struct OlsFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd fitted;
    double residual_variance = 0.0;
    std::size_t df = 0;
};

/// Least squares by column-pivoted QR; standard errors from s^2 (X'X)^-1.
inline OlsFit ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size()) throw Error("ols: design and response sizes differ");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < x.cols()) throw Error("ols: design matrix is rank deficient");
    OlsFit fit;
    fit.coefficients = qr.solve(y);
    fit.fitted = x * fit.coefficients;
    const Eigen::VectorXd resid = y - fit.fitted;
    fit.df = static_cast<std::size_t>(x.rows() - x.cols());
    fit.residual_variance = fit.df > 0 ? resid.squaredNorm() / static_cast<double>(fit.df) : std::nan("");
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
    fit.standard_errors = (fit.residual_variance * xtx_inv.diagonal()).array().sqrt();
    return fit;
}

/// Percentile with linear interpolation between order statistics (type 7).
inline double quantile(std::vector<double> xs, double q) {
    if (xs.empty()) return std::nan("");
    std::sort(xs.begin(), xs.end());
    const double h = (static_cast<double>(xs.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace tailorlab::stats
