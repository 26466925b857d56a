#pragma once

// Reference computations used as test oracles. Everything here is written
// directly from the defining formulas and avoids the library's solvers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "alasso/dataset.hpp"

namespace oracle {

/// Random regression instance with an arbitrary column structure.
inline alasso::TimeSeriesDataset random_dataset(std::mt19937_64& gen, std::size_t n, std::size_t p,
                                                double noise = 1.0, double sparsity = 0.5) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::bernoulli_distribution keep(sparsity);
    alasso::TimeSeriesDataset d;
    d.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < d.z.cols(); ++j)
        for (Eigen::Index i = 0; i < d.z.rows(); ++i) d.z(i, j) = z(gen);
    // mild collinearity
    if (p > 1) d.z.col(1) += 0.3 * d.z.col(0);
    Eigen::VectorXd theta(static_cast<Eigen::Index>(p));
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = keep(gen) ? u(gen) : 0.0;
    d.y = d.z * theta;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) += noise * z(gen);
    d.spec.contemporaneous = p;
    for (std::size_t j = 0; j < p; ++j) d.names.push_back("v" + std::to_string(j + 1));
    d.spec.variable_names = d.names;
    return d;
}

/// Least squares from the normal equations, solved by full-pivot LU.
inline Eigen::VectorXd ols(const Eigen::MatrixXd& z, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd g = z.transpose() * z;
    return g.fullPivLu().solve(z.transpose() * y);
}

/// (1/n) sum (y - z theta)^2 + (lambda/n) sum w |theta|.
inline double al_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, double lambda,
                           const Eigen::VectorXd& w, const Eigen::VectorXd& theta) {
    const double n = static_cast<double>(y.size());
    double rss = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double r = y(i);
        for (Eigen::Index j = 0; j < theta.size(); ++j) r -= z(i, j) * theta(j);
        rss += r * r;
    }
    double pen = 0.0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) pen += w(j) * std::abs(theta(j));
    return (rss + lambda * pen) / n;
}

/// argmin over a scalar of  g x^2 - 2 c x + k |x|.
inline double scalar_argmin(double g, double c, double k) {
    if (c > k / 2.0) return (c - k / 2.0) / g;
    if (c < -k / 2.0) return (c + k / 2.0) / g;
    return 0.0;
}

struct GridResult {
    Eigen::Vector2d theta;
    double value;
};

/// Exhaustive search for min of f over [lo, hi]^2 with 2001 points per axis,
/// followed by two zoomed 2001^2 passes around the incumbent. The origin and
/// the coordinate axes are always included in the first pass.
template <class F>
GridResult grid_search_2d(F f, double lo, double hi) {
    constexpr int m = 2001;
    GridResult best{Eigen::Vector2d::Zero(), f(Eigen::Vector2d::Zero())};
    double cx = 0.5 * (lo + hi), cy = cx, half = 0.5 * (hi - lo);
    for (int pass = 0; pass < 3; ++pass) {
        const double step = 2.0 * half / (m - 1);
        const double x0 = cx - half, y0 = cy - half;
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b < m; ++b) {
                Eigen::Vector2d t(x0 + a * step, y0 + b * step);
                if (std::abs(t(0)) < 0.5 * step) t(0) = 0.0;
                if (std::abs(t(1)) < 0.5 * step) t(1) = 0.0;
                const double v = f(t);
                if (v < best.value) best = {t, v};
            }
        }
        cx = best.theta(0);
        cy = best.theta(1);
        half = 4.0 * step;
    }
    return best;
}

struct Moments {
    Eigen::MatrixXd c, omega, v;
};

/// C = (1/n) sum z z', Omega = (1/n) sum e^2 z z', V = C^-1 Omega C^-1, by explicit loops.
inline Moments moments(const Eigen::MatrixXd& z, const Eigen::VectorXd& e, bool robust = true) {
    const auto n = z.rows(), p = z.cols();
    Moments m;
    m.c = Eigen::MatrixXd::Zero(p, p);
    m.omega = Eigen::MatrixXd::Zero(p, p);
    double s2 = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        s2 += e(t) * e(t);
        for (Eigen::Index a = 0; a < p; ++a)
            for (Eigen::Index b = 0; b < p; ++b) {
                m.c(a, b) += z(t, a) * z(t, b);
                m.omega(a, b) += e(t) * e(t) * z(t, a) * z(t, b);
            }
    }
    m.c /= static_cast<double>(n);
    m.omega /= static_cast<double>(n);
    s2 /= static_cast<double>(n);
    const Eigen::MatrixXd ci = m.c.fullPivLu().inverse();
    if (robust) {
        m.v = ci * m.omega * ci;
    } else {
        m.omega = s2 * m.c;
        m.v = s2 * ci;
    }
    return m;
}

/// 0.975 standard normal quantile to 15 digits.
inline constexpr double kZ975 = 1.959963984540054;

}  // namespace oracle
