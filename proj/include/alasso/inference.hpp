#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "alasso/dataset.hpp"
#include "alasso/error.hpp"
#include "alasso/estimators.hpp"
#include "alasso/normal.hpp"
#include "alasso/parallel.hpp"
#include "alasso/rng.hpp"

namespace alasso {

enum class CovarianceKind {
    Robust,     // C^-1 Omega C^-1 with Omega = (1/n) sum e_t^2 Z_t Z_t'
    Classical,  // sigma^2 C^-1 with sigma^2 = (1/n) sum e_t^2
};

inline const char* to_string(CovarianceKind k) noexcept {
    return k == CovarianceKind::Robust ? "robust" : "classical";
}

/// C = (1/n) sum Z Z', Omega, and V = C^-1 Omega C^-1 on a column subset.
struct MomentEstimates {
    Eigen::MatrixXd c_hat;
    Eigen::MatrixXd omega_hat;
    Eigen::MatrixXd v_hat;
    std::vector<std::size_t> indices;  // design columns, in order
    std::size_t n = 0;
    CovarianceKind kind = CovarianceKind::Robust;

    /// Position of design column `column` within `indices`, if present.
    std::optional<std::size_t> position(std::size_t column) const {
        const auto it = std::find(indices.begin(), indices.end(), column);
        if (it == indices.end()) return std::nullopt;
        return static_cast<std::size_t>(it - indices.begin());
    }
};

namespace detail {

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& z, std::span<const std::size_t> idx) {
    Eigen::MatrixXd out(z.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
        out.col(static_cast<Eigen::Index>(k)) = z.col(static_cast<Eigen::Index>(idx[k]));
    return out;
}

inline std::vector<std::size_t> all_indices(std::size_t p) {
    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

/// Inverse of a symmetric positive definite matrix, with the 1e12 condition guard.
inline Eigen::MatrixXd guarded_spd_inverse(const Eigen::MatrixXd& m, const char* what) {
    if (symmetric_condition(m) > kMaxCondition)
        throw SingularDesignError(std::string(what) + " is near-singular (condition number above 1e12)");
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw SingularDesignError(std::string(what) + " is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace detail

/// Moment matrices on the columns `indices` (all columns when empty).
inline MomentEstimates estimate_moments(const TimeSeriesDataset& data, const Eigen::VectorXd& residuals,
                                        std::span<const std::size_t> indices = {},
                                        CovarianceKind kind = CovarianceKind::Robust) {
    if (residuals.size() != static_cast<Eigen::Index>(data.n()))
        throw ContractError("estimate_moments: residuals must have length n");
    MomentEstimates m;
    m.n = data.n();
    m.kind = kind;
    m.indices = indices.empty() ? detail::all_indices(data.p())
                                : std::vector<std::size_t>(indices.begin(), indices.end());
    for (auto i : m.indices)
        if (i >= data.p()) throw ContractError("estimate_moments: column index out of range");

    const double n = static_cast<double>(data.n());
    const Eigen::MatrixXd za = detail::select_columns(data.z, m.indices);
    const auto q = za.cols();
    m.c_hat = Eigen::MatrixXd::Zero(q, q);
    m.c_hat.selfadjointView<Eigen::Lower>().rankUpdate(za.transpose(), 1.0 / n);
    m.c_hat.triangularView<Eigen::StrictlyUpper>() = m.c_hat.transpose();

    const Eigen::MatrixXd c_inv = detail::guarded_spd_inverse(m.c_hat, "C_hat");
    if (kind == CovarianceKind::Robust) {
        const Eigen::MatrixXd weighted = za.array().colwise() * residuals.array();
        m.omega_hat = Eigen::MatrixXd::Zero(q, q);
        m.omega_hat.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose(), 1.0 / n);
        m.omega_hat.triangularView<Eigen::StrictlyUpper>() = m.omega_hat.transpose();
    } else {
        m.omega_hat = (residuals.squaredNorm() / n) * m.c_hat;
    }
    m.v_hat = c_inv * m.omega_hat * c_inv;
    m.v_hat = 0.5 * (m.v_hat + m.v_hat.transpose());
    return m;
}

/// Finite-sample bias term of the active-set limit law:
///   b = ((1/n) sum Z^A Z^A')^-1 (lambda/(2 sqrt n)) (w_i sign(theta_i))_{i in A}.
struct BiasCorrection {
    Eigen::VectorXd b_hat;
    std::vector<std::size_t> active_set;
    double lambda = 0.0;
    Eigen::VectorXd weights;  // active entries only
    Eigen::VectorXd signs;

    /// b_i for design column `column`; zero when the column is inactive.
    double for_column(std::size_t column) const {
        const auto it = std::find(active_set.begin(), active_set.end(), column);
        return it == active_set.end() ? 0.0 : b_hat(it - active_set.begin());
    }
};

inline BiasCorrection bias_correction(const FitResult& fit, const TimeSeriesDataset& data,
                                      const PenaltySpec& penalty) {
    if (fit.method != Method::AdaptiveLasso)
        throw ContractError("bias_correction requires an adaptive-lasso fit");
    penalty.validate();
    BiasCorrection bc;
    bc.active_set = fit.active_set;
    bc.lambda = penalty.lambda;
    const auto q = static_cast<Eigen::Index>(fit.active_set.size());
    bc.b_hat = Eigen::VectorXd::Zero(q);
    bc.weights.resize(q);
    bc.signs.resize(q);
    if (q == 0) return bc;

    const double n = static_cast<double>(data.n());
    Eigen::VectorXd shift(q);
    for (Eigen::Index a = 0; a < q; ++a) {
        const auto j = static_cast<Eigen::Index>(fit.active_set[static_cast<std::size_t>(a)]);
        bc.weights(a) = penalty.weights(j);
        bc.signs(a) = fit.theta(j) > 0.0 ? 1.0 : (fit.theta(j) < 0.0 ? -1.0 : 0.0);
        shift(a) = penalty.lambda / (2.0 * std::sqrt(n)) * bc.weights(a) * bc.signs(a);
    }
    if (penalty.lambda == 0.0) return bc;

    const Eigen::MatrixXd za = detail::select_columns(data.z, fit.active_set);
    const Eigen::MatrixXd c_a = za.transpose() * za / n;
    if (symmetric_condition(c_a) > kMaxCondition)
        throw SingularDesignError("active-set Gram matrix is near-singular");
    Eigen::LLT<Eigen::MatrixXd> llt(c_a);
    if (llt.info() != Eigen::Success) throw SingularDesignError("active-set Gram matrix is singular");
    bc.b_hat = llt.solve(shift);
    return bc;
}

/// Normal confidence interval for one coefficient.
struct IntervalEstimate {
    std::size_t index = 0;
    double estimate = 0.0;
    double center = 0.0;
    double std_error = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double alpha = 0.05;
    bool bias_corrected = false;

    bool covers(double value) const noexcept { return lower <= value && value <= upper; }
};

/// Interval for active design column `column`; `moments` must be estimated on
/// the fit's active set (adaptive-lasso residuals).
inline IntervalEstimate confidence_interval(const FitResult& fit, const MomentEstimates& moments,
                                            const BiasCorrection* bias, double alpha,
                                            std::size_t column) {
    const double z = two_sided_z(alpha);
    if (std::find(fit.active_set.begin(), fit.active_set.end(), column) == fit.active_set.end())
        throw ContractError("confidence_interval: column " + std::to_string(column) +
                            " is not in the active set");
    const auto pos = moments.position(column);
    if (!pos) throw ContractError("confidence_interval: moments do not cover column " + std::to_string(column));

    const double n = static_cast<double>(moments.n);
    IntervalEstimate ci;
    ci.index = column;
    ci.alpha = alpha;
    ci.estimate = fit.theta(static_cast<Eigen::Index>(column));
    ci.bias_corrected = bias != nullptr;
    ci.center = ci.estimate + (bias ? bias->for_column(column) / std::sqrt(n) : 0.0);
    const auto k = static_cast<Eigen::Index>(*pos);
    ci.std_error = std::sqrt(moments.v_hat(k, k) / n);
    ci.lower = ci.center - z * ci.std_error;
    ci.upper = ci.center + z * ci.std_error;
    return ci;
}

/// Intervals for every active coefficient.
inline std::vector<IntervalEstimate> confidence_intervals(const FitResult& fit,
                                                          const MomentEstimates& moments,
                                                          const BiasCorrection* bias, double alpha) {
    std::vector<IntervalEstimate> out;
    out.reserve(fit.active_set.size());
    for (auto i : fit.active_set) out.push_back(confidence_interval(fit, moments, bias, alpha, i));
    return out;
}

/// Test of H0: theta_i = theta0 with statistic sqrt(n)|theta_i - theta0| and the
/// lambda = 0 critical value z_{1-alpha/2} sqrt(V_ii).
struct ZeroTest {
    std::size_t index = 0;
    double estimate = 0.0;
    double theta0 = 0.0;
    double statistic = 0.0;
    double critical_value = 0.0;
    double alpha = 0.05;
    bool reject = false;
};

/// `moments` must be the full-model estimate (OLS residuals, all columns).
inline ZeroTest test_zero(const FitResult& fit, const MomentEstimates& moments, double theta0,
                          std::size_t column, double alpha) {
    const double z = two_sided_z(alpha);
    if (column >= static_cast<std::size_t>(fit.theta.size()))
        throw ContractError("test_zero: column index out of range");
    const auto pos = moments.position(column);
    if (!pos) throw ContractError("test_zero: moments do not cover column " + std::to_string(column));
    ZeroTest t;
    t.index = column;
    t.alpha = alpha;
    t.theta0 = theta0;
    t.estimate = fit.theta(static_cast<Eigen::Index>(column));
    t.statistic = std::sqrt(static_cast<double>(moments.n)) * std::abs(t.estimate - theta0);
    const auto k = static_cast<Eigen::Index>(*pos);
    t.critical_value = z * std::sqrt(moments.v_hat(k, k));
    t.reject = t.statistic > t.critical_value;
    return t;
}

/// Limit process R(u) = -2u'W + u'Cu + sum lambda0_i |u_i|, W ~ N(0, Omega).
struct LimitDistSpec {
    Eigen::MatrixXd c;
    Eigen::MatrixXd omega;
    Eigen::VectorXd lambda0;
    std::size_t draws = 100000;
    std::uint64_t seed = 0;

    void validate() const {
        const auto p = c.rows();
        if (p == 0 || c.cols() != p || omega.rows() != p || omega.cols() != p || lambda0.size() != p)
            throw ContractError("LimitDistSpec: C, Omega and lambda0 must share dimension p >= 1");
        if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
            (omega - omega.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw ContractError("LimitDistSpec: C and Omega must be symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        if (llt.info() != Eigen::Success) throw ContractError("LimitDistSpec: C must be positive definite");
        for (Eigen::Index i = 0; i < p; ++i)
            if (!(lambda0(i) >= 0.0) || !std::isfinite(lambda0(i)))
                throw ContractError("LimitDistSpec: lambda0 must be finite and nonnegative");
        if (draws < 1000) throw ContractError("LimitDistSpec: at least 1000 draws required");
    }
};

/// Lower Cholesky-type factor L with L L' = Omega; PSD Omega falls back to LDLT.
inline Eigen::MatrixXd covariance_factor(const Eigen::MatrixXd& omega) {
    Eigen::LLT<Eigen::MatrixXd> llt(omega);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(omega);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -1e-12).any())
        throw ContractError("Omega factorization failed: matrix is not positive semidefinite");
    const Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd l = ldlt.matrixL();
    l = ldlt.transpositionsP().transpose() * (l * d.asDiagonal());
    return l;
}

/// Empirical 1-alpha quantile (inverse ECDF) of a sample; sorts in place.
inline double empirical_quantile(std::vector<double>& values, double level) {
    if (values.empty()) throw ContractError("empirical_quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = std::ceil(level * static_cast<double>(values.size()));
    const auto k = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(values.size())));
    return values[k - 1];
}

/// Draws |argmin R| for every coordinate; row-major (draw, coordinate).
/// Draw d always uses substream (seed, d), so results do not depend on `workers`.
inline std::vector<double> limit_draws(const LimitDistSpec& spec, std::size_t workers = 1) {
    spec.validate();
    const auto p = spec.c.rows();
    const Eigen::MatrixXd l = covariance_factor(spec.omega);
    std::vector<double> out(spec.draws * static_cast<std::size_t>(p));
    SolverOptions opts;
    opts.tol = 1e-12;
    parallel_for(spec.draws, workers, [&](std::size_t d) {
        Rng rng = Rng::substream(spec.seed, d);
        Eigen::VectorXd e(p);
        for (Eigen::Index i = 0; i < p; ++i) e(i) = rng.normal();
        const Eigen::VectorXd w = l * e;
        Eigen::VectorXd u;
        if (p == 1) {
            u = Eigen::VectorXd::Constant(1, soft_threshold(w(0), 0.5 * spec.lambda0(0)) / spec.c(0, 0));
        } else {
            u = minimize_weighted_l1(spec.c, w, spec.lambda0, Eigen::VectorXd::Zero(p), opts).theta;
        }
        for (Eigen::Index i = 0; i < p; ++i) out[d * static_cast<std::size_t>(p) + static_cast<std::size_t>(i)] = std::abs(u(i));
    });
    return out;
}

/// Per-coordinate 1-alpha quantiles of |u_i|, u = argmin R.
inline Eigen::VectorXd limit_quantiles(const LimitDistSpec& spec, double alpha, std::size_t workers = 1) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("alpha must lie in (0, 1)");
    const auto p = static_cast<std::size_t>(spec.c.rows());
    const std::vector<double> draws = limit_draws(spec, workers);
    Eigen::VectorXd q(static_cast<Eigen::Index>(p));
    std::vector<double> col(spec.draws);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t d = 0; d < spec.draws; ++d) col[d] = draws[d * p + i];
        q(static_cast<Eigen::Index>(i)) = empirical_quantile(col, 1.0 - alpha);
    }
    return q;
}

/// The lambda0 implied by a fitted model: lambda_n * w_i / sqrt(n).
inline Eigen::VectorXd implied_lambda0(const PenaltySpec& penalty, std::size_t n) {
    return penalty.lambda * penalty.weights / std::sqrt(static_cast<double>(n));
}

}  // namespace alasso
