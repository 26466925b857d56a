#pragma once

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "alasso/dataset.hpp"
#include "alasso/estimators.hpp"
#include "alasso/inference.hpp"

namespace alasso {

struct FitOptions {
    double alpha = 0.05;
    std::size_t grid_size = 100;
    std::optional<double> lambda;  // fixed lambda_n; BIC over the grid otherwise
    bool bias_correction = true;
    CovarianceKind covariance = CovarianceKind::Robust;
    bool standardize = false;
    SolverOptions solver;
    double theta0 = 0.0;
};

/// Rescale every design column to unit root-mean-square. Returns the scales.
inline Eigen::VectorXd standardize_columns(TimeSeriesDataset& data) {
    const double n = static_cast<double>(data.n());
    Eigen::VectorXd scales(data.z.cols());
    for (Eigen::Index j = 0; j < data.z.cols(); ++j) {
        const double s = std::sqrt(data.z.col(j).squaredNorm() / n);
        scales(j) = s > 0.0 ? s : 1.0;
        data.z.col(j) /= scales(j);
    }
    return scales;
}

struct FitReportRow {
    std::string name;
    double estimate = 0.0;     // adaptive lasso
    double std_error = 0.0;    // sqrt(V_ii / n), full-model sandwich
    double ls_estimate = 0.0;
    int stars = 0;             // significance at 10%, 5%, 1%
    ZeroTest test;             // H0: theta_i = theta0 at the requested alpha
    std::optional<IntervalEstimate> interval;
    std::optional<IntervalEstimate> interval_bias;
};

struct FitReport {
    std::string origin;
    std::size_t n = 0;
    double lambda = 0.0;
    bool lambda_from_bic = true;
    std::size_t grid_size = 0;
    double alpha = 0.05;
    CovarianceKind covariance = CovarianceKind::Robust;
    bool standardized = false;
    std::vector<std::size_t> active_set;
    std::vector<FitReportRow> rows;
    std::vector<std::string> warnings;
};

namespace detail {

inline int significance_stars(const FitResult& fit, const MomentEstimates& full, std::size_t column) {
    int stars = 0;
    for (double level : {0.10, 0.05, 0.01})
        if (test_zero(fit, full, 0.0, column, level).reject) ++stars;
    return stars;
}

inline IntervalEstimate rescale(IntervalEstimate ci, double s) {
    ci.estimate /= s;
    ci.center /= s;
    ci.std_error /= s;
    ci.lower /= s;
    ci.upper /= s;
    return ci;
}

}  // namespace detail

/// BIC path (or fixed lambda), bias correction, intervals for the active set
/// and the test of theta_i = theta0 for every coefficient.
inline FitReport run_fit(TimeSeriesDataset data, const FitOptions& opts) {
    if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw ContractError("alpha must lie in (0, 1)");
    FitReport rep;
    rep.origin = data.origin;
    rep.n = data.n();
    rep.alpha = opts.alpha;
    rep.covariance = opts.covariance;
    rep.grid_size = opts.grid_size;
    rep.standardized = opts.standardize;
    const auto p = static_cast<Eigen::Index>(data.p());
    Eigen::VectorXd scales = Eigen::VectorXd::Ones(p);
    if (opts.standardize) scales = standardize_columns(data);

    FitResult ols, fit;
    PenaltySpec penalty;
    if (opts.lambda) {
        const GramSystem gs = GramSystem::of(data);
        ols = ols_fit(data, gs);
        penalty = PenaltySpec::from_pilot(ols.theta, *opts.lambda);
        fit = adaptive_lasso_fit(data, gs, penalty, ols.theta, opts.solver);
        rep.lambda_from_bic = false;
        rep.warnings = fit.warnings;
    } else {
        PathOptions popts;
        popts.grid_size = opts.grid_size;
        popts.solver = opts.solver;
        BicPath path = fit_path(data, popts);
        fit = path.selected();
        ols = std::move(path.ols);
        penalty = path.penalty;
        rep.warnings = std::move(path.warnings);
    }
    if (!fit.converged) throw ConvergenceError("adaptive-lasso solver did not converge at the selected lambda");
    rep.lambda = penalty.lambda;
    rep.active_set = fit.active_set;

    // Scale-free: the theta0 test runs on the standardized coefficient theta0 * s_i.
    const MomentEstimates full = estimate_moments(data, ols.residuals, {}, opts.covariance);
    std::optional<MomentEstimates> act;
    std::optional<BiasCorrection> bias;
    if (!fit.active_set.empty()) {
        act = estimate_moments(data, fit.residuals, fit.active_set, opts.covariance);
        if (opts.bias_correction) bias = bias_correction(fit, data, penalty);
    }

    const double n = static_cast<double>(data.n());
    for (Eigen::Index i = 0; i < p; ++i) {
        const auto col = static_cast<std::size_t>(i);
        const double s = scales(i);
        FitReportRow row;
        row.name = col < data.names.size() ? data.names[col] : "v" + std::to_string(col + 1);
        row.estimate = fit.theta(i) / s;
        row.ls_estimate = ols.theta(i) / s;
        row.std_error = std::sqrt(full.v_hat(i, i) / n) / s;
        row.stars = detail::significance_stars(fit, full, col);
        row.test = test_zero(fit, full, opts.theta0 * s, col, opts.alpha);
        row.test.estimate /= s;
        row.test.theta0 = opts.theta0;
        row.test.statistic /= s;
        row.test.critical_value /= s;
        if (act && act->position(col)) {
            row.interval = detail::rescale(confidence_interval(fit, *act, nullptr, opts.alpha, col), s);
            if (bias) row.interval_bias = detail::rescale(confidence_interval(fit, *act, &*bias, opts.alpha, col), s);
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

namespace detail {

inline std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace detail

/// Estimates table: adaptive lasso with stars, standard error, least squares.
inline std::string render_fit_report(const FitReport& rep) {
    std::size_t w = 8;
    for (const auto& r : rep.rows) w = std::max(w, r.name.size());
    std::ostringstream o;
    o << "Adaptive lasso estimation and inference\n";
    if (!rep.origin.empty()) o << "data: " << rep.origin << '\n';
    o << "n = " << rep.n << ", p = " << rep.rows.size() << ", lambda_n = " << detail::fmt("%.6f", rep.lambda)
      << (rep.lambda_from_bic ? " (BIC, " + std::to_string(rep.grid_size) + "-point grid on [0, n^(1/4)])"
                              : std::string(" (fixed)"))
      << '\n';
    o << "covariance: " << to_string(rep.covariance) << (rep.standardized ? ", standardized design" : "") << '\n';
    o << '\n';
    auto pad = [](std::string s, std::size_t width, bool left) {
        if (s.size() < width) s = left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
        return s;
    };
    o << pad("Variable", w, true) << "  " << pad("AL estimate", 16, false) << "  " << pad("Std. error", 12, false)
      << "  " << pad("LS estimate", 12, false) << '\n';
    o << std::string(w + 2 + 16 + 2 + 12 + 2 + 12, '-') << '\n';
    for (const auto& r : rep.rows) {
        std::string est = detail::fmt("%.4f", r.estimate);
        est += std::string(static_cast<std::size_t>(r.stars), '*') + std::string(3 - static_cast<std::size_t>(r.stars), ' ');
        o << pad(r.name, w, true) << "  " << pad(est, 16, false) << "  " << pad(detail::fmt("%.4f", r.std_error), 12, false)
          << "  " << pad(detail::fmt("%.4f", r.ls_estimate), 12, false) << '\n';
    }
    o << "\n*, **, *** denote significance at the 10%, 5% and 1% level.\n";
    o << "active set: ";
    if (rep.active_set.empty()) o << "(empty)";
    for (std::size_t k = 0; k < rep.active_set.size(); ++k)
        o << (k ? ", " : "") << rep.rows[rep.active_set[k]].name;
    o << '\n';
    for (const auto& wmsg : rep.warnings) o << "warning: " << wmsg << '\n';
    return o.str();
}

inline constexpr const char* kEstimatesCsvHeader =
    "name,al_estimate,std_error,ls_estimate,stars,active,ci_lower,ci_upper,ci_bias_lower,ci_bias_upper";

/// Full-precision CSV of the report rows.
inline std::string render_estimates_csv(const FitReport& rep) {
    std::ostringstream o;
    o << kEstimatesCsvHeader << '\n';
    auto num = [](double v) { return detail::format_double(v); };
    for (const auto& r : rep.rows) {
        o << r.name << ',' << num(r.estimate) << ',' << num(r.std_error) << ',' << num(r.ls_estimate) << ','
          << r.stars << ',' << (r.interval ? 1 : 0) << ',';
        o << (r.interval ? num(r.interval->lower) : "") << ',' << (r.interval ? num(r.interval->upper) : "") << ',';
        o << (r.interval_bias ? num(r.interval_bias->lower) : "") << ','
          << (r.interval_bias ? num(r.interval_bias->upper) : "") << '\n';
    }
    return o.str();
}

inline constexpr const char* kTestsCsvHeader = "name,estimate,theta0,statistic,critical_value,alpha,reject";

inline std::string render_tests_csv(const FitReport& rep, const std::vector<std::size_t>& columns) {
    std::ostringstream o;
    o << kTestsCsvHeader << '\n';
    auto num = [](double v) { return detail::format_double(v); };
    for (auto c : columns) {
        const auto& r = rep.rows.at(c);
        o << r.name << ',' << num(r.test.estimate) << ',' << num(r.test.theta0) << ',' << num(r.test.statistic) << ','
          << num(r.test.critical_value) << ',' << num(r.test.alpha) << ',' << (r.test.reject ? 1 : 0) << '\n';
    }
    return o.str();
}

inline std::string render_tests_text(const FitReport& rep, const std::vector<std::size_t>& columns) {
    std::size_t w = 8;
    for (auto c : columns) w = std::max(w, rep.rows.at(c).name.size());
    std::ostringstream o;
    o << "Tests of H0: theta_i = " << detail::fmt("%g", columns.empty() ? 0.0 : rep.rows.at(columns[0]).test.theta0)
      << " at level " << detail::fmt("%g", rep.alpha) << " (lambda_n = " << detail::fmt("%.6f", rep.lambda) << ")\n\n";
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %12s  %12s  %12s  %s\n", static_cast<int>(w), "Variable", "estimate",
                  "sqrt(n)|d|", "critical", "decision");
    o << line;
    for (auto c : columns) {
        const auto& t = rep.rows.at(c).test;
        std::snprintf(line, sizeof line, "%-*s  %12.6f  %12.6f  %12.6f  %s\n", static_cast<int>(w),
                      rep.rows.at(c).name.c_str(), t.estimate, t.statistic, t.critical_value,
                      t.reject ? "reject" : "do not reject");
        o << line;
    }
    return o.str();
}

}  // namespace alasso
