#pragma once

#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "alasso/dataset.hpp"
#include "alasso/error.hpp"

namespace alasso {

/// sign(a) * max(|a| - b, 0). Thresholded inputs return an exact zero.
inline double soft_threshold(double a, double b) noexcept {
    assert(b >= 0.0);
    if (a > b) return a - b;
    if (a < -b) return a + b;
    return 0.0;
}

/// Sufficient statistics Z'Z, Z'Y, Y'Y of a dataset.
struct GramSystem {
    Eigen::MatrixXd gram;
    Eigen::VectorXd cross;
    double yy = 0.0;
    std::size_t n = 0;

    static GramSystem of(const TimeSeriesDataset& data) {
        GramSystem g;
        g.gram = Eigen::MatrixXd(data.z.cols(), data.z.cols());
        g.gram.setZero();
        g.gram.selfadjointView<Eigen::Lower>().rankUpdate(data.z.transpose());
        g.gram.triangularView<Eigen::StrictlyUpper>() = g.gram.transpose();
        g.cross = data.z.transpose() * data.y;
        g.yy = data.y.squaredNorm();
        g.n = data.n();
        return g;
    }
};

struct SolverOptions {
    double tol = 1e-8;      // on the largest coordinate change in one sweep
    int max_iter = 10000;   // sweeps
    bool check_monotone = false;
    bool polish = true;     // exact sign-constrained solve on the converged support
};

struct CdSolution {
    Eigen::VectorXd theta;
    int sweeps = 0;
    bool converged = false;
    int monotone_violations = 0;
    bool polished = false;
};

/// Objective  theta' G theta - 2 c' theta + sum_j penalty_j |theta_j|.
inline double weighted_l1_objective(const Eigen::MatrixXd& gram, const Eigen::VectorXd& linear,
                                    const Eigen::VectorXd& penalty, const Eigen::VectorXd& theta) {
    return theta.dot(gram * theta) - 2.0 * linear.dot(theta) +
           penalty.dot(theta.cwiseAbs());
}

/// Cyclic coordinate descent for the weighted-L1 quadratic objective above.
///
/// Used both for the adaptive lasso (G = Z'Z, c = Z'Y, penalty = lambda * w)
/// and for the limit process R(u) (G = C, c = W, penalty = lambda0).
inline CdSolution minimize_weighted_l1(const Eigen::MatrixXd& gram, const Eigen::VectorXd& linear,
                                       const Eigen::VectorXd& penalty, Eigen::VectorXd init,
                                       const SolverOptions& opts = {}) {
    const Eigen::Index p = gram.cols();
    if (gram.rows() != p || linear.size() != p || penalty.size() != p || init.size() != p)
        throw ContractError("minimize_weighted_l1: dimension mismatch");
    if (!(opts.tol > 0.0)) throw ContractError("solver tolerance must be positive");
    std::vector<std::size_t> zero_cols;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (!(gram(j, j) > 0.0)) zero_cols.push_back(static_cast<std::size_t>(j));
        if (!(penalty(j) >= 0.0)) throw ContractError("penalty coefficients must be nonnegative");
    }
    if (!zero_cols.empty())
        throw SingularDesignError("design has all-zero column(s)", std::move(zero_cols));

    CdSolution sol;
    sol.theta = std::move(init);
    Eigen::VectorXd resid_grad = linear - gram * sol.theta;  // c - G theta
    double prev_obj = opts.check_monotone
                          ? weighted_l1_objective(gram, linear, penalty, sol.theta)
                          : 0.0;

    for (int sweep = 1; sweep <= opts.max_iter; ++sweep) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double old = sol.theta(j);
            const double gjj = gram(j, j);
            const double updated = soft_threshold(resid_grad(j) + gjj * old, 0.5 * penalty(j)) / gjj;
            if (updated != old) {
                const double delta = updated - old;
                resid_grad.noalias() -= gram.col(j) * delta;
                sol.theta(j) = updated;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        sol.sweeps = sweep;
        if (opts.check_monotone) {
            const double obj = weighted_l1_objective(gram, linear, penalty, sol.theta);
            if (obj > prev_obj + 1e-12 * std::max(1.0, std::abs(prev_obj))) {
                ++sol.monotone_violations;
                assert(false && "coordinate descent objective increased");
            }
            prev_obj = obj;
        }
        if (max_delta < opts.tol) {
            sol.converged = true;
            break;
        }
    }
    if (!sol.converged || !opts.polish) return sol;

    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < p; ++j)
        if (sol.theta(j) != 0.0) support.push_back(j);
    if (support.empty()) return sol;

    const auto q = static_cast<Eigen::Index>(support.size());
    Eigen::MatrixXd g_aa(q, q);
    Eigen::VectorXd rhs(q);
    for (Eigen::Index a = 0; a < q; ++a) {
        const Eigen::Index ja = support[static_cast<std::size_t>(a)];
        for (Eigen::Index b = 0; b < q; ++b) g_aa(a, b) = gram(ja, support[static_cast<std::size_t>(b)]);
        rhs(a) = linear(ja) - 0.5 * penalty(ja) * (sol.theta(ja) > 0.0 ? 1.0 : -1.0);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(g_aa);
    if (ldlt.info() != Eigen::Success) return sol;
    const Eigen::VectorXd x = ldlt.solve(rhs);
    Eigen::VectorXd candidate = Eigen::VectorXd::Zero(p);
    for (Eigen::Index a = 0; a < q; ++a) {
        const Eigen::Index ja = support[static_cast<std::size_t>(a)];
        if (!std::isfinite(x(a)) || x(a) == 0.0 || (x(a) > 0.0) != (sol.theta(ja) > 0.0)) return sol;
        candidate(ja) = x(a);
    }
    const Eigen::VectorXd g = linear - gram * candidate;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (candidate(j) != 0.0) continue;
        const double slack = 1e-10 * std::max(1.0, std::abs(linear(j)));
        if (2.0 * std::abs(g(j)) > penalty(j) + slack) return sol;
    }
    sol.theta = candidate;
    sol.polished = true;
    return sol;
}

/// Adaptive-lasso penalty: tuning scalar lambda_n and weights 1/|theta_LS,i|.
struct PenaltySpec {
    double lambda = 0.0;
    Eigen::VectorXd weights;
    double weight_cap = 1e12;

    /// Weights from a pilot least-squares fit; |theta| < zero_tol maps to the cap.
    static PenaltySpec from_pilot(const Eigen::VectorXd& theta_ls, double lambda,
                                  double weight_cap = 1e12, double zero_tol = 1e-12) {
        PenaltySpec spec;
        spec.lambda = lambda;
        spec.weight_cap = weight_cap;
        spec.weights.resize(theta_ls.size());
        for (Eigen::Index i = 0; i < theta_ls.size(); ++i) {
            const double a = std::abs(theta_ls(i));
            spec.weights(i) = a < zero_tol ? weight_cap : 1.0 / a;
        }
        spec.validate();
        return spec;
    }

    PenaltySpec with_lambda(double l) const {
        PenaltySpec s = *this;
        s.lambda = l;
        return s;
    }

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw ContractError("lambda_n must be finite and nonnegative");
        for (Eigen::Index i = 0; i < weights.size(); ++i) {
            if (!(weights(i) > 0.0) || !std::isfinite(weights(i)))
                throw ContractError("adaptive weights must be positive and finite");
        }
    }

    Eigen::VectorXd coefficients() const { return lambda * weights; }
};

enum class Method { Ols, AdaptiveLasso };

inline const char* to_string(Method m) noexcept {
    return m == Method::Ols ? "ols" : "adaptive_lasso";
}

struct FitResult {
    Eigen::VectorXd theta;
    std::vector<std::size_t> active_set;
    Eigen::VectorXd residuals;
    double rss = 0.0;
    Method method = Method::Ols;
    std::optional<PenaltySpec> penalty;
    int solver_iters = 0;
    bool converged = true;
    std::vector<std::string> warnings;
};

namespace detail {

inline void finish_fit(const TimeSeriesDataset& data, FitResult& fit) {
    fit.active_set.clear();
    fit.residuals = data.y;
    for (Eigen::Index j = 0; j < fit.theta.size(); ++j) {
        if (fit.theta(j) != 0.0) {
            fit.active_set.push_back(static_cast<std::size_t>(j));
            fit.residuals.noalias() -= fit.theta(j) * data.z.col(j);
        }
    }
    fit.rss = fit.residuals.squaredNorm();
}

inline std::vector<std::size_t> rank_deficient_columns(const Eigen::MatrixXd& z) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(z);
    qr.setThreshold(1e-10);
    std::vector<std::size_t> cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < z.cols(); ++k) cols.push_back(static_cast<std::size_t>(perm(k)));
    if (cols.empty() && z.cols() > 0) cols.push_back(static_cast<std::size_t>(perm(z.cols() - 1)));
    return cols;
}

}  // namespace detail

/// Condition number (largest / smallest eigenvalue) of a symmetric matrix.
inline double symmetric_condition(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

inline constexpr double kMaxCondition = 1e12;

/// Least squares via Cholesky of Z'Z, guarded by a condition check on Z'Z/n.
inline FitResult ols_fit(const TimeSeriesDataset& data, const GramSystem& gs) {
    if (data.n() <= data.p()) throw DataError("ols_fit requires n > p");
    std::vector<std::size_t> zero_cols;
    for (Eigen::Index j = 0; j < gs.gram.cols(); ++j)
        if (!(gs.gram(j, j) > 0.0)) zero_cols.push_back(static_cast<std::size_t>(j));
    auto name_list = [&](const std::vector<std::size_t>& cols) {
        std::string s;
        for (auto c : cols) {
            if (!s.empty()) s += ", ";
            s += c < data.names.size() ? data.names[c] : std::to_string(c);
        }
        return s;
    };
    if (!zero_cols.empty())
        throw SingularDesignError("singular design: all-zero column(s) " + name_list(zero_cols), zero_cols);

    const double cond = symmetric_condition(gs.gram / static_cast<double>(gs.n));
    if (!(cond <= kMaxCondition)) {
        auto cols = detail::rank_deficient_columns(data.z);
        throw SingularDesignError("singular design (condition number of Z'Z/n above 1e12); "
                                  "suspect column(s) " + name_list(cols), std::move(cols));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(gs.gram);
    if (llt.info() != Eigen::Success)
        throw SingularDesignError("singular design: Cholesky factorization failed",
                                  detail::rank_deficient_columns(data.z));

    FitResult fit;
    fit.method = Method::Ols;
    fit.theta = llt.solve(gs.cross);
    detail::finish_fit(data, fit);
    return fit;
}

inline FitResult ols_fit(const TimeSeriesDataset& data) {
    return ols_fit(data, GramSystem::of(data));
}

inline FitResult adaptive_lasso_fit(const TimeSeriesDataset& data, const GramSystem& gs,
                                    const PenaltySpec& penalty, const Eigen::VectorXd& init,
                                    const SolverOptions& opts = {}) {
    penalty.validate();
    if (penalty.weights.size() != static_cast<Eigen::Index>(data.p()) ||
        init.size() != static_cast<Eigen::Index>(data.p()))
        throw ContractError("adaptive_lasso_fit: weights/init must have length p");

    const CdSolution sol = minimize_weighted_l1(gs.gram, gs.cross, penalty.coefficients(), init, opts);
    FitResult fit;
    fit.method = Method::AdaptiveLasso;
    fit.penalty = penalty;
    fit.theta = sol.theta;
    fit.solver_iters = sol.sweeps;
    fit.converged = sol.converged;
    if (!sol.converged)
        fit.warnings.push_back("coordinate descent did not converge within " +
                               std::to_string(opts.max_iter) + " sweeps");
    if (sol.monotone_violations > 0)
        fit.warnings.push_back("objective increased in " + std::to_string(sol.monotone_violations) +
                               " sweep(s)");
    detail::finish_fit(data, fit);
    return fit;
}

inline FitResult adaptive_lasso_fit(const TimeSeriesDataset& data, const PenaltySpec& penalty,
                                    const Eigen::VectorXd& init, const SolverOptions& opts = {}) {
    return adaptive_lasso_fit(data, GramSystem::of(data), penalty, init, opts);
}

/// The adaptive-lasso objective (1/n) sum (Y - Z theta)^2 + (lambda/n) sum w_i |theta_i|.
inline double adaptive_lasso_objective(const TimeSeriesDataset& data, const PenaltySpec& penalty,
                                       const Eigen::VectorXd& theta) {
    const double n = static_cast<double>(data.n());
    return ((data.y - data.z * theta).squaredNorm() +
            penalty.lambda * penalty.weights.dot(theta.cwiseAbs())) / n;
}

/// Largest KKT violation of a fit, measured on the (1/n)-scaled objective.
inline double kkt_violation(const TimeSeriesDataset& data, const FitResult& fit) {
    const double n = static_cast<double>(data.n());
    const Eigen::VectorXd grad = 2.0 * data.z.transpose() * (data.y - data.z * fit.theta) / n;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
        const double pen = fit.penalty ? fit.penalty->lambda * fit.penalty->weights(i) / n : 0.0;
        double v;
        if (fit.theta(i) != 0.0)
            v = std::abs(grad(i) - pen * (fit.theta(i) > 0.0 ? 1.0 : -1.0));
        else
            v = std::max(0.0, std::abs(grad(i)) - pen);
        worst = std::max(worst, v);
    }
    return worst;
}

/// n ln(RSS/n) + |active set| ln(n). A perfect fit returns -infinity.
inline double bic_score(const FitResult& fit, double n, std::vector<std::string>* warnings = nullptr) {
    if (fit.rss <= 0.0) {
        if (warnings) warnings->push_back("perfect fit (rss = 0): BIC is -infinity");
        return -std::numeric_limits<double>::infinity();
    }
    return n * std::log(fit.rss / n) + static_cast<double>(fit.active_set.size()) * std::log(n);
}

struct PathOptions {
    std::size_t grid_size = 100;
    SolverOptions solver;
};

/// Adaptive-lasso fits along an equally spaced lambda grid on [0, n^{1/4}].
struct BicPath {
    std::vector<double> grid;
    std::vector<FitResult> fits;
    std::vector<double> bic;
    std::size_t selected_index = 0;
    FitResult ols;
    PenaltySpec penalty;  // weights shared by all grid points; lambda of the selected point
    std::vector<std::string> warnings;

    const FitResult& selected() const { return fits.at(selected_index); }
    double selected_lambda() const { return grid.at(selected_index); }
};

inline std::vector<double> lambda_grid(std::size_t n, std::size_t grid_size) {
    if (grid_size < 2) throw ContractError("grid_size must be at least 2");
    const double upper = std::pow(static_cast<double>(n), 0.25);
    std::vector<double> grid(grid_size);
    const double steps = static_cast<double>(grid_size - 1);
    for (std::size_t k = 0; k < grid_size; ++k) grid[k] = upper * (static_cast<double>(k) / steps);
    grid.back() = upper;
    return grid;
}

/// Warm-started path with BIC selection; ties go to the smaller lambda.
inline BicPath fit_path(const TimeSeriesDataset& data, const PathOptions& opts = {}) {
    const GramSystem gs = GramSystem::of(data);
    BicPath path;
    path.grid = lambda_grid(data.n(), opts.grid_size);
    path.ols = ols_fit(data, gs);
    path.penalty = PenaltySpec::from_pilot(path.ols.theta, 0.0);

    Eigen::VectorXd init = path.ols.theta;
    const double n = static_cast<double>(data.n());
    path.fits.reserve(path.grid.size());
    path.bic.reserve(path.grid.size());
    for (double lambda : path.grid) {
        FitResult fit = adaptive_lasso_fit(data, gs, path.penalty.with_lambda(lambda), init, opts.solver);
        init = fit.theta;
        path.bic.push_back(bic_score(fit, n, &path.warnings));
        for (const auto& w : fit.warnings) path.warnings.push_back("lambda=" + std::to_string(lambda) + ": " + w);
        path.fits.push_back(std::move(fit));
    }
    for (std::size_t k = 1; k < path.bic.size(); ++k)
        if (path.bic[k] < path.bic[path.selected_index]) path.selected_index = k;
    path.penalty.lambda = path.grid[path.selected_index];
    return path;
}

}  // namespace alasso
