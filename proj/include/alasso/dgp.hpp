#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "alasso/dataset.hpp"
#include "alasso/error.hpp"
#include "alasso/rng.hpp"

namespace alasso {

struct GaussianErrors {};

struct StudentTErrors {
    double nu = 5.0;
};

/// eps_t = sqrt(h_t) e_t,  h_t = omega + beta h_{t-1} + alpha h_{t-1} e_{t-1}^2.
/// Innovations e_t are standard normal, or raw Student-t when `innovation_nu` is set.
struct GarchErrors {
    double omega = 0.1;
    double beta = 0.7;
    double alpha = 0.1;
    std::optional<double> innovation_nu;

    double innovation_second_moment() const noexcept {
        return innovation_nu ? *innovation_nu / (*innovation_nu - 2.0) : 1.0;
    }
    double persistence() const noexcept { return beta + alpha * innovation_second_moment(); }
    double unconditional_h() const noexcept { return omega / (1.0 - persistence()); }
    double unconditional_variance() const noexcept {
        return unconditional_h() * innovation_second_moment();
    }
};

using ErrorKind = std::variant<GaussianErrors, StudentTErrors, GarchErrors>;

struct GarchState {
    double h = 1.0;
    double e_prev = 0.0;

    /// Advance one period with the new innovation e; returns eps_t.
    double step(const GarchErrors& g, double e) noexcept {
        h = g.omega + g.beta * h + g.alpha * h * e_prev * e_prev;
        e_prev = e;
        return std::sqrt(h) * e;
    }
};

/// Student-t draw: Z / sqrt(chi2_nu / nu). Not rescaled to unit variance.
inline double student_t_draw(Rng& rng, double nu) {
    if (!(nu > 2.0)) throw ContractError("student_t_draw requires nu > 2");
    const double z = rng.normal();
    return z / std::sqrt(rng.chi_squared(nu) / nu);
}

/// L z with L the lower Cholesky factor of `corr_factor`'s source matrix.
inline Eigen::VectorXd correlated_normals(Rng& rng, const Eigen::LLT<Eigen::MatrixXd>& corr_factor) {
    Eigen::VectorXd z(corr_factor.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return corr_factor.matrixL() * z;
}

inline Eigen::VectorXd correlated_normals(Rng& rng, const Eigen::MatrixXd& corr) {
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success) throw ContractError("correlation matrix is not positive definite");
    return correlated_normals(rng, llt);
}

inline constexpr std::string_view kBlockCorrelationVersion = "block-v1";

/// 20x20 covariate correlation for setting 5: five blocks of four. Block 1 has
/// pairwise correlation 0.9, block 2 has 0.5, block 3 is a 0.5 block with the
/// last two members sign-flipped (pairs at +0.5 and -0.5), blocks 4-5 are
/// uncorrelated.
inline Eigen::MatrixXd block_correlation_v1() {
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(20, 20);
    auto fill = [&](int start, double rho, bool flip) {
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                if (a == b) continue;
                const double sa = flip && a >= 2 ? -1.0 : 1.0;
                const double sb = flip && b >= 2 ? -1.0 : 1.0;
                r(start + a, start + b) = sa * sb * rho;
            }
        }
    };
    fill(0, 0.9, false);
    fill(4, 0.5, false);
    fill(8, 0.5, true);
    return r;
}

struct DgpConfig {
    std::string name;  // preset name or "custom"
    ModelSpec model;
    Eigen::VectorXd theta_true;
    ErrorKind errors = GaussianErrors{};
    std::optional<Eigen::MatrixXd> covariate_corr;  // p2 x p2, applies to W
    std::string corr_fixture;                       // version tag when taken from a fixture
    std::size_t n = 800;
    std::size_t burn_in = 500;
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;

    void validate() const {
        model.validate();
        const std::size_t p = model.dim();
        if (theta_true.size() != static_cast<Eigen::Index>(p))
            throw ContractError("theta_true must have length p = " + std::to_string(p));
        if (n <= p) throw ContractError("n must exceed p");

        if (model.ar_lags > 0) {
            const auto p1 = static_cast<Eigen::Index>(model.ar_lags);
            Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(p1, p1);
            companion.row(0) = theta_true.head(p1).transpose();
            if (p1 > 1) companion.bottomLeftCorner(p1 - 1, p1 - 1).setIdentity();
            const double radius = Eigen::EigenSolver<Eigen::MatrixXd>(companion, false)
                                      .eigenvalues().cwiseAbs().maxCoeff();
            if (!(radius < 1.0))
                throw ContractError("AR polynomial is not stationary (companion spectral radius " +
                                    std::to_string(radius) + ")");
        }
        if (covariate_corr) {
            const auto& r = *covariate_corr;
            const auto p2 = static_cast<Eigen::Index>(model.contemporaneous);
            if (r.rows() != p2 || r.cols() != p2)
                throw ContractError("covariate_corr must be p2 x p2");
            if ((r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12)
                throw ContractError("covariate_corr must be symmetric");
            if (Eigen::LLT<Eigen::MatrixXd>(r).info() != Eigen::Success)
                throw ContractError("covariate_corr must be positive definite");
        }
        if (const auto* t = std::get_if<StudentTErrors>(&errors); t && !(t->nu > 2.0))
            throw ContractError("Student-t errors require nu > 2");
        if (const auto* g = std::get_if<GarchErrors>(&errors)) {
            if (!(g->omega > 0.0) || !(g->beta >= 0.0) || !(g->alpha >= 0.0))
                throw ContractError("GARCH requires omega > 0 and alpha, beta >= 0");
            if (g->innovation_nu && !(*g->innovation_nu > 2.0))
                throw ContractError("GARCH Student-t innovations require nu > 2");
            if (!(g->persistence() < 1.0))
                throw ContractError("GARCH is not covariance stationary (beta + alpha E[e^2] >= 1)");
        }
    }
};

/// Raw columns y, w1..w{p2}, x1..x{p3}; n + max(p1, 1) rows after burn-in.
inline RawSeriesTable simulate_raw(const DgpConfig& cfg) {
    cfg.validate();
    const std::size_t p1 = cfg.model.ar_lags, p2 = cfg.model.contemporaneous, p3 = cfg.model.lagged;
    const std::size_t keep = cfg.n + cfg.model.lag_trim();
    const std::size_t total = cfg.burn_in + keep;

    Rng rng = Rng::substream(cfg.seed, cfg.replication);
    std::optional<Eigen::LLT<Eigen::MatrixXd>> corr;
    if (cfg.covariate_corr) corr.emplace(*cfg.covariate_corr);

    const Eigen::VectorXd rho = cfg.theta_true.head(static_cast<Eigen::Index>(p1));
    const Eigen::VectorXd gamma = cfg.theta_true.segment(static_cast<Eigen::Index>(p1), static_cast<Eigen::Index>(p2));
    const Eigen::VectorXd beta = cfg.theta_true.tail(static_cast<Eigen::Index>(p3));

    std::vector<double> y(total, 0.0);
    Eigen::MatrixXd w(static_cast<Eigen::Index>(p2), static_cast<Eigen::Index>(total));
    Eigen::MatrixXd x(static_cast<Eigen::Index>(p3), static_cast<Eigen::Index>(total));

    GarchState garch;
    if (const auto* g = std::get_if<GarchErrors>(&cfg.errors)) garch.h = g->unconditional_h();

    for (std::size_t s = 0; s < total; ++s) {
        const auto col = static_cast<Eigen::Index>(s);
        if (corr) {
            w.col(col) = correlated_normals(rng, *corr);
        } else {
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, col) = rng.normal();
        }
        for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, col) = rng.normal();

        const double eps = std::visit(
            [&](const auto& kind) -> double {
                using K = std::decay_t<decltype(kind)>;
                if constexpr (std::is_same_v<K, GaussianErrors>) {
                    return rng.normal();
                } else if constexpr (std::is_same_v<K, StudentTErrors>) {
                    return student_t_draw(rng, kind.nu);
                } else {
                    const double e = kind.innovation_nu ? student_t_draw(rng, *kind.innovation_nu)
                                                        : rng.normal();
                    return garch.step(kind, e);
                }
            },
            cfg.errors);

        double v = eps;
        for (std::size_t i = 1; i <= p1 && i <= s; ++i) v += rho(static_cast<Eigen::Index>(i - 1)) * y[s - i];
        if (p2 > 0) v += gamma.dot(w.col(col));
        if (p3 > 0 && s > 0) v += beta.dot(x.col(col - 1));
        y[s] = v;
    }

    RawSeriesTable raw;
    const std::size_t start = cfg.burn_in;
    raw.names.push_back("y");
    raw.columns.emplace_back(y.begin() + static_cast<std::ptrdiff_t>(start), y.end());
    for (std::size_t i = 0; i < p2; ++i) {
        raw.names.push_back("w" + std::to_string(i + 1));
        std::vector<double> c(keep);
        for (std::size_t s = 0; s < keep; ++s) c[s] = w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(start + s));
        raw.columns.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < p3; ++i) {
        raw.names.push_back("x" + std::to_string(i + 1));
        std::vector<double> c(keep);
        for (std::size_t s = 0; s < keep; ++s) c[s] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(start + s));
        raw.columns.push_back(std::move(c));
    }
    return raw;
}

inline TimeSeriesDataset simulate(const DgpConfig& cfg) {
    ModelSpec spec = cfg.model;
    spec.variable_names.clear();
    return build_design(simulate_raw(cfg), spec,
                        cfg.name + ":seed=" + std::to_string(cfg.seed) +
                            ":rep=" + std::to_string(cfg.replication));
}

/// rho1.., gamma1.., beta1.. in design column order.
inline std::vector<std::string> coefficient_labels(const ModelSpec& m) {
    std::vector<std::string> out;
    for (std::size_t i = 1; i <= m.ar_lags; ++i) out.push_back("rho" + std::to_string(i));
    for (std::size_t i = 1; i <= m.contemporaneous; ++i) out.push_back("gamma" + std::to_string(i));
    for (std::size_t i = 1; i <= m.lagged; ++i) out.push_back("beta" + std::to_string(i));
    return out;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"setting1", "setting2", "setting3", "setting4", "setting5"};
    return names;
}

/// The five simulation designs. Settings 1-3 share p1 = p2 = p3 = 5 with
/// (0.3, 0.1, 0, 0, 0) in each block; settings 4-5 use one AR lag at 0.9 and
/// twenty W columns with (0.6, 0.5, ..., 0.1, 0, ..., 0).
inline DgpConfig preset(std::string_view name, std::size_t n, std::uint64_t seed) {
    DgpConfig cfg;
    cfg.name = std::string(name);
    cfg.n = n;
    cfg.seed = seed;
    const GarchErrors garch{0.1, 0.7, 0.1, 5.0};
    if (name == "setting1" || name == "setting2" || name == "setting3") {
        cfg.model.ar_lags = cfg.model.contemporaneous = cfg.model.lagged = 5;
        cfg.theta_true = Eigen::VectorXd::Zero(15);
        for (int block = 0; block < 3; ++block) {
            cfg.theta_true(5 * block) = 0.3;
            cfg.theta_true(5 * block + 1) = 0.1;
        }
        if (name == "setting1") cfg.errors = GaussianErrors{};
        if (name == "setting2") cfg.errors = StudentTErrors{5.0};
        if (name == "setting3") cfg.errors = garch;
    } else if (name == "setting4" || name == "setting5") {
        cfg.model.ar_lags = 1;
        cfg.model.contemporaneous = 20;
        cfg.model.lagged = 0;
        cfg.theta_true = Eigen::VectorXd::Zero(21);
        cfg.theta_true(0) = 0.9;
        constexpr double gammas[] = {0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
        for (int i = 0; i < 6; ++i) cfg.theta_true(1 + i) = gammas[i];
        if (name == "setting4") {
            cfg.errors = GaussianErrors{};
        } else {
            cfg.errors = garch;
            cfg.covariate_corr = block_correlation_v1();
            cfg.corr_fixture = std::string(kBlockCorrelationVersion);
        }
    } else {
        throw ContractError("unknown preset '" + std::string(name) + "' (expected setting1..setting5)");
    }
    cfg.validate();
    return cfg;
}

}  // namespace alasso
