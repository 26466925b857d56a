#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "alasso/inference.hpp"
#include "alasso/normal.hpp"
#include "oracles.hpp"

using namespace alasso;

namespace {

struct Fitted {
    TimeSeriesDataset data;
    FitResult ols;
    FitResult al;
    PenaltySpec penalty;
};

Fitted fitted(std::uint64_t seed, double lambda, std::size_t n = 400, std::size_t p = 6,
              bool heteroskedastic = true) {
    std::mt19937_64 gen(seed);
    Fitted f{oracle::random_dataset(gen, n, p, 1.0, 0.5), {}, {}, {}};
    if (heteroskedastic) {
        // Scale the noise with the first regressor.
        const FitResult tmp = ols_fit(f.data);
        for (Eigen::Index i = 0; i < f.data.y.size(); ++i)
            f.data.y(i) += tmp.residuals(i) * std::abs(f.data.z(i, 0));
    }
    f.ols = ols_fit(f.data);
    f.penalty = PenaltySpec::from_pilot(f.ols.theta, lambda);
    f.al = adaptive_lasso_fit(f.data, f.penalty, f.ols.theta);
    return f;
}

}  // namespace

TEST(Normal, QuantileKnownValues) {
    EXPECT_NEAR(normal_quantile(0.975), oracle::kZ975, 1e-13);
    EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
    EXPECT_NEAR(normal_quantile(0.95), 1.6448536269514722, 1e-13);
    EXPECT_NEAR(normal_quantile(0.995), 2.5758293035489004, 1e-13);
    EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-9);
    EXPECT_EQ(normal_quantile(0.0), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(normal_quantile(1.0), std::numeric_limits<double>::infinity());
    EXPECT_THROW(normal_quantile(1.5), ContractError);
    EXPECT_NEAR(two_sided_z(0.05), oracle::kZ975, 1e-13);
}

TEST(Normal, CdfInvertsQuantile) {
    for (double p = 0.001; p < 1.0; p += 0.0137) EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-14);
}

TEST(Moments, RobustMatchesLoopOracle) {
    const auto f = fitted(1, 0.0);
    const auto m = estimate_moments(f.data, f.ols.residuals);
    const auto ref = oracle::moments(f.data.z, f.ols.residuals);
    EXPECT_LT((m.c_hat - ref.c).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((m.omega_hat - ref.omega).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((m.v_hat - ref.v).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(m.n, f.data.n());
}

TEST(Moments, ClassicalMatchesLoopOracle) {
    const auto f = fitted(2, 0.0);
    const auto m = estimate_moments(f.data, f.ols.residuals, {}, CovarianceKind::Classical);
    const auto ref = oracle::moments(f.data.z, f.ols.residuals, false);
    EXPECT_LT((m.v_hat - ref.v).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Moments, SubsetUsesSelectedColumnsOnly) {
    const auto f = fitted(3, 2.0);
    const std::vector<std::size_t> idx{4, 1};
    const auto m = estimate_moments(f.data, f.al.residuals, idx);
    Eigen::MatrixXd zs(f.data.z.rows(), 2);
    zs.col(0) = f.data.z.col(4);
    zs.col(1) = f.data.z.col(1);
    const auto ref = oracle::moments(zs, f.al.residuals);
    EXPECT_LT((m.v_hat - ref.v).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(m.position(1), std::optional<std::size_t>(1));
    EXPECT_EQ(m.position(0), std::nullopt);
}

TEST(Moments, ResidualLengthMismatchThrows) {
    const auto f = fitted(4, 0.0);
    EXPECT_THROW(estimate_moments(f.data, Eigen::VectorXd::Zero(3)), ContractError);
}

TEST(BiasCorrection, RecomputationAgreesTo1e10) {
    for (std::uint64_t seed = 10; seed < 30; ++seed) {
        const auto f = fitted(seed, 1.0 + static_cast<double>(seed % 5));
        const auto bc = bias_correction(f.al, f.data, f.penalty);
        const auto& a = f.al.active_set;
        const auto q = static_cast<Eigen::Index>(a.size());
        if (q == 0) continue;
        const double n = static_cast<double>(f.data.n());
        Eigen::MatrixXd ca = Eigen::MatrixXd::Zero(q, q);
        for (Eigen::Index t = 0; t < f.data.z.rows(); ++t)
            for (Eigen::Index r = 0; r < q; ++r)
                for (Eigen::Index s = 0; s < q; ++s)
                    ca(r, s) += f.data.z(t, static_cast<Eigen::Index>(a[r])) * f.data.z(t, static_cast<Eigen::Index>(a[s])) / n;
        Eigen::VectorXd rhs(q);
        for (Eigen::Index r = 0; r < q; ++r) {
            const auto j = static_cast<Eigen::Index>(a[r]);
            const double sgn = f.al.theta(j) > 0 ? 1.0 : -1.0;
            rhs(r) = f.penalty.lambda / (2.0 * std::sqrt(n)) * (1.0 / std::abs(f.ols.theta(j))) * sgn;
        }
        const Eigen::VectorXd ref = ca.fullPivLu().solve(rhs);
        EXPECT_LE((bc.b_hat - ref).cwiseAbs().maxCoeff(), 1e-10) << "seed " << seed;
    }
}

TEST(BiasCorrection, ZeroLambdaGivesZeroBias) {
    const auto f = fitted(5, 0.0);
    const auto bc = bias_correction(f.al, f.data, f.penalty);
    EXPECT_TRUE(bc.b_hat.isZero(0.0));
}

TEST(BiasCorrection, RequiresAdaptiveLassoFit) {
    const auto f = fitted(5, 1.0);
    EXPECT_THROW(bias_correction(f.ols, f.data, f.penalty), ContractError);
}

TEST(ConfidenceInterval, CenterAndWidthFollowDefinition) {
    const auto f = fitted(6, 2.5);
    const auto act = estimate_moments(f.data, f.al.residuals, f.al.active_set);
    const auto bc = bias_correction(f.al, f.data, f.penalty);
    const auto ref = oracle::moments(detail::select_columns(f.data.z, f.al.active_set), f.al.residuals);
    const double n = static_cast<double>(f.data.n());
    for (std::size_t k = 0; k < f.al.active_set.size(); ++k) {
        const auto j = f.al.active_set[k];
        const auto kk = static_cast<Eigen::Index>(k);
        const double se = std::sqrt(ref.v(kk, kk) / n);
        const auto plain = confidence_interval(f.al, act, nullptr, 0.05, j);
        const auto corr = confidence_interval(f.al, act, &bc, 0.05, j);
        const double th = f.al.theta(static_cast<Eigen::Index>(j));
        EXPECT_NEAR(plain.lower, th - oracle::kZ975 * se, 1e-12);
        EXPECT_NEAR(plain.upper, th + oracle::kZ975 * se, 1e-12);
        const double center = th + bc.b_hat(kk) / std::sqrt(n);
        EXPECT_NEAR(corr.center, center, 1e-12);
        EXPECT_NEAR(corr.upper - corr.lower, plain.upper - plain.lower, 1e-12);
        EXPECT_TRUE(corr.bias_corrected);
    }
}

TEST(ConfidenceInterval, BiasShiftsAwayFromZero) {
    const auto f = fitted(7, 3.0, 400, 4, false);
    const auto act = estimate_moments(f.data, f.al.residuals, f.al.active_set);
    const auto bc = bias_correction(f.al, f.data, f.penalty);
    if (f.al.active_set.size() == 1) {
        const auto j = f.al.active_set[0];
        const auto ci = confidence_interval(f.al, act, &bc, 0.05, j);
        EXPECT_GT(std::abs(ci.center), std::abs(ci.estimate));
    }
}

TEST(ConfidenceInterval, InactiveColumnIsRejected) {
    const auto f = fitted(8, 1e6);
    ASSERT_TRUE(f.al.active_set.empty());
    const auto m = estimate_moments(f.data, f.ols.residuals);
    EXPECT_THROW(confidence_interval(f.al, m, nullptr, 0.05, 0), ContractError);
}

TEST(ZeroTestSuite, StatisticAndCriticalValue) {
    const auto f = fitted(9, 2.0);
    const auto full = estimate_moments(f.data, f.ols.residuals);
    const auto ref = oracle::moments(f.data.z, f.ols.residuals);
    const double n = static_cast<double>(f.data.n());
    for (std::size_t j = 0; j < f.data.p(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        for (double theta0 : {0.0, 0.25, -0.4}) {
            const auto t = test_zero(f.al, full, theta0, j, 0.05);
            const double stat = std::sqrt(n) * std::abs(f.al.theta(jj) - theta0);
            const double crit = oracle::kZ975 * std::sqrt(ref.v(jj, jj));
            EXPECT_NEAR(t.statistic, stat, 1e-12);
            EXPECT_NEAR(t.critical_value, crit, 1e-10);
            EXPECT_EQ(t.reject, stat > crit);
        }
        // theta_i = 0 exactly is never rejected at theta0 = 0.
        if (f.al.theta(jj) == 0.0) {
            EXPECT_FALSE(test_zero(f.al, full, 0.0, j, 0.05).reject);
        }
    }
}

TEST(ZeroTestSuite, DecisionsInvariantUnderResponseScaling) {
    // y -> c y with lambda -> c^2 lambda maps the fit to c * theta.
    for (std::uint64_t seed = 40; seed < 50; ++seed) {
        const auto f = fitted(seed, 2.0);
        for (double c : {0.01, 3.0, 250.0}) {
            TimeSeriesDataset d = f.data;
            d.y *= c;
            const FitResult o = ols_fit(d);
            const auto pen = PenaltySpec::from_pilot(o.theta, 2.0 * c * c);
            const FitResult a = adaptive_lasso_fit(d, pen, o.theta);
            EXPECT_EQ(a.active_set, f.al.active_set);
            const auto full0 = estimate_moments(f.data, f.ols.residuals);
            const auto full1 = estimate_moments(d, o.residuals);
            for (std::size_t j = 0; j < d.p(); ++j)
                EXPECT_EQ(test_zero(a, full1, 0.0, j, 0.05).reject, test_zero(f.al, full0, 0.0, j, 0.05).reject);
        }
    }
}

TEST(ZeroTestSuite, OutOfRangeColumnThrows) {
    const auto f = fitted(9, 2.0);
    const auto full = estimate_moments(f.data, f.ols.residuals);
    EXPECT_THROW(test_zero(f.al, full, 0.0, 99, 0.05), ContractError);
}

namespace {

LimitDistSpec scalar_spec(double lambda0, std::size_t draws = 100000, std::uint64_t seed = 42) {
    LimitDistSpec s;
    s.c = Eigen::MatrixXd::Ones(1, 1);
    s.omega = Eigen::MatrixXd::Ones(1, 1);
    s.lambda0 = Eigen::VectorXd::Constant(1, lambda0);
    s.draws = draws;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(LimitQuantiles, ZeroPenaltyGivesNormalQuantile) {
    const double q = limit_quantiles(scalar_spec(0.0), 0.05)(0);
    EXPECT_NEAR(q, 1.96, 0.02);
}

TEST(LimitQuantiles, ScalarCurveMatchesClosedForm) {
    // |argmin| = max(|W| - lambda0/2, 0), so the quantile is max(z - lambda0/2, 0).
    double worst = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 80; ++k) {
        const double l0 = 0.05 * k;
        const double q = limit_quantiles(scalar_spec(l0), 0.05)(0);
        worst = std::max(worst, std::abs(q - std::max(oracle::kZ975 - l0 / 2.0, 0.0)));
        EXPECT_LE(q, prev);
        prev = q;
    }
    EXPECT_LT(worst, 0.05);
}

TEST(LimitQuantiles, DiagonalSystemMatchesScalarSoftThreshold) {
    LimitDistSpec s;
    s.c = Eigen::Vector3d(1.0, 2.0, 0.5).asDiagonal();
    s.omega = Eigen::Vector3d(1.0, 3.0, 0.25).asDiagonal();
    s.lambda0 = Eigen::Vector3d(0.5, 1.0, 2.0);
    s.draws = 2000;
    s.seed = 9;
    const auto draws = limit_draws(s);
    for (std::size_t d = 0; d < s.draws; ++d) {
        Rng rng = Rng::substream(s.seed, d);
        for (Eigen::Index i = 0; i < 3; ++i) {
            const double w = std::sqrt(s.omega(i, i)) * rng.normal();
            const double ref = std::abs(oracle::scalar_argmin(s.c(i, i), w, s.lambda0(i)));
            EXPECT_NEAR(draws[d * 3 + static_cast<std::size_t>(i)], ref, 1e-9);
        }
    }
}

TEST(LimitQuantiles, WorkerCountInvariant) {
    LimitDistSpec s;
    s.c = Eigen::Matrix2d{{1.0, 0.3}, {0.3, 1.0}};
    s.omega = Eigen::Matrix2d{{1.0, 0.2}, {0.2, 2.0}};
    s.lambda0 = Eigen::Vector2d(0.4, 1.2);
    s.draws = 4000;
    s.seed = 3;
    EXPECT_EQ(limit_draws(s, 1), limit_draws(s, 4));
}

TEST(LimitQuantiles, SingularOmegaUsesFallbackFactor) {
    LimitDistSpec s;
    s.c = Eigen::Matrix2d::Identity();
    s.omega = Eigen::Matrix2d{{1.0, 1.0}, {1.0, 1.0}};
    s.lambda0 = Eigen::Vector2d(0.0, 0.0);
    s.draws = 1000;
    const auto d = limit_draws(s);
    for (std::size_t k = 0; k < s.draws; ++k) EXPECT_NEAR(d[2 * k], d[2 * k + 1], 1e-9);
}

TEST(LimitQuantiles, ValidatesSpec) {
    auto s = scalar_spec(1.0);
    s.draws = 10;
    EXPECT_THROW(s.validate(), ContractError);
    s = scalar_spec(-1.0);
    EXPECT_THROW(s.validate(), ContractError);
    s = scalar_spec(1.0);
    s.c(0, 0) = -1.0;
    EXPECT_THROW(s.validate(), ContractError);
    EXPECT_THROW(limit_quantiles(scalar_spec(1.0), 1.5), ContractError);
}

TEST(LimitQuantiles, EmpiricalQuantileIsInverseEcdf) {
    std::vector<double> v{5, 1, 4, 2, 3};
    EXPECT_EQ(empirical_quantile(v, 0.6), 3.0);
    EXPECT_EQ(empirical_quantile(v, 0.61), 4.0);
    EXPECT_EQ(empirical_quantile(v, 1.0), 5.0);
    EXPECT_EQ(empirical_quantile(v, 0.0), 1.0);
}

TEST(LimitQuantiles, ImpliedLambda0) {
    PenaltySpec p;
    p.lambda = 2.0;
    p.weights = Eigen::Vector2d(4.0, 0.5);
    const auto l0 = implied_lambda0(p, 100);
    EXPECT_DOUBLE_EQ(l0(0), 0.8);
    EXPECT_DOUBLE_EQ(l0(1), 0.1);
}
