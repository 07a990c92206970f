#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include <wda/wda.hpp>

#include "oracles.hpp"

using namespace wda;

namespace {

const LabeledDataset& synthetic10() {
    static const LabeledDataset data = standardize(make_synthetic(10, {30, 40, 30}, 0));
    return data;
}

Projection line(double theta) { return Projection((Matrix(2, 1) << std::cos(theta), std::sin(theta)).finished()); }

}  // namespace

TEST(Objective, ZeroLambdaIsLdaRatio) {
    const LabeledDataset& data = synthetic10();
    const Scatter s = lda_scatter(data);
    WdaConfig cfg;
    cfg.lambda = 0;
    for (int seed = 0; seed < 5; ++seed) {
        const Projection p = Projection::random(10, 2, seed);
        EXPECT_NEAR(objective(p, data, cfg), oracle::trace_ratio(p.matrix(), s.Sb, s.Sw), 1e-10);
    }
}

TEST(Objective, IdenticalClassesFiniteNonnegative) {
    LabeledDataset data = make_synthetic(3, {10, 10, 10}, 1);
    data.classes.resize(2);
    data.classes[1].points = data.classes[0].points;
    data.classes[1].label = "copy";
    data = standardize(data);
    WdaConfig cfg;
    cfg.lambda = 1.0;
    const double f = objective(Projection::random(3, 1, 2), data, cfg);
    EXPECT_TRUE(std::isfinite(f));
    EXPECT_GE(f, 0.0);
}

TEST(Objective, RidgeLowersValue) {
    WdaConfig cfg;
    const Projection p = Projection::random(10, 2, 3);
    const double plain = objective(p, synthetic10(), cfg);
    cfg.ridge = 1.0;
    EXPECT_LT(objective(p, synthetic10(), cfg), plain);
}

TEST(Objective, MultimodalLandscape) {
    const LabeledDataset data = standardize(make_synthetic(2, {30, 40, 30}, 0, SyntheticLayout::Interleaved));
    WdaConfig cfg;
    cfg.lambda = 1.0;
    cfg.p = 1;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::vector<double> thetas(2000);
    for (double& t : thetas) t = angle(rng);
    std::sort(thetas.begin(), thetas.end());
    std::vector<double> f;
    for (double t : thetas) f.push_back(objective(line(t), data, cfg));
    // the line at theta and theta + pi is the same subspace, so the landscape is periodic
    int maxima = 0;
    const std::size_t n = f.size();
    for (std::size_t i = 0; i < n; ++i)
        if (f[i] > f[(i + n - 1) % n] && f[i] >= f[(i + 1) % n]) ++maxima;
    EXPECT_GE(maxima, 2);
}

TEST(Fit, ZeroLambdaMatchesLda) {
    WdaConfig cfg;
    cfg.lambda = 0;
    const FitResult r = fit(synthetic10(), cfg);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(subspace_distance(r.P, lda_fit(synthetic10(), 2)), 1e-8);
}

TEST(Fit, SmallLambdaNearLda) {
    WdaConfig cfg;
    cfg.lambda = 1e-8;
    const FitResult r = fit(synthetic10(), cfg);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(subspace_distance(r.P, lda_fit(synthetic10(), 2)), 1e-3);
}

TEST(Fit, ConvergesWithShrinkingSteps) {
    WdaConfig cfg;
    const FitResult r = fit(synthetic10(), cfg);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(r.trace.subspaceStep.back(), cfg.tol);
    EXPECT_LT(r.trace.subspaceStep.back(), r.trace.subspaceStep.front());
    EXPECT_EQ(r.trace.subspaceStep.size(), static_cast<std::size_t>(r.iterations));
    EXPECT_EQ(r.trace.objective.size(), static_cast<std::size_t>(r.iterations) + 1);
    EXPECT_EQ(r.trace.innerIterations.size(), static_cast<std::size_t>(r.iterations));
    EXPECT_EQ(r.trace.innerIterations.front().size(), 6u);
    EXPECT_EQ(r.trace.wallTime.size(), static_cast<std::size_t>(r.iterations));
    EXPECT_EQ(r.objective, r.trace.objective.back());
    EXPECT_EQ(r.trace.innerWarnings, 0);
    EXPECT_LT(r.P.orthonormality_error(), 1e-10);
}

TEST(Fit, WarmStartsCutInnerWork) {
    const FitResult r = fit(synthetic10(), WdaConfig{});
    ASSERT_GE(r.iterations, 3);
    int first = 0, last = 0;
    for (int k : r.trace.innerIterations.front()) first += k;
    for (int k : r.trace.innerIterations.back()) last += k;
    EXPECT_LT(last, first);
}

TEST(Fit, ConvergenceGridAndLambdaOrdering) {
    std::vector<int> totals;
    for (double lambda : {0.001, 0.01, 0.1}) {
        int total = 0;
        for (Eigen::Index p = 1; p <= 5; ++p) {
            WdaConfig cfg;
            cfg.lambda = lambda;
            cfg.p = p;
            const FitResult r = fit(synthetic10(), cfg);
            EXPECT_TRUE(r.converged) << "lambda " << lambda << " p " << p;
            total += r.iterations;
        }
        totals.push_back(total);
    }
    EXPECT_LE(totals[0], totals[1]);
    EXPECT_LT(totals[1], totals[2]);
}

TEST(Fit, Deterministic) {
    WdaConfig cfg;
    cfg.seed = 7;
    const FitResult a = fit(synthetic10(), cfg), b = fit(synthetic10(), cfg);
    EXPECT_EQ(a.trace.objective, b.trace.objective);
    EXPECT_EQ(a.trace.subspaceStep, b.trace.subspaceStep);
    EXPECT_EQ(a.trace.innerIterations, b.trace.innerIterations);
    EXPECT_EQ(a.P.matrix(), b.P.matrix());
    cfg.threads = 3;
    const FitResult c = fit(synthetic10(), cfg);
    EXPECT_EQ(a.trace.objective, c.trace.objective);
}

TEST(Fit, InitOptions) {
    for (InitKind k : {InitKind::Pca, InitKind::Lda}) {
        WdaConfig cfg;
        cfg.init = k;
        const FitResult r = fit(synthetic10(), cfg);
        EXPECT_TRUE(r.converged) << to_string(k);
        EXPECT_GT(r.objective, r.trace.objective.front() - 1e-6) << to_string(k);
    }
    WdaConfig cfg;
    cfg.init = InitKind::Lda;
    cfg.maxOuterIter = 1;
    cfg.lambda = 0;
    EXPECT_LT(subspace_distance(fit(synthetic10(), cfg).P, lda_fit(synthetic10(), 2)), 1e-8);
}

TEST(Fit, ExplicitStart) {
    const Projection p0 = Projection::random(10, 2, 99);
    WdaConfig cfg;
    cfg.maxOuterIter = 1;
    cfg.evaluateFinal = false;
    const FitResult r = fit(synthetic10(), cfg, p0);
    EXPECT_EQ(r.trace.objective.size(), 1u);
    EXPECT_DOUBLE_EQ(r.trace.objective.front(), objective(p0, synthetic10(), cfg));
    EXPECT_TRUE(std::isnan(r.objective));
    EXPECT_THROW(fit(synthetic10(), cfg, Projection::random(9, 2, 1)), DimensionError);
    EXPECT_THROW(fit(synthetic10(), cfg, Projection::random(10, 3, 1)), DimensionError);
}

TEST(Fit, IterationCapReported) {
    WdaConfig cfg;
    cfg.maxOuterIter = 1;
    const FitResult r = fit(synthetic10(), cfg);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 1);
}

TEST(Fit, Rejects) {
    LabeledDataset one = synthetic10();
    one.classes.resize(1);
    EXPECT_THROW(fit(one, WdaConfig{}), DomainError);
    WdaConfig cfg;
    cfg.p = 11;
    EXPECT_THROW(fit(synthetic10(), cfg), DimensionError);
    cfg = {};
    cfg.lambda = -1;
    EXPECT_THROW(fit(synthetic10(), cfg), ParameterError);
    cfg = {};
    cfg.tol = 0;
    EXPECT_THROW(fit(synthetic10(), cfg), ParameterError);
    cfg = {};
    cfg.maxOuterIter = 0;
    EXPECT_THROW(fit(synthetic10(), cfg), ParameterError);
    cfg = {};
    cfg.ridge = -1;
    EXPECT_THROW(fit(synthetic10(), cfg), ParameterError);
}

TEST(Lda, TwoClassFisherDirection) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    LabeledDataset data;
    for (int c = 0; c < 2; ++c) {
        Matrix x(2, 200);
        for (Eigen::Index i = 0; i < 200; ++i) {
            x(0, i) = 2.0 * g(rng);
            x(1, i) = 5.0 * c + 0.2 * g(rng);
        }
        data.classes.push_back({std::to_string(c), std::move(x)});
    }
    const Projection p = lda_fit(data, 1);
    const Matrix& a = data.classes[0].points;
    const Matrix& b = data.classes[1].points;
    const Vector ma = a.rowwise().mean(), mb = b.rowwise().mean();
    const Matrix ca = a.colwise() - ma, cb = b.colwise() - mb;
    const Vector fisher = (ca * ca.transpose() + cb * cb.transpose()).ldlt().solve(mb - ma);
    EXPECT_LT(oracle::principal_angle(p.matrix(), fisher.normalized()), 1e-6);
    EXPECT_LT(oracle::principal_angle(p.matrix(), (mb - ma).normalized()), 0.1);
}

TEST(Lda, SingleClassRejected) {
    LabeledDataset one = synthetic10();
    one.classes.resize(1);
    EXPECT_THROW(lda_fit(one, 2), DomainError);
    EXPECT_THROW(lda_fit(synthetic10(), 0), DimensionError);
    EXPECT_THROW(lda_fit(synthetic10(), 11), DimensionError);
}

TEST(Lda, BeatsRandomSampling) {
    const Scatter s = lda_scatter(synthetic10());
    const Projection p = lda_fit(synthetic10(), 2);
    EXPECT_GE(oracle::trace_ratio(p.matrix(), s.Sb, s.Sw), oracle::sampled_max_trace_ratio(s.Sb, s.Sw, 2, 2000, 6) - 1e-8);
}

TEST(Pca, LeadingDirections) {
    LabeledDataset data;
    Matrix x(3, 4);
    x << 10, -10, 0, 0, 0, 0, 1, -1, 0, 0, 0, 0;
    data.classes.push_back({"a", x});
    EXPECT_TRUE(pca_fit(data, 2).matrix().cwiseAbs().isApprox(Matrix::Identity(3, 2)));
}

TEST(Transform, IdentityColumnsSelectRows) {
    const Matrix x = Matrix::Random(4, 6);
    EXPECT_EQ(transform(Projection::identity_columns(4, 2), x), x.topRows(2));
    EXPECT_TRUE(transform(Projection::random(4, 2, 1), Matrix::Zero(4, 3)).isZero());
}

TEST(Transform, NonExpansive) {
    const Matrix x = Matrix::Random(7, 50);
    const Matrix y = transform(Projection::random(7, 3, 2), x);
    ASSERT_EQ(y.rows(), 3);
    for (Eigen::Index i = 0; i < 50; ++i) EXPECT_LE(y.col(i).norm(), x.col(i).norm() * (1 + 1e-14));
    EXPECT_THROW(transform(Projection::random(6, 3, 2), x), DimensionError);
}
