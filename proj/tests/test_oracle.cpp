#include "cosim/oracle.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cosim;
using namespace cosim::oracle;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }
Vec v2(double x, double y) {
    Vec v(2);
    v << x, y;
    return v;
}

Vec fd_grad_logp(const GaussianMixture& g, const Vec& x, double h = 1e-5) {
    Vec out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec up = x, dn = x;
        up(i) += h;
        dn(i) -= h;
        out(i) = (g.log_density(up) - g.log_density(dn)) / (2 * h);
    }
    return out;
}

}  // namespace

TEST(GmmScore, StandardNormalIsMinusX) {
    auto g = gaussian(2, 1.0);
    Vec x = v2(0.3, -1.7);
    EXPECT_TRUE(g.score(x).isApprox(-x, 1e-14));
}

TEST(GmmScore, SymmetricPairHasZeroScoreAtOrigin) {
    auto g = GaussianMixture::diagonal({0.5, 0.5}, {v2(1.5, -0.5), v2(-1.5, 0.5)}, {v2(0.3, 0.3), v2(0.3, 0.3)});
    EXPECT_LT(g.score(v2(0, 0)).norm(), 1e-14);
}

TEST(GmmScore, MatchesFiniteDifferenceOfLogDensity) {
    auto g = ring(8, 1.0, 0.1);
    Rng rng(1);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        Vec x = 1.5 * v2(standard_normal(rng), standard_normal(rng));
        Vec a = g.score(x), f = fd_grad_logp(g, x);
        worst = std::max(worst, (a - f).norm() / std::max(f.norm(), 1e-3));
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(GmmScore, BatchScoreMatchesPointwise) {
    auto g = two_moons();
    Rng rng(2);
    Points x = g.sample(50, rng);
    Points s = g.score(x);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        EXPECT_TRUE(s.row(i).transpose().isApprox(g.score(Vec(x.row(i).transpose())), 1e-14));
}

TEST(Gmm, WeightsNormalizedAndMomentsConsistent) {
    auto g = GaussianMixture::diagonal({2.0, 6.0}, {v1(-1.0), v1(3.0)}, {v1(0.5), v1(2.0)});
    EXPECT_NEAR(g.components()[0].weight, 0.25, 1e-15);
    EXPECT_NEAR(g.mean()(0), 0.25 * -1.0 + 0.75 * 3.0, 1e-14);
    // Law of total variance.
    const double m = g.mean()(0);
    const double var = 0.25 * (0.5 + 1.0) + 0.75 * (2.0 + 9.0) - m * m;
    EXPECT_NEAR(g.covariance()(0, 0), var, 1e-12);
}

TEST(Gmm, DensityIntegratesToOne) {
    auto g = GaussianMixture::diagonal({0.3, 0.7}, {v1(-2.0), v1(1.0)}, {v1(0.2), v1(1.5)});
    double total = 0.0;
    const double h = 1e-3;
    for (double x = -15.0; x <= 15.0; x += h) total += std::exp(g.log_density(v1(x))) * h;
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Gmm, InvalidComponentsRejected) {
    EXPECT_THROW(GaussianMixture::diagonal({1.0}, {v1(0)}, {v1(-1.0)}), ValidationError);
    EXPECT_THROW(GaussianMixture::diagonal({-1.0}, {v1(0)}, {v1(1.0)}), ValidationError);
    EXPECT_THROW(GaussianMixture(std::vector<Component>{}), ValidationError);
}

TEST(PerturbGmm, TimeZeroIsIdentity) {
    auto g = ring();
    auto p = perturb_gmm(g, SdeScheme::ve(), 0.0);
    for (std::size_t k = 0; k < g.components().size(); ++k) {
        EXPECT_TRUE(p.components()[k].mean.isApprox(g.components()[k].mean));
        EXPECT_TRUE(p.components()[k].cov.isApprox(g.components()[k].cov));
    }
}

TEST(PerturbGmm, VpUnitGaussianIsStationary) {
    auto g = gaussian(1, 1.0);
    for (double t : {0.01, 0.5, 4.0}) {
        auto p = perturb_gmm(g, SdeScheme::vp(), t);
        EXPECT_NEAR(p.components()[0].mean(0), 0.0, 1e-15);
        EXPECT_NEAR(p.components()[0].cov(0, 0), 1.0, 1e-14);
    }
}

TEST(PerturbGmm, RingAtTmaxMatchesMonteCarloMoments) {
    auto g = ring();
    const auto ve = SdeScheme::ve();
    auto p = perturb_gmm(g, ve, 80.0);
    Rng rng(3);
    const Eigen::Index n = 200000;
    Points x0 = g.sample(n, rng);
    Points xt = perturb(x0, 80.0, standard_normal_points(rng, n, 2), ve);
    const double analytic = 80.0 * 80.0 + 0.5 + 0.01;  // per-coordinate variance
    EXPECT_NEAR(p.covariance()(0, 0), analytic, 1e-9);
    for (int j = 0; j < 2; ++j) {
        const double var = (xt.col(j).array() - xt.col(j).mean()).square().mean();
        EXPECT_NEAR(var / analytic, 1.0, 0.02);
    }
}

TEST(AffineMarginal, IdentityGeneratorExactForVpUnitGaussian) {
    auto q = affine_cosim_marginal(AffineGenerator{Mat::Identity(1, 1), Vec::Zero(1)}, gaussian(1, 1.0),
                                   SdeScheme::vp(), 0.3, 1.2);
    EXPECT_NEAR(q.components()[0].mean(0), 0.0, 1e-15);
    // a(s)^2 a(t)^2 + a(s)^2 sigma(t)^2 + sigma(s)^2 = 1
    EXPECT_NEAR(q.components()[0].cov(0, 0), 1.0, 1e-14);
}

TEST(AffineMarginal, ConstantGeneratorGivesPureNoise) {
    const auto vp = SdeScheme::vp();
    Vec mu = v2(0.7, -1.1);
    auto q = affine_cosim_marginal(AffineGenerator{Mat::Zero(2, 2), mu}, ring(), vp, 0.4, 2.0);
    auto [a, sigma] = sde_coeffs(vp, 0.4);
    for (const auto& c : q.components()) {
        EXPECT_TRUE(c.mean.isApprox(a * mu, 1e-14));
        EXPECT_TRUE(c.cov.isApprox(sigma * sigma * Mat::Identity(2, 2), 1e-14));
    }
}

TEST(AffineMarginal, ClosureUnderComposition) {
    const auto ve = SdeScheme::ve();
    auto data = two_moons(4, 0.1);
    Mat W(2, 2);
    W << 0.9, 0.2, -0.1, 1.1;
    Vec b = v2(0.05, -0.3);
    const double s = 0.8, t = 3.0;
    auto q = affine_cosim_marginal(AffineGenerator{W, b}, data, ve, s, t);
    auto pt = perturb_gmm(data, ve, t);
    for (std::size_t k = 0; k < data.components().size(); ++k) {
        // Direct composition from the data component.
        const auto& c0 = data.components()[k];
        Vec mean = (W * c0.mean + b);
        Mat cov = W * (c0.cov + t * t * Mat::Identity(2, 2)) * W.transpose() + s * s * Mat::Identity(2, 2);
        EXPECT_TRUE(q.components()[k].mean.isApprox(mean, 1e-14));
        EXPECT_TRUE(q.components()[k].cov.isApprox(cov, 1e-14));
        EXPECT_TRUE(pt.components()[k].cov.isApprox(c0.cov + t * t * Mat::Identity(2, 2), 1e-14));
    }
}

TEST(AffineMarginal, MonteCarloTwoStagePushforwardPassesKs) {
    const auto vp = SdeScheme::vp();
    auto data = GaussianMixture::diagonal({0.4, 0.6}, {v1(-1.0), v1(1.5)}, {v1(0.1), v1(0.3)});
    AffineGenerator g{Mat::Constant(1, 1, 1.3), Vec::Constant(1, -0.2)};
    const double s = 0.3, t = 0.9;
    auto q = affine_cosim_marginal(g, data, vp, s, t);
    Rng rng(4);
    const Eigen::Index n = 100000;
    Points x0 = data.sample(n, rng);
    Points xt = perturb(x0, t, standard_normal_points(rng, n, 1), vp);
    auto [a, sigma] = sde_coeffs(vp, s);
    Points xs = a * ((xt * g.W.transpose()).rowwise() + g.b.transpose()) + sigma * standard_normal_points(rng, n, 1);
    auto cdf = [&](double x) {
        double F = 0.0;
        for (const auto& c : q.components())
            F += c.weight * testkit::normal_cdf(x, c.mean(0), std::sqrt(c.cov(0, 0)));
        return F;
    };
    std::vector<double> xs_v(xs.data(), xs.data() + n);
    const double d = testkit::ks_distance(xs_v, cdf);
    EXPECT_GT(testkit::ks_pvalue(d, static_cast<double>(n)), 0.01) << "KS distance " << d;
}

TEST(AffineMarginal, RequiresSBeforeT) {
    AffineGenerator g{Mat::Identity(1, 1), Vec::Zero(1)};
    EXPECT_THROW(affine_cosim_marginal(g, gaussian(1), SdeScheme::vp(), 1.0, 1.0), ValidationError);
    EXPECT_THROW(affine_cosim_marginal(g, gaussian(1), SdeScheme::vp(), 1.5, 1.0), ValidationError);
}

TEST(FixedPoint, CoefHalfRecoversStudentScore) {
    ScoreField q = [](const Vec& x) { return Vec(-2.0 * x); };
    ScoreField p = [](const Vec& x) { return Vec(-x); };
    auto f = fixed_point_f(q, p, 0.5);
    EXPECT_TRUE(f(v1(0.8)).isApprox(q(v1(0.8))));
}

TEST(FixedPoint, CoefOneIsEqualBlend) {
    ScoreField q = [](const Vec& x) { return Vec(-2.0 * x); };
    ScoreField p = [](const Vec& x) { return Vec(-x); };
    auto f = fixed_point_f(q, p, 1.0);
    EXPECT_NEAR(f(v1(0.8))(0), 0.5 * -1.6 + 0.5 * -0.8, 1e-15);
}

TEST(FixedPoint, EqualScoresAreFixedForAnyCoef) {
    ScoreField p = [](const Vec& x) { return Vec(x.array().sin()); };
    for (double coef : {0.3, 0.5, 0.75, 1.0, 4.0}) {
        auto f = fixed_point_f(p, p, coef);
        EXPECT_NEAR(f(v1(0.4))(0), std::sin(0.4), 1e-15);
    }
    EXPECT_THROW(fixed_point_f(p, p, 0.0), ValidationError);
}

TEST(Datasets, NamedLookup) {
    for (const auto& name : dataset_names()) EXPECT_GT(dataset_by_name(name).components().size(), 0u);
    EXPECT_EQ(dataset_by_name("ring8").components().size(), 8u);
    EXPECT_EQ(dataset_by_name("gaussian1d").dim(), 1);
    EXPECT_THROW(dataset_by_name("swiss-roll"), ValidationError);
}

TEST(Datasets, SamplingIsSeedDeterministic) {
    auto g = ring();
    Rng r1(7), r2(7);
    EXPECT_TRUE(g.sample(100, r1).isApprox(g.sample(100, r2), 0.0));
}
