#include "cosim/distill.hpp"
#include "cosim/oracle.hpp"
#include "cosim/theory.hpp"
#include "reference_losses.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cosim;
using namespace cosim::distill;
using nd::Tensor;

namespace {

// G(x) = w x + b with (w, b) as tracked leaves.
struct AffineGen {
    Tensor w, b;
    AffineGen(double wv, double bv, bool track = true)
        : w(nd::Shape{1, 1}, {wv}, track), b(nd::Shape{1}, {bv}, track) {}
    GeneratorFn fn() const {
        return [w = w, b = b](const Tensor& x, std::span<const double>) { return nd::add(nd::matmul(x, w), b); };
    }
};

ScoreFn minus_x() {
    return [](const Tensor& x, std::span<const double>) { return nd::scale(x, -1.0); };
}

AuxFn affine_aux(double k, double m) {
    return [k, m](const Tensor& x, std::span<const double>, std::span<const double>) {
        return nd::add(nd::scale(x, k), Tensor(nd::Shape{1}, {m}));
    };
}

StageBatch vp_batch(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data(oracle::gaussian(1).sample(std::max<Eigen::Index>(n, 16), rng));
    return draw_stage_batch(data, n, TimeSchedule::for_scheme(SdeScheme::vp()), rng);
}

std::vector<testkit::ScalarDraw> scalar_draws(const StageBatch& b) {
    std::vector<testkit::ScalarDraw> out;
    for (Eigen::Index i = 0; i < b.x0.rows(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        out.push_back({b.x0(i, 0), b.s[k], b.t[k], b.eps_t(i, 0), b.eps_s(i, 0)});
    }
    return out;
}

models::DenoiserNet small_net(std::uint64_t seed, SdeScheme scheme = SdeScheme::ve(), Eigen::Index dim = 2) {
    models::DenoiserNet net(models::NetConfig{static_cast<int>(dim), 4, {6, 6}, kSigmaData}, scheme);
    Rng rng(seed);
    net.init(rng, false);
    return net;
}

}  // namespace

// Mixing -----------------------------------------------------------------------

TEST(SampleMixing, ZeroNoiseGivesScaledData) {
    const auto vp = SdeScheme::vp();
    Points x0(3, 2);
    x0 << 1, 2, -1, 0.5, 0, 3;
    std::vector<double> t{0.1, 1.0, 4.0};
    Points xt = sample_mixing(x0, t, Points::Zero(3, 2), vp);
    ASSERT_EQ(xt.rows(), 3);
    ASSERT_EQ(xt.cols(), 2);
    for (Eigen::Index i = 0; i < 3; ++i)
        EXPECT_TRUE(xt.row(i).isApprox(std::exp(-t[static_cast<std::size_t>(i)]) * x0.row(i), 1e-15));
}

TEST(SampleMixing, VeIncrementVarianceIsTSquared) {
    const auto ve = SdeScheme::ve();
    Rng rng(1);
    const Eigen::Index n = 100000;
    const double t = 1.7;
    Points x0 = oracle::ring().sample(n, rng);
    std::vector<double> tv(n, t);
    Points d = sample_mixing(x0, tv, ve, rng) - x0;
    const double var = d.col(0).squaredNorm() / n;
    EXPECT_NEAR(var / (t * t), 1.0, 0.02);
}

// Transition -------------------------------------------------------------------

TEST(SampleTransition, ReproducibleUnderSeed) {
    auto net = small_net(2);
    Rng r0(3);
    Tensor xt = Tensor::from_points(standard_normal_points(r0, 8, 2));
    std::vector<double> s(8, 0.5), t(8, 2.0);
    Rng r1(4), r2(4);
    auto a = sample_transition(net.as_generator(), xt, s, t, SdeScheme::ve(), r1);
    auto b = sample_transition(net.as_generator(), xt, s, t, SdeScheme::ve(), r2);
    EXPECT_TRUE(std::equal(a.x_s.data().begin(), a.x_s.data().end(), b.x_s.data().begin()));
}

TEST(SampleTransition, RejectsSNotBeforeT) {
    AffineGen g(1.0, 0.0, false);
    Tensor xt = Tensor::from_points(Points::Zero(2, 1));
    std::vector<double> s{0.5, 1.0}, t{1.0, 1.0};
    EXPECT_THROW(sample_transition(g.fn(), xt, s, t, SdeScheme::vp(), Points::Zero(2, 1)), ValidationError);
    std::vector<double> s2{0.5, 1.5};
    EXPECT_THROW(sample_transition(g.fn(), xt, s2, t, SdeScheme::vp(), Points::Zero(2, 1)), ValidationError);
}

TEST(SampleTransition, VanishingNoiseIsDeterministicMean) {
    AffineGen g(0.8, 0.1, false);
    Rng rng(5);
    Tensor xt = Tensor::from_points(standard_normal_points(rng, 4, 1));
    std::vector<double> s(4, 1e-14), t(4, 1.0);
    auto tr = sample_transition(g.fn(), xt, s, t, SdeScheme::ve(), rng);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(tr.x_s.data()[i], 0.8 * xt.data()[i] + 0.1, 1e-13);
}

TEST(SampleTransition, AffineGeneratorMatchesOracleMarginal) {
    const auto vp = SdeScheme::vp();
    auto data = oracle::GaussianMixture::diagonal({0.4, 0.6}, {Vec::Constant(1, -1.0), Vec::Constant(1, 1.5)},
                                                  {Vec::Constant(1, 0.1), Vec::Constant(1, 0.3)});
    const double s = 0.3, t = 0.9;
    AffineGen g(1.3, -0.2, false);
    Rng rng(6);
    const Eigen::Index n = 100000;
    std::vector<double> sv(n, s), tv(n, t);
    Points xt = sample_mixing(data.sample(n, rng), tv, vp, rng);
    Points xs = sample_transition(g.fn(), Tensor::from_points(xt), sv, tv, vp, rng).x_s.to_points();
    auto q = oracle::affine_cosim_marginal({Mat::Constant(1, 1, 1.3), Vec::Constant(1, -0.2)}, data, vp, s, t);
    auto cdf = [&](double x) {
        double F = 0.0;
        for (const auto& c : q.components())
            F += c.weight * testkit::normal_cdf(x, c.mean(0), std::sqrt(c.cov(0, 0)));
        return F;
    };
    std::vector<double> v(xs.data(), xs.data() + n);
    const double d = testkit::ks_distance(v, cdf);
    EXPECT_GT(testkit::ks_pvalue(d, static_cast<double>(n)), 0.01) << "KS distance " << d;
}

TEST(SampleTransition, GradientReachesGeneratorParameters) {
    AffineGen g(1.1, 0.2);
    Tensor xt = Tensor::from_points(Points::Constant(3, 1, 2.0));
    std::vector<double> s(3, 0.2), t(3, 0.7);
    auto tr = sample_transition(g.fn(), xt, s, t, SdeScheme::vp(), Points::Zero(3, 1));
    nd::backward(nd::sum(tr.x_s));
    // d/dw sum a(s) (w x + b) = 3 a(s) x, d/db = 3 a(s)
    EXPECT_NEAR(g.w.grad()[0], 3 * std::exp(-0.2) * 2.0, 1e-14);
    EXPECT_NEAR(g.b.grad()[0], 3 * std::exp(-0.2), 1e-14);
}

// Conditional score ---------------------------------------------------------------

TEST(CondScore, ZeroAtTheMode) {
    Tensor mean = Tensor::from_points(Points::Constant(2, 2, 0.7));
    std::vector<double> s(2, 0.9);
    Tensor cs = cond_score(mean, mean, s, SdeScheme::vp());
    for (double v : cs.data()) EXPECT_EQ(v, 0.0);
}

TEST(CondScore, MatchesAutodiffOfGaussianLogDensity) {
    const auto vp = SdeScheme::vp();
    Rng rng(7);
    Points xs_p = standard_normal_points(rng, 5, 2), mean_p = standard_normal_points(rng, 5, 2);
    std::vector<double> s{0.05, 0.3, 1.0, 2.5, 7.0};
    std::vector<double> half_prec(5);
    for (std::size_t i = 0; i < 5; ++i) {
        const double sig = std::sqrt(1.0 - std::exp(-2.0 * s[i]));
        half_prec[i] = -0.5 / (sig * sig);
    }
    Tensor xs = Tensor::from_points(xs_p, true);
    Tensor d = nd::sub(xs, Tensor::from_points(mean_p));
    nd::backward(nd::sum(nd::scale_rows(nd::mul(d, d), half_prec)));
    Tensor cs = cond_score(Tensor::from_points(xs_p), Tensor::from_points(mean_p), s, vp);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < cs.numel(); ++i) {
        num += std::pow(cs.data()[i] - xs.grad()[i], 2);
        den += std::pow(xs.grad()[i], 2);
    }
    EXPECT_LT(std::sqrt(num / den), 1e-8);
}

TEST(CondScore, ReparameterizedIdentity) {
    const auto vp = SdeScheme::vp();
    AffineGen g(0.9, -0.4, false);
    Rng rng(8);
    Points eps = standard_normal_points(rng, 6, 1);
    Tensor xt = Tensor::from_points(standard_normal_points(rng, 6, 1));
    std::vector<double> s(6, 0.6), t(6, 1.4);
    auto tr = sample_transition(g.fn(), xt, s, t, vp, eps);
    Tensor cs = cond_score(g.fn(), tr.x_s, xt, s, t, vp);
    const double sig = std::sqrt(1.0 - std::exp(-1.2));
    for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(cs.data()[static_cast<std::size_t>(i)], -eps(i, 0) / sig, 1e-12);
}

TEST(CondScore, RejectsZeroSigma) {
    Tensor x = Tensor::from_points(Points::Zero(1, 1));
    std::vector<double> s{0.0};
    EXPECT_THROW(cond_score(x, x, s, SdeScheme::ve()), ValidationError);
}

// Generator-stage loss ------------------------------------------------------------------

TEST(PhiLoss, ZeroWithZeroGradientWhenAuxEqualsTeacher) {
    AffineGen g(1.2, 0.3);
    StageModels m{g.fn(), [](const Tensor& x, std::span<const double>, std::span<const double>) {
                      return nd::scale(x, -1.0);
                  },
                  minus_x()};
    auto b = vp_batch(64, 9);
    Tensor loss = phi_loss(m, b, SdeScheme::vp(), 1.2);
    EXPECT_EQ(loss.item(), 0.0);
    nd::backward(loss);
    EXPECT_EQ(g.w.grad()[0], 0.0);
    EXPECT_EQ(g.b.grad()[0], 0.0);
}

TEST(PhiLoss, MatchesScalarRecomputation) {
    const testkit::AffineSetting set{1.2, 0.3, -0.7, 0.15};
    AffineGen g(set.gen_w, set.gen_b);
    StageModels m{g.fn(), affine_aux(set.aux_k, set.aux_m), minus_x()};
    auto b = vp_batch(200, 10);
    const double ours = phi_loss(m, b, SdeScheme::vp(), 1.2).item();
    const double ref = testkit::reference_phi(set, scalar_draws(b), 1.2);
    EXPECT_LT(std::abs(ours - ref) / std::abs(ref), 1e-10);
}

TEST(PhiLoss, ConstantWeightScalesGradientExactly) {
    const auto vp = SdeScheme::vp();
    AffineGen g(1.2, 0.3);
    StageModels m{g.fn(), affine_aux(-0.7, 0.15), minus_x()};
    auto b = vp_batch(50, 11);
    std::fill(b.s.begin(), b.s.end(), 0.5);
    std::fill(b.t.begin(), b.t.end(), 1.5);
    nd::backward(phi_loss(m, b, vp, 1.2, WeightMode::Unit));
    const double gw = g.w.grad()[0], gb = g.b.grad()[0];
    g.w.zero_grad();
    g.b.zero_grad();
    nd::backward(phi_loss(m, b, vp, 1.2, WeightMode::Denoiser));
    const double c = stage_weights(WeightMode::Denoiser, b.s, vp)[0];
    EXPECT_NEAR(g.w.grad()[0], c * gw, 1e-13 * std::abs(c * gw));
    EXPECT_NEAR(g.b.grad()[0], c * gb, 1e-13 * std::abs(c * gb));
}

TEST(PhiLoss, GradientMatchesFiniteDifferences) {
    auto teacher = small_net(12), gen = small_net(13), other = small_net(14);
    auto aux = models::AuxNet::from_teacher(other);
    teacher.set_trainable(false);
    aux.set_trainable(false);
    Rng rng(15);
    Dataset data(oracle::ring().sample(50, rng));
    auto b = draw_stage_batch(data, 4, TimeSchedule{}, rng);
    StageModels m{gen.as_generator(),
                  [&](const Tensor& x, std::span<const double> s, std::span<const double> t) {
                      return aux.forward(x, s, t);
                  },
                  teacher.as_score()};
    auto r = testkit::check_gradients(
        [&](const std::vector<Tensor>&) { return phi_loss(m, b, SdeScheme::ve(), 1.2); }, gen.parameters(), 1e-6);
    EXPECT_LT(r.max_rel_err, 1e-4);
}

// Auxiliary-stage loss ------------------------------------------------------------------

TEST(PsiLoss, ZeroWhenAuxEqualsTeacher) {
    AffineGen g(0.7, 0.0, false);
    StageModels m{g.fn(), affine_aux(-1.0, 0.0), minus_x()};
    EXPECT_EQ(psi_loss(m, vp_batch(32, 16), SdeScheme::vp(), 1.0).item(), 0.0);
}

TEST(PsiLoss, MatchesScalarRecomputation) {
    const testkit::AffineSetting set{0.9, -0.2, -1.4, 0.05};
    AffineGen g(set.gen_w, set.gen_b, false);
    StageModels m{g.fn(), affine_aux(set.aux_k, set.aux_m), minus_x()};
    auto b = vp_batch(200, 17);
    for (double coef : {0.5, 1.0}) {
        const double ours = psi_loss(m, b, SdeScheme::vp(), coef).item();
        const double ref = testkit::reference_psi(set, scalar_draws(b), coef);
        EXPECT_LT(std::abs(ours - ref) / std::abs(ref), 1e-10) << "coef " << coef;
    }
}

TEST(PsiLoss, NoGradientReachesGenerator) {
    AffineGen g(1.2, 0.3);
    Tensor k(nd::Shape{1, 1}, {-0.5}, true);
    AuxFn f = [&](const Tensor& x, std::span<const double>, std::span<const double>) { return nd::matmul(x, k); };
    StageModels m{g.fn(), f, minus_x()};
    nd::backward(psi_loss(m, vp_batch(16, 18), SdeScheme::vp(), 1.0));
    EXPECT_NE(k.grad()[0], 0.0);
    EXPECT_EQ(g.w.grad()[0], 0.0);
    EXPECT_EQ(g.b.grad()[0], 0.0);
}

TEST(PsiLoss, GradientMatchesFiniteDifferences) {
    auto teacher = small_net(19), gen = small_net(20), other = small_net(21);
    auto aux = models::AuxNet::from_teacher(other);
    teacher.set_trainable(false);
    gen.set_trainable(false);
    Rng rng(22);
    Dataset data(oracle::ring().sample(50, rng));
    auto b = draw_stage_batch(data, 4, TimeSchedule{}, rng);
    StageModels m{gen.as_generator(),
                  [&](const Tensor& x, std::span<const double> s, std::span<const double> t) {
                      return aux.forward(x, s, t);
                  },
                  teacher.as_score()};
    auto r = testkit::check_gradients(
        [&](const std::vector<Tensor>&) { return psi_loss(m, b, SdeScheme::ve(), 1.0); }, aux.parameters(), 1e-6);
    EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(PsiLoss, CoefHalfDiffersFromRegressionByAConstant) {
    // u (cs - S) + u^2 / 2 = |f - cs|^2 / 2 - |S - cs|^2 / 2 pointwise.
    const testkit::AffineSetting set{1.1, 0.2, -0.6, 0.3};
    auto b = vp_batch(100, 23);
    double lhs = 0.0, rhs = 0.0;
    for (const auto& d : scalar_draws(b)) {
        auto r = testkit::scalar_terms(set, d);
        const double f = r.S - r.u;
        lhs += r.u * (r.cs - r.S) + 0.5 * r.u * r.u;
        rhs += 0.5 * (f - r.cs) * (f - r.cs) - 0.5 * (r.S - r.cs) * (r.S - r.cs);
    }
    EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(rhs));
    AffineGen g(set.gen_w, set.gen_b, false);
    StageModels m{g.fn(), affine_aux(set.aux_k, set.aux_m), minus_x()};
    EXPECT_NEAR(psi_loss(m, b, SdeScheme::vp(), 0.5).item(), rhs / 100.0, 1e-10 * std::abs(rhs));
}

// Analytic checks ----------------------------------------------------------------------

class FixedPoint : public ::testing::TestWithParam<double> {};

TEST_P(FixedPoint, AuxiliaryStageConvergesToBlendOfScores) {
    theory::FixedPointCase c;
    c.coef = GetParam();
    auto r = theory::gaussian_fixed_point(c);
    EXPECT_LT(r.rel_l2, 0.05) << "coef " << c.coef;
}

INSTANTIATE_TEST_SUITE_P(CoefGrid, FixedPoint, ::testing::Values(0.5, 0.75, 1.0));

TEST(SiviReduction, StageGradientsMatchReferenceForms) {
    for (std::uint64_t seed : {0, 1, 2}) {
        auto r = theory::sivi_reduction(seed);
        EXPECT_LT(r.phi.max_abs_diff, 1e-6) << "seed " << seed;
        EXPECT_LT(r.psi.max_abs_diff, 1e-6) << "seed " << seed;
        EXPECT_GT(r.phi.max_abs_grad, 1e-4);
        EXPECT_GT(r.psi.max_abs_grad, 1e-4);
    }
}

TEST(PhiEquilibrium, IdentityGeneratorIsStationary) {
    auto r = theory::phi_equilibrium(0, 10000);
    EXPECT_LT(r.max_abs_grad, 1e-6);
}

TEST(PhiEquilibrium, PerturbedGeneratorIsNotStationary) {
    // Same construction with W = 1.3: the gradient must be clearly nonzero.
    const auto vp = SdeScheme::vp();
    AffineGen g(1.3, 0.0);
    auto q = oracle::affine_cosim_marginal({Mat::Constant(1, 1, 1.3), Vec::Zero(1)}, oracle::gaussian(1), vp, 0.4, 1.0);
    const double q_prec = 1.0 / q.components()[0].cov(0, 0);
    // coef = 1: f = 0.5 score_q + 0.5 score_p at s = 0.4
    StageModels m{g.fn(), affine_aux(-0.5 * q_prec - 0.5, 0.0), minus_x()};
    auto b = vp_batch(10000, 24);
    std::fill(b.s.begin(), b.s.end(), 0.4);
    std::fill(b.t.begin(), b.t.end(), 1.0);
    nd::backward(phi_loss(m, b, vp, 1.2));
    EXPECT_GT(std::abs(g.w.grad()[0]), 1e-3);
}

// Config, weights, EMA ----------------------------------------------------------------

TEST(DistillConfig, DefaultsAndValidation) {
    DistillConfig c;
    EXPECT_EQ(c.alpha, 1.2);
    EXPECT_EQ(c.coef, 1.0);
    EXPECT_EQ(c.adam.beta1, 0.0);
    EXPECT_NO_THROW(c.validate());
    c.coef = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c.coef = 1.0;
    c.alpha = -1.0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(WeightMode, ParseRoundTrip) {
    for (auto m : {WeightMode::Unit, WeightMode::Normalized, WeightMode::Denoiser})
        EXPECT_EQ(parse_weight_mode(to_string(m)), m);
    EXPECT_THROW(parse_weight_mode("sid"), ValidationError);
}

TEST(StageWeights, UnitAndDenoiserForms) {
    const auto vp = SdeScheme::vp();
    std::vector<double> s{0.01, 0.5, 3.0};
    for (double w : stage_weights(WeightMode::Unit, s, vp)) EXPECT_EQ(w, 1.0);
    auto w = stage_weights(WeightMode::Denoiser, s, vp);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double v = 1.0 - std::exp(-2.0 * s[i]);
        EXPECT_NEAR(w[i], v * v / std::exp(-2.0 * s[i]), 1e-14);
    }
}

TEST(StageBatch, DrawsOrderedTimePairs) {
    auto b = vp_batch(500, 25);
    ASSERT_EQ(b.s.size(), 500u);
    for (std::size_t i = 0; i < b.s.size(); ++i) EXPECT_LT(b.s[i], b.t[i]);
    EXPECT_EQ(b.eps_t.rows(), 500);
    EXPECT_EQ(b.eps_s.cols(), 1);
}

TEST(Ema, DecayZeroCopiesLive) {
    std::vector<Tensor> live{Tensor(nd::Shape{2}, {1.0, 2.0})};
    auto st = EmaState::from(live, 0.0);
    live[0].data_mut()[0] = 5.0;
    ema_update(st, live);
    EXPECT_EQ(st.shadow[0][0], 5.0);
    EXPECT_EQ(st.shadow[0][1], 2.0);
}

TEST(Ema, DecayOneFreezesShadow) {
    std::vector<Tensor> live{Tensor(nd::Shape{2}, {1.0, 2.0})};
    auto st = EmaState::from(live, 1.0);
    live[0].data_mut()[0] = 5.0;
    for (int i = 0; i < 10; ++i) ema_update(st, live);
    EXPECT_EQ(st.shadow[0][0], 1.0);
}

TEST(Ema, HalfLifeHalvesTheGap) {
    const double batch = 128.0, half_life = 128.0 * 40;
    std::vector<Tensor> live{Tensor(nd::Shape{1}, {0.0})};
    auto st = EmaState::from(live, EmaState::decay_for(batch, half_life));
    const double s0 = 0.0, L = 3.0;
    live[0].data_mut()[0] = L;
    for (int i = 0; i < 40; ++i) ema_update(st, live);
    EXPECT_NEAR(st.shadow[0][0], (s0 + L) / 2.0, 1e-9);
}

TEST(Ema, ShapeMismatchRejected) {
    std::vector<Tensor> live{Tensor(nd::Shape{2}, {1.0, 2.0})};
    auto st = EmaState::from(live, 0.5);
    std::vector<Tensor> other{Tensor(nd::Shape{3}, {1.0, 2.0, 3.0})};
    EXPECT_THROW(ema_update(st, other), nd::ShapeError);
    EXPECT_THROW(ema_copy_to(st, other), nd::ShapeError);
}

// Training loop --------------------------------------------------------------------------

namespace {

DistillConfig tiny_config(int iterations) {
    DistillConfig c;
    c.iterations = iterations;
    c.batch_size = 8;
    c.seed = 4;
    c.lr = 1e-3;
    return c;
}

Dataset ring_data(std::uint64_t seed) {
    Rng rng(seed);
    return Dataset(oracle::ring().sample(64, rng));
}

}  // namespace

TEST(TrainDistill, ZeroIterationsReturnsTeacher) {
    auto teacher = small_net(26);
    auto r = train_distill(tiny_config(0), teacher, ring_data(1));
    auto t = teacher.parameters(), g = r.generator.parameters(), e = r.ema.parameters();
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_TRUE(std::equal(t[i].data().begin(), t[i].data().end(), g[i].data().begin()));
        EXPECT_TRUE(std::equal(t[i].data().begin(), t[i].data().end(), e[i].data().begin()));
    }
    EXPECT_EQ(r.phi_updates, 0);
    EXPECT_EQ(r.psi_updates, 0);
}

TEST(TrainDistill, AlternationStartsWithAuxiliaryStage) {
    auto teacher = small_net(27);
    for (int n : {1, 2, 5, 6}) {
        auto r = train_distill(tiny_config(n), teacher, ring_data(2));
        EXPECT_EQ(r.phi_updates, n / 2) << n;
        EXPECT_EQ(r.psi_updates, (n + 1) / 2) << n;
    }
}

TEST(TrainDistill, FixedSeedIsBitwiseReproducible) {
    auto teacher = small_net(28);
    auto a = train_distill(tiny_config(7), teacher, ring_data(3));
    auto b = train_distill(tiny_config(7), teacher, ring_data(3));
    auto pa = a.ema.parameters(), pb = b.ema.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        EXPECT_TRUE(std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin()));
    auto ga = a.generator.parameters(), gb = b.generator.parameters();
    bool moved = false;
    auto t = teacher.parameters();
    for (std::size_t i = 0; i < ga.size(); ++i) {
        EXPECT_TRUE(std::equal(ga[i].data().begin(), ga[i].data().end(), gb[i].data().begin()));
        if (!std::equal(ga[i].data().begin(), ga[i].data().end(), t[i].data().begin())) moved = true;
    }
    EXPECT_TRUE(moved);
}

TEST(TrainDistill, LoggingReportsEveryInterval) {
    auto teacher = small_net(29);
    TrainHooks hooks;
    hooks.log_every = 2;
    int evals = 0;
    hooks.eval_w2 = [&](const models::GeneratorNet&) { return static_cast<double>(++evals); };
    auto r = train_distill(tiny_config(6), teacher, ring_data(4), hooks);
    ASSERT_EQ(r.log.size(), 3u);
    EXPECT_EQ(r.log.back().iteration, 6);
    EXPECT_EQ(r.log.back().w2.value(), 3.0);
}

TEST(TrainDistill, NonFiniteLossAbortsWithIterationAndStage) {
    auto teacher = small_net(30);
    Rng rng(5);
    Points pts = oracle::ring().sample(8, rng);
    pts.array() = std::numeric_limits<double>::quiet_NaN();
    try {
        train_distill(tiny_config(4), teacher, Dataset(pts));
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("iteration 0"), std::string::npos) << msg;
        EXPECT_NE(msg.find("auxiliary"), std::string::npos) << msg;
    }
}
