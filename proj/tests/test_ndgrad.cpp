#include "cosim/ndgrad.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <unordered_set>

using namespace cosim;
using namespace cosim::nd;
using cosim::testkit::check_gradients;
using cosim::testkit::uniform_tensor;

namespace {

Tensor vec(std::vector<double> v, bool rg = false) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v), rg);
}

}  // namespace

TEST(Forward, MatmulIdentityReturnsVector) {
    Tensor I({2, 2}, {1, 0, 0, 1});
    Tensor v = vec({3.5, -1.25});
    Tensor r = matmul(I, v);
    ASSERT_EQ(r.shape(), (Shape{2}));
    EXPECT_EQ(r.data()[0], 3.5);
    EXPECT_EQ(r.data()[1], -1.25);
}

TEST(Forward, SumOfTanhZerosIsZero) {
    EXPECT_EQ(sum(nd::tanh(vec({0, 0, 0}))).item(), 0.0);
}

TEST(Forward, SquaredNormOfThreeFour) { EXPECT_EQ(sq_norm(vec({3, 4})).item(), 25.0); }

TEST(Forward, ShapeMismatchNamesBothShapes) {
    Tensor a({2, 3}, std::vector<double>(6, 1.0));
    Tensor b({4, 2}, std::vector<double>(8, 1.0));
    try {
        matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
    }
    EXPECT_THROW(add(a, b), ShapeError);
    EXPECT_THROW(mul(a, vec({1, 2})), ShapeError);
}

TEST(Forward, DataLengthMustMatchShape) {
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST(Forward, RowBroadcastAddsToEveryRow) {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor r = add(a, vec({10, 20}));
    EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{11, 22, 13, 24}));
}

TEST(Forward, ConcatColumns) {
    Tensor a({2, 1}, {1, 2});
    Tensor b({2, 2}, {3, 4, 5, 6});
    Tensor r = concat(a, b);
    ASSERT_EQ(r.shape(), (Shape{2, 3}));
    EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{1, 3, 4, 2, 5, 6}));
}

TEST(Forward, UntrackedInputsRecordNothing) {
    Tensor x = vec({1, 2});
    Tensor y = sum(mul(x, x));
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
    EXPECT_THROW(backward(y), ValidationError);
}

TEST(Backward, SquareAtThreeGivesSix) {
    Tensor x = Tensor::scalar(3.0, true);
    backward(mul(x, x));
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, TanhDerivativeMatchesFiniteDifference) {
    Tensor x = vec({0.5}, true);
    backward(sum(nd::tanh(x)));
    const double h = 1e-5;
    const double fd = (std::tanh(0.5 + h) - std::tanh(0.5 - h)) / (2 * h);
    EXPECT_NEAR(x.grad()[0], fd, 1e-9);
    EXPECT_NEAR(x.grad()[0], 0.7864477, 1e-6);
}

TEST(Backward, NormOfWxGradientIsOuterProduct) {
    Rng rng(3);
    Tensor W = uniform_tensor({3, 2}, rng).set_requires_grad(true);
    Tensor x = uniform_tensor({2}, rng);
    backward(sq_norm(matmul(W, x)));
    Tensor Wx = matmul(W.detach(), x);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            EXPECT_NEAR(W.grad()[i * 2 + j], 2.0 * Wx.data()[i] * x.data()[j], 1e-12);

    auto r = check_gradients([&](const std::vector<Tensor>& in) { return sq_norm(matmul(in[0], x)); }, {W});
    EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(Backward, NonScalarLossRejected) {
    Tensor x = vec({1, 2}, true);
    EXPECT_THROW(backward(mul(x, x)), ShapeError);
}

TEST(Backward, LeafGradientsAccumulate) {
    Tensor x = Tensor::scalar(2.0, true);
    backward(mul(x, x));
    backward(scale(x, 3.0));
    EXPECT_DOUBLE_EQ(x.grad()[0], 4.0 + 3.0);
    x.zero_grad();
    EXPECT_DOUBLE_EQ(x.grad()[0], 0.0);
}

TEST(Backward, TapeIsConsumed) {
    Tensor x = vec({1, 2}, true);
    Tensor y = sum(mul(x, x));
    backward(y);
    EXPECT_TRUE(y.is_leaf());
    EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
    Tensor x = vec({1.5, -0.5}, true);
    Tensor s = silu(x);
    Tensor loss = sum(add(mul(s, s), s));  // s used three times
    auto tape = build_tape(loss);
    std::unordered_set<const detail::Node*> seen;
    for (const auto& n : tape) EXPECT_TRUE(seen.insert(n.get()).second);
    // Topological order: each node appears after all of its parents.
    std::unordered_set<const detail::Node*> done;
    for (const auto& n : tape) {
        for (const auto& p : n->parents) EXPECT_TRUE(done.count(p.get()) || p->is_leaf());
        done.insert(n.get());
    }
    auto r = check_gradients([](const std::vector<Tensor>& in) {
        Tensor s2 = silu(in[0]);
        return sum(add(mul(s2, s2), s2));
    }, {x});
    EXPECT_LT(r.max_rel_err, 1e-6);
}

// Finite-difference property over random inputs in [-2, 2], one block of
// trials per primitive.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchCentralDifferences) {
    const int prim = GetParam();
    Rng rng(1000 + prim);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + trial % 3, k = 1 + (trial / 3) % 3, m = 1 + (trial / 9) % 3;
        Tensor a = uniform_tensor({n, k}, rng);
        Tensor b = uniform_tensor({n, k}, rng);
        Tensor row = uniform_tensor({k}, rng);
        Tensor w = uniform_tensor({k, m}, rng);
        Tensor wv = uniform_tensor({k}, rng);
        Tensor c = uniform_tensor({n, m}, rng);
        // A random linear read-out makes every output element matter.
        Tensor probe_nk = uniform_tensor({n, k}, rng);
        Tensor probe_nm = uniform_tensor({n, m}, rng);
        Tensor probe_n = uniform_tensor({n}, rng);
        Tensor probe_cat = uniform_tensor({n, k + m}, rng);
        std::vector<double> factors(n);
        for (auto& f : factors) f = testkit::uniform_tensor({1}, rng).item();
        testkit::GradCheck r;
        switch (prim) {
            case 0:
                r = check_gradients([&](auto& in) { return sum(mul(matmul(in[0], in[1]), probe_nm)); }, {a, w});
                break;
            case 1:
                r = check_gradients([&](auto& in) { return sum(mul(matmul(in[0], in[1]), probe_n)); }, {a, wv});
                break;
            case 2:
                r = check_gradients([&](auto& in) { return sum(mul(add(in[0], in[1]), probe_nk)); }, {a, b});
                break;
            case 3:
                r = check_gradients([&](auto& in) { return sum(mul(add(in[0], in[1]), probe_nk)); }, {a, row});
                break;
            case 4:
                r = check_gradients([&](auto& in) { return sum(mul(sub(in[0], in[1]), probe_nk)); }, {a, row});
                break;
            case 5:
                r = check_gradients([&](auto& in) { return sum(mul(mul(in[0], in[1]), probe_nk)); }, {a, b});
                break;
            case 6:
                r = check_gradients([&](auto& in) { return sum(mul(mul(in[0], in[1]), probe_nk)); }, {a, row});
                break;
            case 7:
                r = check_gradients([&](auto& in) { return sum(mul(scale(in[0], -1.7), probe_nk)); }, {a});
                break;
            case 8:
                r = check_gradients([&](auto& in) { return sum(mul(scale_rows(in[0], factors), probe_nk)); }, {a});
                break;
            case 9:
                r = check_gradients([&](auto& in) { return sum(mul(silu(in[0]), probe_nk)); }, {a});
                break;
            case 10:
                r = check_gradients([&](auto& in) { return sum(mul(nd::tanh(in[0]), probe_nk)); }, {a});
                break;
            case 11:
                r = check_gradients([&](auto& in) { return scale(sum(in[0]), 0.3); }, {a});
                break;
            case 12:
                r = check_gradients([&](auto& in) { return mean(mul(in[0], probe_nk)); }, {a});
                break;
            case 13:
                r = check_gradients([&](auto& in) { return sq_norm(in[0]); }, {a});
                break;
            case 14:
                r = check_gradients([&](auto& in) { return sum(mul(concat(in[0], in[1]), probe_cat)); }, {a, c});
                break;
            default:
                FAIL();
        }
        worst = std::max(worst, r.max_rel_err);
    }
    EXPECT_LT(worst, 1e-4);
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradients, ::testing::Range(0, 15));

TEST(Properties, GradientOfSumIsSumOfGradients) {
    Rng rng(8);
    Tensor x = uniform_tensor({3, 2}, rng);
    auto f1 = [](const Tensor& t) { return sq_norm(silu(t)); };
    auto f2 = [](const Tensor& t) { return sum(nd::tanh(t)); };

    Tensor a = x.clone(true);
    backward(f1(a));
    backward(f2(a));
    Tensor b = x.clone(true);
    backward(add(f1(b), f2(b)));
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(a.grad()[i], b.grad()[i], 1e-15);
}

TEST(Properties, FrozenNetworkStillPassesInputGradient) {
    Rng rng(9);
    Tensor W1 = uniform_tensor({2, 4}, rng);  // parameters, not tracking
    Tensor W2 = uniform_tensor({4, 2}, rng);
    Tensor x = uniform_tensor({3, 2}, rng);
    auto net = [&](const Tensor& in) { return sq_norm(matmul(silu(matmul(in, W1)), W2)); };
    auto r = check_gradients([&](auto& in) { return net(in[0]); }, {x});
    EXPECT_LT(r.max_rel_err, 1e-6);
    EXPECT_FALSE(W1.has_grad());
    EXPECT_FALSE(W2.has_grad());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Tensor p = vec({1.0, -2.0}, true);
    std::vector<Tensor> params{p};
    AdamState st(params, AdamOptions{});
    p.grad();  // allocate zeros
    adam_step(params, st, 1e-2);
    EXPECT_EQ(p.data()[0], 1.0);
    EXPECT_EQ(p.data()[1], -2.0);
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepWithZeroBeta1MovesBySignOfGradient) {
    Tensor p = vec({0.0, 0.0, 0.0}, true);
    std::vector<Tensor> params{p};
    AdamState st(params, AdamOptions{0.0, 0.999, 1e-8});
    backward(sum(mul(p, vec({3.0, -0.02, 700.0}))));
    const double lr = 0.1;
    adam_step(params, st, lr);
    // m_hat = g, v_hat = g^2 -> step = -lr g / (|g| + eps)
    EXPECT_NEAR(p.data()[0], -lr * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.data()[1], lr * 0.02 / (0.02 + 1e-8), 1e-15);
    EXPECT_NEAR(p.data()[2], -lr * 700.0 / (700.0 + 1e-8), 1e-15);
}

TEST(Adam, DeterministicAcrossIdenticalRuns) {
    auto run = [] {
        Rng rng(21);
        Tensor w = uniform_tensor({4, 3}, rng).set_requires_grad(true);
        Tensor x = uniform_tensor({5, 4}, rng);
        std::vector<Tensor> params{w};
        AdamState st(params, AdamOptions{0.9, 0.99, 1e-12});
        for (int i = 0; i < 50; ++i) {
            zero_grads(params);
            backward(sq_norm(nd::tanh(matmul(x, w))));
            adam_step(params, st, 1e-2);
        }
        return std::vector<double>(w.data().begin(), w.data().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdate) {
    Tensor p = vec({1.0, 2.0}, true);
    std::vector<Tensor> params{p};
    AdamState st(params, AdamOptions{});
    backward(sum(mul(p, vec({1.0, std::nan("")}))));
    EXPECT_THROW(adam_step(params, st, 1e-3), NumericalError);
    EXPECT_EQ(p.data()[0], 1.0);
    EXPECT_EQ(st.step, 0u);
}

TEST(Adam, RejectsNonPositiveLearningRateAndMismatchedState) {
    Tensor p = vec({1.0}, true);
    std::vector<Tensor> params{p};
    AdamState st(params, AdamOptions{});
    EXPECT_THROW(adam_step(params, st, 0.0), ValidationError);
    std::vector<Tensor> two{p, vec({1.0}, true)};
    EXPECT_THROW(adam_step(two, st, 1e-3), ShapeError);
}
