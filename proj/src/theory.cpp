#include "cosim/theory.hpp"

#include "cosim/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace cosim::theory {

using distill::StageBatch;
using distill::StageModels;

namespace {

StageBatch fixed_time_batch(Eigen::Index n, Eigen::Index dim, double s, double t, Rng& rng) {
    StageBatch b;
    b.x0 = standard_normal_points(rng, n, dim);
    b.s.assign(static_cast<std::size_t>(n), s);
    b.t.assign(static_cast<std::size_t>(n), t);
    b.eps_t = standard_normal_points(rng, n, dim);
    b.eps_s = standard_normal_points(rng, n, dim);
    return b;
}

models::ScoreFn minus_x() {
    return [](const Tensor& x, std::span<const double>) { return nd::scale(x, -1.0); };
}

std::vector<std::vector<double>> grads_of(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> out;
    for (const auto& p : params) out.emplace_back(p.grad().begin(), p.grad().end());
    return out;
}

GradientComparison compare(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    GradientComparison c;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) {
            c.max_abs_diff = std::max(c.max_abs_diff, std::abs(a[i][j] - b[i][j]));
            c.max_abs_grad = std::max(c.max_abs_grad, std::abs(a[i][j]));
        }
    return c;
}

std::vector<std::vector<double>> loss_grads(std::vector<Tensor> params, const Tensor& loss) {
    nd::zero_grads(params);
    nd::backward(loss);
    auto g = grads_of(params);
    nd::zero_grads(params);
    return g;
}

}  // namespace

FixedPointResult gaussian_fixed_point(const FixedPointCase& c) {
    if (!(c.coef > 0.0)) throw ValidationError("gaussian_fixed_point: coef must be > 0");
    if (c.iterations < 1 || c.batch_size < 1 || c.grid_points < 2)
        throw ValidationError("gaussian_fixed_point: bad iteration, batch or grid size");
    const auto vp = SdeScheme::vp();
    Rng rng(c.seed);

    const Tensor b_row(nd::Shape{1}, {c.b});
    const double w = c.W;
    models::GeneratorFn G = [w, b_row](const Tensor& x, std::span<const double>) {
        return nd::add(nd::scale(x, w), b_row);
    };

    models::NetConfig net_cfg;
    net_cfg.data_dim = 1;
    models::DenoiserNet base(net_cfg, vp);
    base.init(rng, false);
    auto aux = models::AuxNet::from_teacher(base);
    aux.set_trainable(true);
    auto params = aux.parameters();
    nd::AdamState adam(params, nd::AdamOptions{0.9, 0.999, 1e-8});

    StageModels m{G, [&aux](const Tensor& x, std::span<const double> s, std::span<const double> t) {
                      return aux.forward(x, s, t);
                  },
                  minus_x()};

    for (int k = 0; k < c.iterations; ++k) {
        // Constant rate for the first half, then linear decay to zero.
        const double frac = static_cast<double>(k) / c.iterations;
        const double lr = frac < 0.5 ? c.lr : c.lr * 2.0 * (1.0 - frac);
        StageBatch b = fixed_time_batch(c.batch_size, 1, c.s, c.t, rng);
        Tensor loss = distill::psi_loss(m, b, vp, c.coef);
        nd::zero_grads(params);
        nd::backward(loss);
        nd::adam_step(params, adam, lr);
    }
    aux.set_trainable(false);

    FixedPointResult r;
    const auto n = static_cast<Eigen::Index>(c.grid_points);
    Points grid(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) grid(i, 0) = c.grid_lo + (c.grid_hi - c.grid_lo) * i / (n - 1);
    std::vector<double> sv(static_cast<std::size_t>(n), c.s), tv(static_cast<std::size_t>(n), c.t);
    Points learned = aux.forward(Tensor::from_points(grid), sv, tv).to_points();

    oracle::AffineGenerator affine{Mat::Constant(1, 1, c.W), Vec::Constant(1, c.b)};
    auto q = oracle::affine_cosim_marginal(affine, oracle::gaussian(1, 1.0), vp, c.s, c.t);
    auto target = oracle::fixed_point_f([q](const Vec& x) { return q.score(x); },
                                        [](const Vec& x) { return Vec(-x); }, c.coef);
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double f = target(Vec::Constant(1, grid(i, 0)))(0);
        r.grid.push_back(grid(i, 0));
        r.learned.push_back(learned(i, 0));
        r.target.push_back(f);
        num += (learned(i, 0) - f) * (learned(i, 0) - f);
        den += f * f;
    }
    r.rel_l2 = std::sqrt(num / den);
    return r;
}

Tensor sivi_phi_reference(const StageModels& m, const StageBatch& b, const SdeScheme& scheme) {
    Points xt = distill::sample_mixing(b.x0, b.t, b.eps_t, scheme);
    auto tr = distill::sample_transition(m.generator, Tensor::from_points(xt), b.s, b.t, scheme, b.eps_s);
    Tensor S = m.teacher(tr.x_s, b.s);
    Tensor f = m.aux(tr.x_s, b.s, b.t);
    Tensor cs = distill::cond_score(tr.x_s, tr.mean, b.s, scheme);
    Tensor gap_teacher = nd::sub(S, cs), gap_aux = nd::sub(f, cs);
    Tensor diff = nd::sub(nd::mul(gap_teacher, gap_teacher), nd::mul(gap_aux, gap_aux));
    return nd::scale(nd::sum(diff), 0.5 / static_cast<double>(b.x0.rows()));
}

Tensor sivi_psi_reference(const StageModels& m, const StageBatch& b, const SdeScheme& scheme) {
    Points xt = distill::sample_mixing(b.x0, b.t, b.eps_t, scheme);
    auto tr = distill::sample_transition(m.generator, Tensor::from_points(xt), b.s, b.t, scheme, b.eps_s);
    Tensor x_s = tr.x_s.detach();
    Tensor cs = distill::cond_score(x_s, tr.mean.detach(), b.s, scheme);
    Tensor r = nd::sub(m.aux(x_s, b.s, b.t), cs);
    return nd::scale(nd::sq_norm(r), 0.5 / static_cast<double>(b.x0.rows()));
}

ReductionResult sivi_reduction(std::uint64_t seed, int batch_size) {
    const auto ve = SdeScheme::ve();
    Rng rng(seed);
    models::NetConfig cfg;
    models::DenoiserNet teacher(cfg, ve), gen(cfg, ve), other(cfg, ve);
    teacher.init(rng, false);
    gen.init(rng, false);
    other.init(rng, false);
    auto aux = models::AuxNet::from_teacher(other);
    teacher.set_trainable(false);

    Dataset data(oracle::ring().sample(1000, rng));
    StageBatch b = distill::draw_stage_batch(data, batch_size, TimeSchedule{}, rng);
    StageModels m{gen.as_generator(),
                  [&aux](const Tensor& x, std::span<const double> s, std::span<const double> t) {
                      return aux.forward(x, s, t);
                  },
                  teacher.as_score()};

    ReductionResult r;
    aux.set_trainable(false);
    gen.set_trainable(true);
    auto gp = gen.parameters();
    r.phi = compare(loss_grads(gp, distill::phi_loss(m, b, ve, 0.5)), loss_grads(gp, sivi_phi_reference(m, b, ve)));

    gen.set_trainable(false);
    aux.set_trainable(true);
    auto ap = aux.parameters();
    r.psi = compare(loss_grads(ap, distill::psi_loss(m, b, ve, 0.5)), loss_grads(ap, sivi_psi_reference(m, b, ve)));
    aux.set_trainable(false);
    return r;
}

EquilibriumResult phi_equilibrium(std::uint64_t seed, int batch_size) {
    const auto vp = SdeScheme::vp();
    Rng rng(seed);
    Tensor W(nd::Shape{1, 1}, {1.0}, true);
    Tensor bias(nd::Shape{1}, {0.0}, true);
    models::GeneratorFn G = [&](const Tensor& x, std::span<const double>) {
        return nd::add(nd::matmul(x, W), bias);
    };
    // With G = identity the transition marginal is N(0, 1) = p_s, so the
    // coef = 1 equilibrium is beta (-x) + (1 - beta) (-x) = -x.
    models::AuxFn f = [](const Tensor& x, std::span<const double>, std::span<const double>) {
        return nd::scale(x, -1.0);
    };
    StageModels m{G, f, minus_x()};
    Dataset data(oracle::gaussian(1, 1.0).sample(batch_size, rng));
    StageBatch b = distill::draw_stage_batch(data, batch_size, TimeSchedule::for_scheme(vp), rng);
    std::vector<Tensor> params{W, bias};
    auto g = loss_grads(params, distill::phi_loss(m, b, vp, 1.2));
    EquilibriumResult r;
    for (const auto& v : g)
        for (double x : v) r.max_abs_grad = std::max(r.max_abs_grad, std::abs(x));
    return r;
}

}  // namespace cosim::theory
