#include "cosim/distill.hpp"

#include <cmath>
#include <limits>

namespace cosim::distill {

std::string to_string(WeightMode m) {
    switch (m) {
        case WeightMode::Unit: return "unit";
        case WeightMode::Normalized: return "normalized";
        case WeightMode::Denoiser: return "denoiser";
    }
    return "unit";
}

WeightMode parse_weight_mode(const std::string& s) {
    if (s == "unit") return WeightMode::Unit;
    if (s == "normalized") return WeightMode::Normalized;
    if (s == "denoiser") return WeightMode::Denoiser;
    throw ValidationError("unknown weight mode '" + s + "' (expected unit, normalized or denoiser)");
}

void DistillConfig::validate() const {
    if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
    if (!(coef > 0.0)) throw ValidationError("coef must be positive");
    if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
    if (iterations < 0) throw ValidationError("iterations must be >= 0");
    if (!(ema_halflife > 0.0)) throw ValidationError("EMA half-life must be positive");
    schedule.validate();
}

// EMA ------------------------------------------------------------------------------

double EmaState::decay_for(double batch_size, double half_life_samples) {
    return std::pow(0.5, batch_size / half_life_samples);
}

EmaState EmaState::from(std::span<const Tensor> live, double decay) {
    EmaState e;
    e.decay = decay;
    for (const auto& p : live) e.shadow.emplace_back(p.data().begin(), p.data().end());
    return e;
}

void ema_update(EmaState& state, std::span<const Tensor> live) {
    if (state.shadow.size() != live.size()) throw nd::ShapeError("ema_update: parameter count mismatch");
    const double d = state.decay;
    for (std::size_t p = 0; p < live.size(); ++p) {
        auto v = live[p].data();
        auto& sh = state.shadow[p];
        if (sh.size() != v.size()) throw nd::ShapeError("ema_update: shape mismatch");
        for (std::size_t i = 0; i < v.size(); ++i) sh[i] = d * sh[i] + (1.0 - d) * v[i];
    }
}

void ema_copy_to(const EmaState& state, std::span<Tensor> dst) {
    if (state.shadow.size() != dst.size()) throw nd::ShapeError("ema_copy_to: parameter count mismatch");
    for (std::size_t p = 0; p < dst.size(); ++p) {
        auto d = dst[p].data_mut();
        if (d.size() != state.shadow[p].size()) throw nd::ShapeError("ema_copy_to: shape mismatch");
        std::copy(state.shadow[p].begin(), state.shadow[p].end(), d.begin());
    }
}

// Sampling ---------------------------------------------------------------------------

Points sample_mixing(const Points& x0, std::span<const double> t, const Points& eps, const SdeScheme& scheme) {
    return perturb(x0, t, eps, scheme);
}

Points sample_mixing(const Points& x0, std::span<const double> t, const SdeScheme& scheme, Rng& rng) {
    return perturb(x0, t, standard_normal_points(rng, x0.rows(), x0.cols()), scheme);
}

namespace {

void check_order(std::span<const double> s, std::span<const double> t) {
    if (s.size() != t.size()) throw nd::ShapeError("s and t batches differ in length");
    for (std::size_t i = 0; i < s.size(); ++i)
        if (!(s[i] < t[i]))
            throw ValidationError("transition requires s < t (row " + std::to_string(i) + ")");
}

std::vector<double> a_of(std::span<const double> s, const SdeScheme& scheme) {
    std::vector<double> a(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) a[i] = sde_coeffs(scheme, s[i]).a;
    return a;
}

}  // namespace

Transition sample_transition(const GeneratorFn& G, const Tensor& x_t, std::span<const double> s,
                             std::span<const double> t, const SdeScheme& scheme, const Points& eps) {
    check_order(s, t);
    if (eps.rows() != static_cast<Eigen::Index>(x_t.rows()) || eps.cols() != static_cast<Eigen::Index>(x_t.cols()))
        throw nd::ShapeError("sample_transition: noise shape does not match x_t");
    std::vector<double> a(s.size());
    Points noise(eps.rows(), eps.cols());
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto c = sde_coeffs(scheme, s[i]);
        a[i] = c.a;
        noise.row(static_cast<Eigen::Index>(i)) = c.sigma * eps.row(static_cast<Eigen::Index>(i));
    }
    Tensor mean = nd::scale_rows(G(x_t, t), a);
    Tensor x_s = nd::add(mean, Tensor::from_points(noise));
    return {x_s, mean, eps};
}

Transition sample_transition(const GeneratorFn& G, const Tensor& x_t, std::span<const double> s,
                             std::span<const double> t, const SdeScheme& scheme, Rng& rng) {
    Points eps = standard_normal_points(rng, static_cast<Eigen::Index>(x_t.rows()),
                                        static_cast<Eigen::Index>(x_t.cols()));
    return sample_transition(G, x_t, s, t, scheme, eps);
}

Tensor cond_score(const Tensor& x_s, const Tensor& mean, std::span<const double> s, const SdeScheme& scheme) {
    std::vector<double> neg_inv_var(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double sig = sde_coeffs(scheme, s[i]).sigma;
        if (!(sig > 0.0)) throw ValidationError("cond_score: sigma(s) = 0");
        neg_inv_var[i] = -1.0 / (sig * sig);
    }
    return nd::scale_rows(nd::sub(x_s, mean), neg_inv_var);
}

Tensor cond_score(const GeneratorFn& G, const Tensor& x_s, const Tensor& x_t, std::span<const double> s,
                  std::span<const double> t, const SdeScheme& scheme) {
    check_order(s, t);
    Tensor mean = nd::scale_rows(G(x_t, t), a_of(s, scheme));
    return cond_score(x_s, mean, s, scheme);
}

// Stage losses -------------------------------------------------------------------------

StageBatch draw_stage_batch(const Dataset& data, Eigen::Index n, const TimeSchedule& schedule, Rng& rng) {
    StageBatch b;
    b.x0 = data.sample_batch(n, rng);
    b.s.resize(static_cast<std::size_t>(n));
    b.t.resize(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < b.s.size(); ++i) {
        auto p = sample_time_pair(schedule, rng);
        b.s[i] = p.s;
        b.t[i] = p.t;
    }
    b.eps_t = standard_normal_points(rng, n, data.dim());
    b.eps_s = standard_normal_points(rng, n, data.dim());
    return b;
}

std::vector<double> stage_weights(WeightMode mode, std::span<const double> s, const SdeScheme& scheme) {
    std::vector<double> w(s.size(), 1.0);
    if (mode == WeightMode::Denoiser) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto c = sde_coeffs(scheme, s[i]);
            const double s2 = c.sigma * c.sigma;
            w[i] = s2 * s2 / (c.a * c.a);
        }
    }
    return w;
}

namespace {

struct StageTerms {
    Tensor u;       // S - f
    Tensor teacher; // S(x_s; s)
    Tensor cs;      // conditional score
};

StageTerms stage_terms(const StageModels& m, const Tensor& x_s, const Tensor& mean, const StageBatch& b,
                       const SdeScheme& scheme) {
    Tensor S = m.teacher(x_s, b.s);
    Tensor f = m.aux(x_s, b.s, b.t);
    return {nd::sub(S, f), S, cond_score(x_s, mean, b.s, scheme)};
}

Tensor weighted_mean_rows(const Tensor& per_elem, std::vector<double> w) {
    const double inv_n = 1.0 / static_cast<double>(w.size());
    for (auto& v : w) v *= inv_n;
    return nd::sum(nd::scale_rows(per_elem, w));
}

}  // namespace

Tensor phi_loss(const StageModels& m, const StageBatch& b, const SdeScheme& scheme, double alpha,
                WeightMode weights) {
    Points xt = sample_mixing(b.x0, b.t, b.eps_t, scheme);
    auto tr = sample_transition(m.generator, Tensor::from_points(xt), b.s, b.t, scheme, b.eps_s);
    auto terms = stage_terms(m, tr.x_s, tr.mean, b, scheme);
    Tensor bracket = nd::sub(nd::mul(terms.u, nd::sub(terms.teacher, terms.cs)),
                             nd::scale(nd::mul(terms.u, terms.u), alpha));
    auto w = stage_weights(weights, b.s, scheme);
    if (weights == WeightMode::Normalized) {
        // Per-sample bracket values, detached.
        const std::size_t d = bracket.cols();
        double total = 0.0;
        for (std::size_t i = 0; i < bracket.rows(); ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < d; ++j) row += bracket.at(i, j);
            total += std::abs(row);
        }
        const double scale = total / static_cast<double>(bracket.rows());
        if (scale > 0.0)
            for (auto& v : w) v /= scale;
    }
    return weighted_mean_rows(bracket, std::move(w));
}

Tensor psi_loss(const StageModels& m, const StageBatch& b, const SdeScheme& scheme, double coef,
                WeightMode weights) {
    Points xt = sample_mixing(b.x0, b.t, b.eps_t, scheme);
    auto tr = sample_transition(m.generator, Tensor::from_points(xt), b.s, b.t, scheme, b.eps_s);
    Tensor x_s = tr.x_s.detach();
    auto terms = stage_terms(m, x_s, tr.mean.detach(), b, scheme);
    Tensor teacher = terms.teacher.detach();
    Tensor cs = terms.cs.detach();
    Tensor bracket = nd::add(nd::mul(terms.u, nd::sub(cs, teacher)), nd::scale(nd::mul(terms.u, terms.u), coef));
    return weighted_mean_rows(bracket, stage_weights(weights, b.s, scheme));
}

// Training -----------------------------------------------------------------------------

DistillResult train_distill(const DistillConfig& cfg, const models::DenoiserNet& teacher, const Dataset& data,
                            const TrainHooks& hooks) {
    cfg.validate();
    if (data.dim() != teacher.config().data_dim)
        throw ValidationError("train_distill: dataset dimension does not match teacher");
    const SdeScheme& scheme = teacher.scheme();

    models::DenoiserNet frozen = teacher.clone();
    frozen.set_trainable(false);
    DistillResult res{teacher.clone(), teacher.clone(), models::AuxNet::from_teacher(teacher), 0, 0, {}};
    res.generator.set_trainable(false);
    res.ema.set_trainable(false);
    res.aux.set_trainable(false);

    auto gen_params = res.generator.parameters();
    auto aux_params = res.aux.parameters();
    auto ema_params = res.ema.parameters();
    nd::AdamState gen_adam(gen_params, cfg.adam);
    nd::AdamState aux_adam(aux_params, cfg.adam);
    EmaState ema = EmaState::from(gen_params, EmaState::decay_for(cfg.batch_size, cfg.ema_halflife));

    StageModels m{res.generator.as_generator(), res.aux.as_aux(), frozen.as_score()};
    Rng rng(cfg.seed);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    double last_phi = nan;
    double last_psi = nan;

    for (int n = 0; n < cfg.iterations; ++n) {
        StageBatch b = draw_stage_batch(data, cfg.batch_size, cfg.schedule, rng);
        const bool phi_step = (n % 2) == 1;
        if (phi_step) {
            res.generator.set_trainable(true);
            Tensor loss = phi_loss(m, b, scheme, cfg.alpha, cfg.weights);
            last_phi = loss.item();
            if (!std::isfinite(last_phi))
                throw NumericalError("distillation diverged at iteration " + std::to_string(n) +
                                     " (generator stage)");
            nd::zero_grads(gen_params);
            nd::backward(loss);
            res.generator.set_trainable(false);
            nd::adam_step(gen_params, gen_adam, cfg.lr);
            ema_update(ema, gen_params);
            ++res.phi_updates;
        } else {
            res.aux.set_trainable(true);
            Tensor loss = psi_loss(m, b, scheme, cfg.coef, cfg.weights);
            last_psi = loss.item();
            if (!std::isfinite(last_psi))
                throw NumericalError("distillation diverged at iteration " + std::to_string(n) +
                                     " (auxiliary stage)");
            nd::zero_grads(aux_params);
            nd::backward(loss);
            res.aux.set_trainable(false);
            nd::adam_step(aux_params, aux_adam, cfg.lr);
            ++res.psi_updates;
        }
        if (hooks.log_every > 0 && ((n + 1) % hooks.log_every == 0 || n + 1 == cfg.iterations)) {
            ema_copy_to(ema, ema_params);
            LogRow row{n + 1, last_phi, last_psi, std::nullopt};
            if (hooks.eval_w2) row.w2 = hooks.eval_w2(res.ema);
            res.log.push_back(row);
            if (hooks.on_log) hooks.on_log(row);
        }
    }
    ema_copy_to(ema, ema_params);
    return res;
}

}  // namespace cosim::distill
