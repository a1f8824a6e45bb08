#include "cosim/teacher.hpp"

#include <cmath>

namespace cosim::teacher {

DsmBatch draw_dsm_batch(const Dataset& data, Eigen::Index n, const TimeSchedule& schedule, Rng& rng) {
    DsmBatch b;
    b.x0 = data.sample_batch(n, rng);
    b.t.resize(static_cast<std::size_t>(n));
    for (auto& t : b.t) t = sample_s(schedule, uniform01(rng));
    b.noise = standard_normal_points(rng, n, data.dim());
    return b;
}

double dsm_weight(const SdeScheme& scheme, double t, double sigma_data) {
    const auto c = precond_coeffs(scheme, t, sigma_data);
    if (!(c.c_out > 0.0)) throw ValidationError("dsm_weight: undefined at sigma(t) = 0");
    return c.a * c.a / (c.c_out * c.c_out);
}

nd::Tensor dsm_loss(const models::GeneratorFn& denoiser, const DsmBatch& batch, const SdeScheme& scheme,
                    double sigma_data) {
    const auto n = batch.x0.rows();
    if (n == 0) throw ValidationError("dsm_loss: empty batch");
    Points xt = perturb(batch.x0, batch.t, batch.noise, scheme);
    nd::Tensor x0 = nd::Tensor::from_points(batch.x0);
    nd::Tensor resid = nd::sub(denoiser(nd::Tensor::from_points(xt), batch.t), x0);
    std::vector<double> w(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = dsm_weight(scheme, batch.t[i], sigma_data) / static_cast<double>(n);
    return nd::sum(nd::scale_rows(nd::mul(resid, resid), w));
}

TeacherCheckpoint train_teacher(const TeacherConfig& cfg, const SdeScheme& scheme, const Dataset& data,
                                const ProgressFn& progress, int progress_every) {
    if (data.size() == 0) throw ValidationError("train_teacher: empty dataset");
    if (data.dim() != cfg.net.data_dim)
        throw ValidationError("train_teacher: dataset dimension does not match network");
    if (cfg.iterations < 0 || cfg.batch_size < 1) throw ValidationError("train_teacher: bad iteration/batch");
    cfg.schedule.validate();

    Rng rng(cfg.seed);
    TeacherCheckpoint ckpt{models::DenoiserNet(cfg.net, scheme), scheme, cfg.iterations, cfg.seed, 0.0};
    ckpt.net.init(rng, /*zero_last=*/true);
    ckpt.net.set_trainable(true);
    auto params = ckpt.net.parameters();
    nd::AdamState adam(params, cfg.adam);
    auto denoise = ckpt.net.as_generator();

    double running = 0.0;
    for (int it = 0; it < cfg.iterations; ++it) {
        auto batch = draw_dsm_batch(data, cfg.batch_size, cfg.schedule, rng);
        nd::Tensor loss = dsm_loss(denoise, batch, scheme, cfg.net.sigma_data);
        const double lv = loss.item();
        if (!std::isfinite(lv))
            throw NumericalError("teacher training diverged at iteration " + std::to_string(it));
        nd::zero_grads(params);
        nd::backward(loss);
        nd::adam_step(params, adam, cfg.lr);
        running = it == 0 ? lv : 0.99 * running + 0.01 * lv;
        if (progress && progress_every > 0 && (it + 1) % progress_every == 0) progress(it + 1, running);
    }
    ckpt.net.set_trainable(false);
    ckpt.final_loss = running;
    return ckpt;
}

SampleBatch reverse_sde_sample(const models::ScoreFn& score, const SdeScheme& scheme, Eigen::Index dim,
                               int n_steps, Eigen::Index n_samples, std::uint64_t seed, double rho) {
    if (n_steps < 1) throw ValidationError("reverse_sde_sample: n_steps must be >= 1");
    SampleBatch out;
    out.seed = seed;
    out.provenance = "teacher";
    out.points.resize(n_samples, dim);
    if (n_samples == 0) return out;

    Rng rng(seed);
    const auto grid = edm_grid(TimeSchedule::for_scheme(scheme, rho), n_steps);
    Points x = prior_std(scheme) * standard_normal_points(rng, n_samples, dim);
    std::vector<double> tv(static_cast<std::size_t>(n_samples));
    for (std::size_t i = 0; i + 1 < grid.times.size(); ++i) {
        const double t = grid.times[i];
        const double h = t - grid.times[i + 1];
        std::fill(tv.begin(), tv.end(), t);
        Points sc = score(nd::Tensor::from_points(x), tv).to_points();
        const auto [f, g2] = sde_drift_diffusion(scheme, t);
        Points z = standard_normal_points(rng, n_samples, dim);
        x = x - (f * x - g2 * sc) * h + std::sqrt(g2 * h) * z;
    }
    out.points = std::move(x);
    return out;
}

}  // namespace cosim::teacher
