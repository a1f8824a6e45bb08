#pragma once

// Denoising-score-matching pretraining of the teacher and the reverse-SDE
// reference sampler.

#include "cosim/dataset.hpp"
#include "cosim/diffusion.hpp"
#include "cosim/models.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace cosim::teacher {

struct DsmBatch {
    Points x0;
    std::vector<double> t;
    Points noise;
};

DsmBatch draw_dsm_batch(const Dataset& data, Eigen::Index n, const TimeSchedule& schedule, Rng& rng);

/// Per-noise-level loss weight a(t)^2 / c_out(t)^2, i.e. (sigma^2 + sd^2) / (sigma sd)^2
/// for VE.
double dsm_weight(const SdeScheme& scheme, double t, double sigma_data = kSigmaData);

/// mean_i w(t_i) || D(a x0_i + sigma eps_i, t_i) - x0_i ||^2
nd::Tensor dsm_loss(const models::GeneratorFn& denoiser, const DsmBatch& batch, const SdeScheme& scheme,
                    double sigma_data = kSigmaData);

struct TeacherConfig {
    models::NetConfig net;
    TimeSchedule schedule;
    int iterations = 50000;
    int batch_size = 256;
    double lr = 1e-3;
    nd::AdamOptions adam{0.9, 0.999, 1e-8};
    std::uint64_t seed = 0;
};

struct TeacherCheckpoint {
    models::DenoiserNet net;
    SdeScheme scheme;
    int iterations = 0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
};

/// Called every so often with (iteration, loss).
using ProgressFn = std::function<void(int, double)>;

/// Throws NumericalError on a non-finite loss.
TeacherCheckpoint train_teacher(const TeacherConfig& cfg, const SdeScheme& scheme, const Dataset& data,
                                const ProgressFn& progress = {}, int progress_every = 1000);

/// Euler-Maruyama on dx = [f x - g^2 score] dt + g dB from T down to delta over
/// the rho-warped grid, starting from the prior.
SampleBatch reverse_sde_sample(const models::ScoreFn& score, const SdeScheme& scheme, Eigen::Index dim,
                               int n_steps, Eigen::Index n_samples, std::uint64_t seed, double rho = 7.0);

}  // namespace cosim::teacher
