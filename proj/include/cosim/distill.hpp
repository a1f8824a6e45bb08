#pragma once

// Continuous semi-implicit distillation: the mixing and transition samplers,
// the Gaussian conditional score, the two alternating stage losses and the
// training loop with an EMA of the generator.

#include "cosim/dataset.hpp"
#include "cosim/diffusion.hpp"
#include "cosim/models.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace cosim::distill {

using models::AuxFn;
using models::GeneratorFn;
using models::ScoreFn;
using nd::Tensor;

/// Per-sample stage weights w1(s), w2(s).
enum class WeightMode {
    Unit,        // w = 1
    Normalized,  // generator loss divided by the detached mean |bracket|
    Denoiser,    // w = sigma(s)^4 / a(s)^2: score residuals measured in denoiser units
};

std::string to_string(WeightMode m);
WeightMode parse_weight_mode(const std::string& s);

struct DistillConfig {
    double alpha = 1.2;  // generator-stage quadratic coefficient
    double coef = 1.0;   // auxiliary-stage quadratic coefficient, alpha (1 + lambda)
    double lr = 2e-5;
    int batch_size = 128;
    int iterations = 20000;
    double ema_halflife = 50000.0;  // in samples
    std::uint64_t seed = 0;
    TimeSchedule schedule;
    WeightMode weights = WeightMode::Unit;
    nd::AdamOptions adam{0.0, 0.999, 1e-8};

    void validate() const;
};

// EMA ------------------------------------------------------------------------------

struct EmaState {
    std::vector<std::vector<double>> shadow;
    double decay = 0.0;

    /// 0.5^(batch / half_life_samples)
    static double decay_for(double batch_size, double half_life_samples);
    static EmaState from(std::span<const Tensor> live, double decay);
};

/// shadow <- decay * shadow + (1 - decay) * live
void ema_update(EmaState& state, std::span<const Tensor> live);
/// Writes the shadow values into `dst`.
void ema_copy_to(const EmaState& state, std::span<Tensor> dst);

// Sampling ---------------------------------------------------------------------------

/// x_t = a(t) x0 + sigma(t) eps with fresh eps per element; untracked.
Points sample_mixing(const Points& x0, std::span<const double> t, const SdeScheme& scheme, Rng& rng);
Points sample_mixing(const Points& x0, std::span<const double> t, const Points& eps, const SdeScheme& scheme);

struct Transition {
    Tensor x_s;   // a(s) G(x_t, t) + sigma(s) eps
    Tensor mean;  // a(s) G(x_t, t)
    Points eps;
};

/// Reparameterized draw from q_phi(x_s | x_t; s, t). Gradients reach G's
/// parameters through x_s whenever G tracks them. Throws unless s < t.
Transition sample_transition(const GeneratorFn& G, const Tensor& x_t, std::span<const double> s,
                             std::span<const double> t, const SdeScheme& scheme, const Points& eps);
Transition sample_transition(const GeneratorFn& G, const Tensor& x_t, std::span<const double> s,
                             std::span<const double> t, const SdeScheme& scheme, Rng& rng);

/// grad_{x_s} log N(x_s; mean, sigma(s)^2 I) = -(x_s - mean) / sigma(s)^2.
Tensor cond_score(const Tensor& x_s, const Tensor& mean, std::span<const double> s, const SdeScheme& scheme);
/// Same, with mean = a(s) G(x_t, t) recomputed from the generator.
Tensor cond_score(const GeneratorFn& G, const Tensor& x_s, const Tensor& x_t, std::span<const double> s,
                  std::span<const double> t, const SdeScheme& scheme);

// Stage losses -------------------------------------------------------------------------

/// All randomness needed for one training step.
struct StageBatch {
    Points x0;
    std::vector<double> s;
    std::vector<double> t;
    Points eps_t;  // mixing noise
    Points eps_s;  // transition noise
};

StageBatch draw_stage_batch(const Dataset& data, Eigen::Index n, const TimeSchedule& schedule, Rng& rng);

struct StageModels {
    GeneratorFn generator;  // G_phi
    AuxFn aux;              // f_psi
    ScoreFn teacher;        // S_theta*
};

/// Weights w(s_i) for the batch under the given mode (Normalized starts from 1).
std::vector<double> stage_weights(WeightMode mode, std::span<const double> s, const SdeScheme& scheme);

/// mean_i w1(s_i) { u^T [S - cs] - alpha ||u||^2 },  u = S(x_s; s) - f(x_s; s, t).
/// x_s keeps its dependence on the generator; gradients also pass through the
/// inputs of the (frozen) teacher and auxiliary networks.
Tensor phi_loss(const StageModels& m, const StageBatch& b, const SdeScheme& scheme, double alpha,
                WeightMode weights = WeightMode::Unit);

/// mean_i w2(s_i) { u^T [cs - S] + coef ||u||^2 } with x_s detached; only f
/// carries gradients.
Tensor psi_loss(const StageModels& m, const StageBatch& b, const SdeScheme& scheme, double coef,
                WeightMode weights = WeightMode::Unit);

// Training -----------------------------------------------------------------------------

struct LogRow {
    int iteration;
    double phi_loss;  // NaN until the first generator step
    double psi_loss;
    std::optional<double> w2;
};

struct DistillResult {
    models::GeneratorNet generator;
    models::GeneratorNet ema;
    models::AuxNet aux;
    int phi_updates = 0;
    int psi_updates = 0;
    std::vector<LogRow> log;
};

struct TrainHooks {
    int log_every = 0;  // 0 disables logging
    /// Optional metric evaluated on the EMA generator at each log point.
    std::function<double(const models::GeneratorNet&)> eval_w2;
    std::function<void(const LogRow&)> on_log;
};

/// Alternating optimization starting at n = 0: even n updates the auxiliary
/// field, odd n updates the generator (followed by an EMA update). Both start
/// from the teacher; the auxiliary t-embedding starts at zero.
/// Throws NumericalError naming the iteration and stage on a non-finite loss.
DistillResult train_distill(const DistillConfig& cfg, const models::DenoiserNet& teacher, const Dataset& data,
                            const TrainHooks& hooks = {});

}  // namespace cosim::distill
