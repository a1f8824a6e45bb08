#pragma once

// Forward-process coefficients, the continuous (s, t) training schedule, the
// inference time grid and the denoiser preconditioning.

#include "cosim/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace cosim {

enum class SdeVariant { VP, VE };

std::string to_string(SdeVariant v);
SdeVariant parse_sde_variant(const std::string& s);

struct SdeCoeffs {
    double a;
    double sigma;
};

/// x_t = a(t) x_0 + sigma(t) eps on [0, T]; delta is the early-stop time.
///   VP: a = exp(-t), sigma = sqrt(1 - exp(-2t))
///   VE: a = 1,       sigma = t
struct SdeScheme {
    SdeVariant variant = SdeVariant::VE;
    double delta = 0.002;
    double T = 80.0;

    static SdeScheme ve(double delta = 0.002, double T = 80.0) { return {SdeVariant::VE, delta, T}; }
    static SdeScheme vp(double delta = 1e-3, double T = 8.0) { return {SdeVariant::VP, delta, T}; }

    void validate() const;
    bool operator==(const SdeScheme&) const = default;
};

/// Throws ValidationError for t outside [0, T].
SdeCoeffs sde_coeffs(const SdeScheme& scheme, double t);

/// Drift/diffusion of the forward SDE dx = f(t) x dt + g(t) dB (both schemes
/// have linear drift): returns {f(t), g(t)^2}.
std::pair<double, double> sde_drift_diffusion(const SdeScheme& scheme, double t);

/// a(t) x0 + sigma(t) eps, row-wise when `t` holds one time per row.
Points perturb(const Points& x0, std::span<const double> t, const Points& eps, const SdeScheme& scheme);
Points perturb(const Points& x0, double t, const Points& eps, const SdeScheme& scheme);

/// Joint law pi(s) pi(t|s) over [sigma_min, sigma_max].
struct TimeSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    double rho = 7.0;
    int R = 4;

    static TimeSchedule for_scheme(const SdeScheme& scheme, double rho = 7.0, int R = 4) {
        return {scheme.delta, scheme.T, rho, R};
    }
    void validate() const;
    /// Inverse CDF: (min^(1/rho) + r (max^(1/rho) - min^(1/rho)))^rho.
    double warp(double r) const;
    /// Inverse of warp on [sigma_min, sigma_max].
    double unwarp(double s) const;
};

/// The randomness behind one draw of t given s.
struct GapDraw {
    bool bernoulli;  // B ~ Bernoulli(1/2)
    double u;        // Uniform[0, 1]
    int k;           // uniform over {1, ..., R}

    static GapDraw sample(Rng& rng, int R);
};

struct TimePair {
    double s;
    double t;
    double r_s;
    double r_t;
};

double sample_s(const TimeSchedule& schedule, double r_s);

/// gamma = B u / k + (1 - B); r_t = min(r_s + gamma, 1); t = warp(r_t).
/// Returns {t, r_t}.
std::pair<double, double> sample_t_given_s(const TimeSchedule& schedule, double r_s, const GapDraw& draw);

/// Full (s, t) draw with s < t. Exact ties (a zero gap, probability zero but
/// reachable in floating point) are redrawn.
TimePair sample_time_pair(const TimeSchedule& schedule, Rng& rng);

/// Time points T = t_0 > ... > t_K = delta for multistep sampling.
struct TimeGrid {
    std::vector<double> times;
    /// Interior nodes may repeat (the t_1 = ... = t_{K-1} = t_mid layout).
    bool repeated_interior = false;

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    void validate() const;
};

/// EDM-style grid: interior node i uses r = ((K - i) / K)^scale warped by the
/// schedule, so scale > 1 pulls nodes toward delta.
TimeGrid edm_grid(const TimeSchedule& schedule, int K, double scale = 1.0);

/// [T, t_mid, ..., t_mid, delta] with K intervals.
TimeGrid repeat_mid_grid(const TimeSchedule& schedule, int K, double t_mid);

struct PrecondCoeffs {
    double c_skip;
    double c_out;
    double c_in;
    double sigma_data;
    double a;
};

inline constexpr double kSigmaData = 0.5;

/// c_skip = sd^2 a^2 / (sigma^2 + sd^2 a^2)
/// c_out  = sqrt(sd^2 sigma^2 a^2 / (sigma^2 + sd^2 a^2))
/// c_in   = 1 / sqrt(sd^2 a^2 + sigma^2)
/// With these coefficients c_skip x + c_out F estimates a(t) x0, so a clean-data
/// denoiser divides the combination by a(t). For VE a = 1 and nothing changes.
PrecondCoeffs precond_coeffs(const SdeScheme& scheme, double t, double sigma_data = kSigmaData);

/// Prior at T used to start reverse-time sampling: N(0, sigma(T)^2 I) for VE,
/// N(0, I) for VP.
double prior_std(const SdeScheme& scheme);

}  // namespace cosim
