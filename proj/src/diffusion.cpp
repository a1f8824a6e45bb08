#include "cosim/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace cosim {

std::string to_string(SdeVariant v) { return v == SdeVariant::VP ? "vp" : "ve"; }

SdeVariant parse_sde_variant(const std::string& s) {
    if (s == "vp" || s == "VP") return SdeVariant::VP;
    if (s == "ve" || s == "VE") return SdeVariant::VE;
    throw ValidationError("unknown SDE scheme '" + s + "' (expected vp or ve)");
}

void SdeScheme::validate() const {
    if (!(delta > 0.0)) throw ValidationError("scheme: delta must be positive");
    if (!(T > delta)) throw ValidationError("scheme: T must exceed delta");
}

SdeCoeffs sde_coeffs(const SdeScheme& scheme, double t) {
    if (!(t >= 0.0 && t <= scheme.T))
        throw ValidationError("sde_coeffs: t = " + std::to_string(t) + " outside [0, " +
                              std::to_string(scheme.T) + "]");
    if (scheme.variant == SdeVariant::VE) return {1.0, t};
    return {std::exp(-t), std::sqrt(-std::expm1(-2.0 * t))};
}

std::pair<double, double> sde_drift_diffusion(const SdeScheme& scheme, double t) {
    // VE: sigma^2 = t^2 -> g^2 = d(sigma^2)/dt = 2t.  VP: dx = -x dt + sqrt(2) dB.
    if (scheme.variant == SdeVariant::VE) return {0.0, 2.0 * t};
    return {-1.0, 2.0};
}

Points perturb(const Points& x0, std::span<const double> t, const Points& eps, const SdeScheme& scheme) {
    if (eps.rows() != x0.rows() || eps.cols() != x0.cols() ||
        static_cast<Eigen::Index>(t.size()) != x0.rows())
        throw ValidationError("perturb: x0, eps and t sizes disagree");
    Points out(x0.rows(), x0.cols());
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
        auto c = sde_coeffs(scheme, t[static_cast<std::size_t>(i)]);
        out.row(i) = c.a * x0.row(i) + c.sigma * eps.row(i);
    }
    return out;
}

Points perturb(const Points& x0, double t, const Points& eps, const SdeScheme& scheme) {
    std::vector<double> ts(static_cast<std::size_t>(x0.rows()), t);
    return perturb(x0, ts, eps, scheme);
}

// Schedule -------------------------------------------------------------------

void TimeSchedule::validate() const {
    if (!(sigma_min > 0.0)) throw ValidationError("schedule: sigma_min must be positive");
    if (!(sigma_max > sigma_min)) throw ValidationError("schedule: sigma_min must be below sigma_max");
    if (!(rho >= 1.0)) throw ValidationError("schedule: rho must be >= 1");
    if (R < 1) throw ValidationError("schedule: R must be >= 1");
}

double TimeSchedule::warp(double r) const {
    const double lo = std::pow(sigma_min, 1.0 / rho);
    const double hi = std::pow(sigma_max, 1.0 / rho);
    double s = std::pow(lo + r * (hi - lo), rho);
    // Pin the endpoints exactly; the pow round trip is off by an ulp or two.
    if (r <= 0.0) s = sigma_min;
    if (r >= 1.0) s = sigma_max;
    return s;
}

double TimeSchedule::unwarp(double s) const {
    const double lo = std::pow(sigma_min, 1.0 / rho);
    const double hi = std::pow(sigma_max, 1.0 / rho);
    return (std::pow(s, 1.0 / rho) - lo) / (hi - lo);
}

GapDraw GapDraw::sample(Rng& rng, int R) {
    if (R < 1) throw ValidationError("gap draw: R must be >= 1");
    std::bernoulli_distribution b(0.5);
    std::uniform_int_distribution<int> k(1, R);
    GapDraw d{};
    d.bernoulli = b(rng);
    d.u = uniform01(rng);
    d.k = k(rng);
    return d;
}

double sample_s(const TimeSchedule& schedule, double r_s) {
    return schedule.warp(std::clamp(r_s, 0.0, 1.0));
}

std::pair<double, double> sample_t_given_s(const TimeSchedule& schedule, double r_s, const GapDraw& draw) {
    if (schedule.R < 1) throw ValidationError("schedule: R must be >= 1");
    if (draw.k < 1 || draw.k > schedule.R) throw ValidationError("gap draw: k outside {1..R}");
    const double b = draw.bernoulli ? 1.0 : 0.0;
    const double gamma = b * draw.u / static_cast<double>(draw.k) + (1.0 - b);
    const double r_t = std::min(r_s + gamma, 1.0);
    return {schedule.warp(r_t), r_t};
}

TimePair sample_time_pair(const TimeSchedule& schedule, Rng& rng) {
    for (;;) {
        const double r_s = uniform01(rng);
        const double s = sample_s(schedule, r_s);
        const auto [t, r_t] = sample_t_given_s(schedule, r_s, GapDraw::sample(rng, schedule.R));
        if (t > s) return {s, t, r_s, r_t};
    }
}

// Inference grid -------------------------------------------------------------

void TimeGrid::validate() const {
    if (times.size() < 2) throw ValidationError("time grid needs at least two points");
    for (std::size_t i = 1; i < times.size(); ++i) {
        const bool interior_pair = i >= 2 && i + 1 < times.size();
        const bool ok = times[i] < times[i - 1] ||
                        (repeated_interior && interior_pair && times[i] == times[i - 1]);
        if (!ok)
            throw ValidationError("time grid must be strictly descending (violated at index " +
                                  std::to_string(i) + ")");
    }
}

TimeGrid edm_grid(const TimeSchedule& schedule, int K, double scale) {
    if (K < 1) throw ValidationError("edm_grid: K must be >= 1");
    if (!(scale > 0.0)) throw ValidationError("edm_grid: scale must be positive");
    TimeGrid g;
    g.times.resize(static_cast<std::size_t>(K) + 1);
    g.times.front() = schedule.sigma_max;
    g.times.back() = schedule.sigma_min;
    for (int i = 1; i < K; ++i) {
        const double r = std::pow(static_cast<double>(K - i) / K, scale);
        g.times[static_cast<std::size_t>(i)] = schedule.warp(r);
    }
    g.validate();
    return g;
}

TimeGrid repeat_mid_grid(const TimeSchedule& schedule, int K, double t_mid) {
    if (K < 1) throw ValidationError("repeat_mid_grid: K must be >= 1");
    if (K > 1 && !(t_mid > schedule.sigma_min && t_mid < schedule.sigma_max))
        throw ValidationError("repeat_mid_grid: t_mid must lie strictly inside (delta, T)");
    TimeGrid g;
    g.repeated_interior = true;
    g.times.assign(static_cast<std::size_t>(K) + 1, t_mid);
    g.times.front() = schedule.sigma_max;
    g.times.back() = schedule.sigma_min;
    g.validate();
    return g;
}

// Preconditioning --------------------------------------------------------------

PrecondCoeffs precond_coeffs(const SdeScheme& scheme, double t, double sigma_data) {
    const auto [a, sigma] = sde_coeffs(scheme, t);
    const double sd2a2 = sigma_data * sigma_data * a * a;
    const double denom = sigma * sigma + sd2a2;
    PrecondCoeffs c{};
    c.sigma_data = sigma_data;
    c.a = a;
    c.c_skip = sd2a2 / denom;
    c.c_out = std::sqrt(sd2a2 * sigma * sigma / denom);
    c.c_in = 1.0 / std::sqrt(denom);
    return c;
}

double prior_std(const SdeScheme& scheme) {
    return scheme.variant == SdeVariant::VE ? sde_coeffs(scheme, scheme.T).sigma : 1.0;
}

}  // namespace cosim
