#pragma once

// Multistep sampling from a trained generator and the sample-based metrics
// used to evaluate it: empirical W2, Gaussian-kernel MMD and a Monte Carlo
// Fisher-gap estimate.

#include "cosim/dataset.hpp"
#include "cosim/diffusion.hpp"
#include "cosim/models.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace cosim::metrics {

/// Draws x_T from the prior, then for n = 1..K sets
/// x <- a(t_n) G(x, t_{n-1}) + sigma(t_n) eps. Exactly K generator calls.
/// Throws ValidationError unless the grid runs from T down to delta without
/// increasing (repeated interior nodes are allowed only when the grid says so).
SampleBatch multistep_sample(const models::GeneratorFn& G, const TimeGrid& grid, Eigen::Index n_samples,
                             Eigen::Index dim, const SdeScheme& scheme, std::uint64_t seed);

/// G(x_t, t) for x_t = a(t) x0 + sigma(t) eps drawn from the data.
Points consistency_pushforward(const models::GeneratorFn& G, const Points& x0, double t, const SdeScheme& scheme,
                               Rng& rng);

// Wasserstein-2 ------------------------------------------------------------------

enum class W2Mode { Auto, Exact, Sliced };

inline constexpr Eigen::Index kExactW2MaxN = 2048;
inline constexpr int kSlicedProjections = 128;

/// Optimal assignment for a square cost matrix (shortest augmenting paths).
/// Returns col_for_row.
std::vector<Eigen::Index> linear_assignment(const Mat& cost);

/// Exact W2 between equal-size uniform empirical measures.
double w2_exact(const Points& a, const Points& b);
/// Sliced W2: sqrt of the mean over random directions of the squared 1-D W2
/// between projected quantile functions. Any sizes.
double w2_sliced(const Points& a, const Points& b, int n_projections = kSlicedProjections,
                 std::uint64_t seed = 0);
/// 1-D W2 between sorted-quantile functions (sizes may differ).
double w2_1d(std::vector<double> a, std::vector<double> b);

/// Auto: exact for equal sizes up to kExactW2MaxN, sliced otherwise.
double w2_empirical(const Points& a, const Points& b, W2Mode mode = W2Mode::Auto);

// MMD -------------------------------------------------------------------------

struct MmdResult {
    double mmd2;       // unbiased estimate of the squared MMD (may be slightly negative)
    double se;         // standard error of the estimate
    double bandwidth;  // Gaussian kernel length scale h in exp(-|x-y|^2 / (2 h^2))
};

/// Median pairwise distance over the pooled sample (at most 1000 points used).
double median_heuristic(const Points& a, const Points& b);

/// bandwidth <= 0 selects the median heuristic.
MmdResult mmd(const Points& a, const Points& b, double bandwidth = 0.0);

// Fisher gap ------------------------------------------------------------------

using ScoreField = std::function<Points(const Points&)>;

struct FisherGap {
    double value;   // mean ||score_p - score_q||^2
    double scaled;  // value / (4 alpha)
    double se;      // standard error of `value`
    Eigen::Index n;
};

FisherGap fisher_gap(const Points& q_samples, const ScoreField& score_p, const ScoreField& score_q,
                     double alpha = 1.2);

// Report ----------------------------------------------------------------------

struct EvalReport {
    double w2 = 0.0;
    std::string w2_mode;
    double mmd2 = 0.0;
    double mmd_se = 0.0;
    double bandwidth = 0.0;
    std::optional<FisherGap> fisher;
    Eigen::Index n_a = 0;
    Eigen::Index n_b = 0;
    std::uint64_t seed_a = 0;
    std::uint64_t seed_b = 0;

    static std::string csv_header();
    std::string csv_row() const;
    std::string pretty() const;
};

/// W2 (auto mode) and MMD between two batches. The MMD estimate is clamped at 0
/// in the report.
EvalReport evaluate(const SampleBatch& a, const SampleBatch& b);

}  // namespace cosim::metrics
