#pragma once

// Glue between a RunConfig and the training/evaluation code: datasets,
// checkpoint packing, the consistency check and the grid-scale sweep.

#include "cosim/checkpoint.hpp"
#include "cosim/config.hpp"
#include "cosim/oracle.hpp"

#include <cstdint>
#include <vector>

namespace cosim::experiment {

using config::RunConfig;

oracle::GaussianMixture data_law(const RunConfig& cfg);
/// The finite training set: dataset_size draws seeded by data_seed.
Dataset make_dataset(const RunConfig& cfg);
/// Fresh draws from the data law, independent of the training set.
Points reference_points(const RunConfig& cfg, Eigen::Index n, std::uint64_t seed);

checkpoint::Checkpoint new_checkpoint(const RunConfig& cfg);
/// Builds a denoiser shaped by the config and fills it from `group`.
/// Throws ValidationError when the checkpoint scheme differs from the config's.
models::DenoiserNet load_denoiser(const checkpoint::Checkpoint& ck, const std::string& group, const RunConfig& cfg);

/// Samples from the generator with a K-step grid built from the config.
SampleBatch generate(const models::GeneratorNet& G, const RunConfig& cfg, int K, Eigen::Index n, std::uint64_t seed,
                     double scale);

struct ConsistencyReport {
    std::vector<double> times;  // 0.25 T, 0.5 T, T
    std::vector<double> w2;     // W2(G(x_t, t), data) per time
    double ratio_limit = 2.0;
    /// Every W2 is within ratio_limit times the smallest-time value.
    bool passed() const;
};

/// Pushes true p_t samples through G(., t) and measures W2 to fresh data.
ConsistencyReport consistency_check(const models::GeneratorNet& G, const RunConfig& cfg, Eigen::Index n,
                                    std::uint64_t seed);

inline const std::vector<double> kScaleCandidates{0.5, 0.75, 1.0, 1.5, 2.0};

struct ScalePoint {
    double scale;
    double w2;
};

struct ScaleSweep {
    int steps = 0;
    std::vector<ScalePoint> points;
    double best_scale = 0.0;
    double best_w2 = 0.0;
};

/// Evaluates every candidate with the same sampler seed and reference set and
/// keeps the smallest W2 (the first one on ties).
ScaleSweep sweep_scale(const models::GeneratorNet& G, const RunConfig& cfg, int K,
                       const std::vector<double>& candidates, Eigen::Index n, std::uint64_t seed);

}  // namespace cosim::experiment
