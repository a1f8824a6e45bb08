#pragma once

#include "cosim/common.hpp"

#include <string>

namespace cosim {

/// Finite training set; minibatches are drawn uniformly with replacement.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(Points points);

    Eigen::Index size() const { return points_.rows(); }
    Eigen::Index dim() const { return points_.cols(); }
    const Points& points() const { return points_; }

    Points sample_batch(Eigen::Index n, Rng& rng) const;

private:
    Points points_;
};

/// N x d matrix of generated or reference points plus where it came from.
struct SampleBatch {
    Points points;
    std::uint64_t seed = 0;
    std::string provenance;  // "teacher", "cosim-<K>-step", "oracle", ...

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index dim() const { return points.cols(); }
    bool finite() const { return points.allFinite(); }
};

}  // namespace cosim
