#include "cosim/dataset.hpp"

#include <random>

namespace cosim {

Dataset::Dataset(Points points) : points_(std::move(points)) {
    if (points_.rows() == 0) throw ValidationError("dataset is empty");
}

Points Dataset::sample_batch(Eigen::Index n, Rng& rng) const {
    if (points_.rows() == 0) throw ValidationError("sampling from an empty dataset");
    std::uniform_int_distribution<Eigen::Index> pick(0, points_.rows() - 1);
    Points out(n, points_.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = points_.row(pick(rng));
    return out;
}

}  // namespace cosim
