#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cosim {

/// Row-major N x d block of points; one sample per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using Rng = std::mt19937_64;

/// Input or configuration that violates a documented constraint.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation produced a non-finite value (diverging loss, NaN gradient).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return n(rng);
}

inline double uniform01(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng);
}

inline Points standard_normal_points(Rng& rng, Eigen::Index n, Eigen::Index d) {
    Points p(n, d);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) p(i, j) = dist(rng);
    return p;
}

}  // namespace cosim
