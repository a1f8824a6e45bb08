#pragma once

// Closed-form Gaussian-mixture machinery. Gaussian mixtures are closed under
// the forward process and under affine generators followed by Gaussian
// transition noise, which makes every score in those settings exact.

#include "cosim/common.hpp"
#include "cosim/diffusion.hpp"

#include <functional>
#include <string>
#include <vector>

namespace cosim::oracle {

struct Component {
    double weight;
    Vec mean;
    Mat cov;
};

class GaussianMixture {
public:
    GaussianMixture() = default;
    explicit GaussianMixture(std::vector<Component> components);

    /// Components with diagonal covariances given as variance vectors.
    static GaussianMixture diagonal(std::vector<double> weights, std::vector<Vec> means,
                                    std::vector<Vec> variances);

    Eigen::Index dim() const { return dim_; }
    const std::vector<Component>& components() const { return comps_; }

    double log_density(const Vec& x) const;
    Vec score(const Vec& x) const;
    Points score(const Points& x) const;
    Points sample(Eigen::Index n, Rng& rng) const;

    Vec mean() const;
    Mat covariance() const;

private:
    struct Factor {
        Mat precision;
        double log_norm;  // -0.5 (d log 2pi + log det cov)
        Mat chol;         // lower Cholesky factor of cov
    };
    std::vector<Component> comps_;
    std::vector<Factor> factors_;
    Eigen::Index dim_ = 0;

    // log(w_k N(x; mu_k, S_k)) per component.
    Vec component_log_terms(const Vec& x) const;
};

/// Stand-in generator G(x, t) = W x + b (time independent).
struct AffineGenerator {
    Mat W;
    Vec b;
};

/// Exact forward marginal p(.; t): means a(t) mu, covariances a^2 S + sigma^2 I.
GaussianMixture perturb_gmm(const GaussianMixture& gmm, const SdeScheme& scheme, double t);

/// Exact q_phi(.; s, t) for an affine generator: push p(.; t) through
/// x -> a(s) (W x + b) and add N(0, sigma(s)^2 I).
GaussianMixture affine_cosim_marginal(const AffineGenerator& g, const GaussianMixture& data,
                                      const SdeScheme& scheme, double s, double t);

using ScoreField = std::function<Vec(const Vec&)>;

/// Equilibrium of the auxiliary stage: beta * score_q + (1 - beta) * score_p,
/// beta = 1 / (2 coef).
ScoreField fixed_point_f(ScoreField score_q, ScoreField score_p, double coef);

// Named toy datasets -----------------------------------------------------------

/// `modes` equally weighted isotropic components on a circle.
GaussianMixture ring(int modes = 8, double radius = 1.0, double stddev = 0.1);
/// Two interleaved half-circle arcs, each covered by `per_arc` small components.
GaussianMixture two_moons(int per_arc = 8, double stddev = 0.08);
/// Single centred isotropic Gaussian.
GaussianMixture gaussian(int dim = 1, double stddev = 1.0);

/// ring8 | two-moons | gaussian1d | gaussian2d
GaussianMixture dataset_by_name(const std::string& name);
std::vector<std::string> dataset_names();

}  // namespace cosim::oracle
