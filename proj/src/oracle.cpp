#include "cosim/oracle.hpp"

#include <cmath>
#include <numbers>

namespace cosim::oracle {

GaussianMixture::GaussianMixture(std::vector<Component> components) : comps_(std::move(components)) {
    if (comps_.empty()) throw ValidationError("gaussian mixture needs at least one component");
    dim_ = comps_.front().mean.size();
    double total = 0.0;
    for (const auto& c : comps_) {
        if (!(c.weight > 0.0)) throw ValidationError("mixture weights must be positive");
        if (c.mean.size() != dim_ || c.cov.rows() != dim_ || c.cov.cols() != dim_)
            throw ValidationError("mixture component dimensions disagree");
        total += c.weight;
    }
    for (auto& c : comps_) c.weight /= total;
    for (const auto& c : comps_) {
        Eigen::LLT<Mat> llt(c.cov);
        if (llt.info() != Eigen::Success)
            throw ValidationError("mixture covariance is not positive definite");
        Factor f;
        f.chol = llt.matrixL();
        f.precision = llt.solve(Mat::Identity(dim_, dim_));
        double logdet = 2.0 * f.chol.diagonal().array().log().sum();
        f.log_norm = -0.5 * (static_cast<double>(dim_) * std::log(2.0 * std::numbers::pi) + logdet);
        factors_.push_back(std::move(f));
    }
}

GaussianMixture GaussianMixture::diagonal(std::vector<double> weights, std::vector<Vec> means,
                                          std::vector<Vec> variances) {
    if (weights.size() != means.size() || means.size() != variances.size())
        throw ValidationError("diagonal mixture: component lists differ in length");
    std::vector<Component> cs;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if ((variances[k].array() <= 0.0).any())
            throw ValidationError("diagonal mixture: variances must be positive");
        cs.push_back({weights[k], means[k], variances[k].asDiagonal()});
    }
    return GaussianMixture(std::move(cs));
}

Vec GaussianMixture::component_log_terms(const Vec& x) const {
    Vec l(static_cast<Eigen::Index>(comps_.size()));
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        Vec d = x - comps_[k].mean;
        l(static_cast<Eigen::Index>(k)) = std::log(comps_[k].weight) + factors_[k].log_norm -
                                          0.5 * d.dot(factors_[k].precision * d);
    }
    return l;
}

double GaussianMixture::log_density(const Vec& x) const {
    Vec l = component_log_terms(x);
    const double m = l.maxCoeff();
    return m + std::log((l.array() - m).exp().sum());
}

Vec GaussianMixture::score(const Vec& x) const {
    Vec l = component_log_terms(x);
    Vec r = (l.array() - l.maxCoeff()).exp();
    r /= r.sum();
    Vec s = Vec::Zero(dim_);
    for (std::size_t k = 0; k < comps_.size(); ++k)
        s -= r(static_cast<Eigen::Index>(k)) * (factors_[k].precision * (x - comps_[k].mean));
    return s;
}

Points GaussianMixture::score(const Points& x) const {
    Points out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = score(Vec(x.row(i).transpose())).transpose();
    return out;
}

Points GaussianMixture::sample(Eigen::Index n, Rng& rng) const {
    std::vector<double> w;
    for (const auto& c : comps_) w.push_back(c.weight);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    Points out(n, dim_);
    Vec z(dim_);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::size_t k = pick(rng);
        for (Eigen::Index j = 0; j < dim_; ++j) z(j) = normal(rng);
        out.row(i) = (comps_[k].mean + factors_[k].chol * z).transpose();
    }
    return out;
}

Vec GaussianMixture::mean() const {
    Vec m = Vec::Zero(dim_);
    for (const auto& c : comps_) m += c.weight * c.mean;
    return m;
}

Mat GaussianMixture::covariance() const {
    Vec m = mean();
    Mat s = Mat::Zero(dim_, dim_);
    for (const auto& c : comps_) {
        Vec d = c.mean - m;
        s += c.weight * (c.cov + d * d.transpose());
    }
    return s;
}

GaussianMixture perturb_gmm(const GaussianMixture& gmm, const SdeScheme& scheme, double t) {
    const auto [a, sigma] = sde_coeffs(scheme, t);
    std::vector<Component> cs;
    const auto d = gmm.dim();
    for (const auto& c : gmm.components())
        cs.push_back({c.weight, a * c.mean, a * a * c.cov + sigma * sigma * Mat::Identity(d, d)});
    return GaussianMixture(std::move(cs));
}

GaussianMixture affine_cosim_marginal(const AffineGenerator& g, const GaussianMixture& data,
                                      const SdeScheme& scheme, double s, double t) {
    if (!(s < t)) throw ValidationError("affine_cosim_marginal requires s < t");
    const auto d = data.dim();
    if (g.W.rows() != d || g.W.cols() != d || g.b.size() != d)
        throw ValidationError("affine generator shape does not match data dimension");
    GaussianMixture pt = perturb_gmm(data, scheme, t);
    const auto [as, ss] = sde_coeffs(scheme, s);
    std::vector<Component> cs;
    for (const auto& c : pt.components())
        cs.push_back({c.weight, as * (g.W * c.mean + g.b),
                      as * as * g.W * c.cov * g.W.transpose() + ss * ss * Mat::Identity(d, d)});
    return GaussianMixture(std::move(cs));
}

ScoreField fixed_point_f(ScoreField score_q, ScoreField score_p, double coef) {
    if (!(coef > 0.0)) throw ValidationError("fixed_point_f: coef must be positive");
    const double beta = 1.0 / (2.0 * coef);
    return [q = std::move(score_q), p = std::move(score_p), beta](const Vec& x) -> Vec {
        return beta * q(x) + (1.0 - beta) * p(x);
    };
}

GaussianMixture ring(int modes, double radius, double stddev) {
    std::vector<double> w;
    std::vector<Vec> mu;
    std::vector<Vec> var;
    for (int k = 0; k < modes; ++k) {
        const double th = 2.0 * std::numbers::pi * k / modes;
        w.push_back(1.0);
        mu.push_back(Vec{{radius * std::cos(th), radius * std::sin(th)}});
        var.push_back(Vec::Constant(2, stddev * stddev));
    }
    return GaussianMixture::diagonal(w, mu, var);
}

GaussianMixture two_moons(int per_arc, double stddev) {
    std::vector<double> w;
    std::vector<Vec> mu;
    std::vector<Vec> var;
    for (int k = 0; k < per_arc; ++k) {
        const double th = std::numbers::pi * k / (per_arc - 1);
        w.push_back(1.0);
        mu.push_back(Vec{{std::cos(th) - 0.5, std::sin(th) - 0.25}});
        var.push_back(Vec::Constant(2, stddev * stddev));
        w.push_back(1.0);
        mu.push_back(Vec{{0.5 - std::cos(th), 0.25 - std::sin(th)}});
        var.push_back(Vec::Constant(2, stddev * stddev));
    }
    return GaussianMixture::diagonal(w, mu, var);
}

GaussianMixture gaussian(int dim, double stddev) {
    return GaussianMixture::diagonal({1.0}, {Vec::Zero(dim)}, {Vec::Constant(dim, stddev * stddev)});
}

GaussianMixture dataset_by_name(const std::string& name) {
    if (name == "ring8") return ring(8, 1.0, 0.1);
    if (name == "two-moons") return two_moons();
    if (name == "gaussian1d") return gaussian(1, 1.0);
    if (name == "gaussian2d") return gaussian(2, 1.0);
    throw ValidationError("unknown dataset '" + name + "'");
}

std::vector<std::string> dataset_names() { return {"ring8", "two-moons", "gaussian1d", "gaussian2d"}; }

}  // namespace cosim::oracle
