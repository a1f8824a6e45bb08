#include "cosim/metrics.hpp"

#include "cosim/distill.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace cosim::metrics {

SampleBatch multistep_sample(const models::GeneratorFn& G, const TimeGrid& grid, Eigen::Index n_samples,
                             Eigen::Index dim, const SdeScheme& scheme, std::uint64_t seed) {
    grid.validate();
    if (grid.times.front() != scheme.T || grid.times.back() != scheme.delta)
        throw ValidationError("multistep_sample: grid must run from T to delta");
    if (n_samples < 1 || dim < 1) throw ValidationError("multistep_sample: need at least one sample and dimension");

    Rng rng(seed);
    Points x = prior_std(scheme) * standard_normal_points(rng, n_samples, dim);
    std::vector<double> tv(static_cast<std::size_t>(n_samples));
    std::vector<double> sv(static_cast<std::size_t>(n_samples));
    for (std::size_t n = 1; n < grid.times.size(); ++n) {
        const double t = grid.times[n - 1];
        const double s = grid.times[n];
        std::fill(tv.begin(), tv.end(), t);
        std::fill(sv.begin(), sv.end(), s);
        Points eps = standard_normal_points(rng, n_samples, dim);
        nd::Tensor xt = nd::Tensor::from_points(x);
        if (s < t) {
            x = distill::sample_transition(G, xt, sv, tv, scheme, eps).x_s.to_points();
        } else {
            // Repeated interior node: re-noise at the same level.
            const auto c = sde_coeffs(scheme, s);
            x = c.a * G(xt, tv).to_points() + c.sigma * eps;
        }
    }
    SampleBatch out;
    out.points = std::move(x);
    out.seed = seed;
    out.provenance = "cosim-" + std::to_string(grid.steps()) + "-step";
    return out;
}

Points consistency_pushforward(const models::GeneratorFn& G, const Points& x0, double t, const SdeScheme& scheme,
                               Rng& rng) {
    Points eps = standard_normal_points(rng, x0.rows(), x0.cols());
    Points xt = perturb(x0, t, eps, scheme);
    std::vector<double> tv(static_cast<std::size_t>(x0.rows()), t);
    return G(nd::Tensor::from_points(xt), tv).to_points();
}

// Wasserstein-2 ------------------------------------------------------------------

std::vector<Eigen::Index> linear_assignment(const Mat& cost) {
    // Shortest augmenting path with dual potentials (Hungarian / JV family),
    // O(n^3). Indices are 1-based internally; column 0 is a sentinel.
    const Eigen::Index n = cost.rows();
    if (cost.cols() != n) throw ValidationError("linear_assignment: cost matrix must be square");
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<Eigen::Index> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (Eigen::Index i = 1; i <= n; ++i) {
        p[0] = i;
        Eigen::Index j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const Eigen::Index i0 = p[j0];
            double delta = inf;
            Eigen::Index j1 = 0;
            for (Eigen::Index j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (Eigen::Index j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const Eigen::Index j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<Eigen::Index> col_for_row(n);
    for (Eigen::Index j = 1; j <= n; ++j) col_for_row[p[j] - 1] = j - 1;
    return col_for_row;
}

namespace {

void check_nonempty(const Points& a, const Points& b) {
    if (a.rows() == 0 || b.rows() == 0) throw ValidationError("W2: empty sample batch");
    if (a.cols() != b.cols()) throw ValidationError("W2: batches differ in dimension");
}

}  // namespace

double w2_exact(const Points& a, const Points& b) {
    check_nonempty(a, b);
    if (a.rows() != b.rows()) throw ValidationError("exact W2 needs equal sample sizes");
    const Eigen::Index n = a.rows();
    // |a|^2 + |b|^2 - 2 a.b
    Mat cost = -2.0 * (a * b.transpose());
    cost.colwise() += a.rowwise().squaredNorm();
    cost.rowwise() += b.rowwise().squaredNorm().transpose();
    cost = cost.cwiseMax(0.0);
    const auto match = linear_assignment(cost);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += (a.row(i) - b.row(match[i])).squaredNorm();
    return std::sqrt(total / static_cast<double>(n));
}

double w2_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ValidationError("W2: empty sample batch");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.size() == b.size()) {
        double total = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(total / static_cast<double>(a.size()));
    }
    // Integrate (F_a^-1(u) - F_b^-1(u))^2 over the merged breakpoints of both
    // step quantile functions.
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double u = 0.0, total = 0.0;
    while (i < a.size() && j < b.size()) {
        const double next = std::min(static_cast<double>(i + 1) / na, static_cast<double>(j + 1) / nb);
        const double d = a[i] - b[j];
        total += (next - u) * d * d;
        u = next;
        if (static_cast<double>(i + 1) / na <= next) ++i;
        if (static_cast<double>(j + 1) / nb <= next) ++j;
    }
    return std::sqrt(total);
}

double w2_sliced(const Points& a, const Points& b, int n_projections, std::uint64_t seed) {
    check_nonempty(a, b);
    if (n_projections < 1) throw ValidationError("sliced W2: need at least one projection");
    const Eigen::Index d = a.cols();
    Rng rng(seed);
    double total = 0.0;
    std::vector<double> pa(static_cast<std::size_t>(a.rows())), pb(static_cast<std::size_t>(b.rows()));
    for (int p = 0; p < n_projections; ++p) {
        Vec dir(d);
        do {
            for (Eigen::Index k = 0; k < d; ++k) dir(k) = standard_normal(rng);
        } while (dir.norm() == 0.0);
        dir.normalize();
        Eigen::Map<Vec>(pa.data(), a.rows()) = a * dir;
        Eigen::Map<Vec>(pb.data(), b.rows()) = b * dir;
        const double w = w2_1d(pa, pb);
        total += w * w;
    }
    return std::sqrt(total / n_projections);
}

double w2_empirical(const Points& a, const Points& b, W2Mode mode) {
    check_nonempty(a, b);
    if (mode == W2Mode::Auto)
        mode = (a.rows() == b.rows() && a.rows() <= kExactW2MaxN) ? W2Mode::Exact : W2Mode::Sliced;
    if (mode == W2Mode::Exact) return w2_exact(a, b);
    return w2_sliced(a, b);
}

// MMD -------------------------------------------------------------------------

double median_heuristic(const Points& a, const Points& b) {
    constexpr Eigen::Index kMax = 1000;
    Points pooled(a.rows() + b.rows(), a.cols());
    pooled << a, b;
    const Eigen::Index m = std::min<Eigen::Index>(pooled.rows(), kMax);
    // Deterministic thinning keeps the estimate independent of any RNG.
    const double stride = static_cast<double>(pooled.rows()) / static_cast<double>(m);
    Points sub(m, pooled.cols());
    for (Eigen::Index i = 0; i < m; ++i) sub.row(i) = pooled.row(static_cast<Eigen::Index>(i * stride));
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) dists.push_back((sub.row(i) - sub.row(j)).norm());
    if (dists.empty()) return 1.0;
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    return *mid > 0.0 ? *mid : 1.0;
}

MmdResult mmd(const Points& a, const Points& b, double bandwidth) {
    if (a.rows() < 2 || b.rows() < 2) throw ValidationError("mmd: each batch needs at least two points");
    if (a.cols() != b.cols()) throw ValidationError("mmd: batches differ in dimension");
    const double h = bandwidth > 0.0 ? bandwidth : median_heuristic(a, b);
    const double inv = 1.0 / (2.0 * h * h);
    auto gram = [&](const Points& x, const Points& y) {
        Mat k = -2.0 * (x * y.transpose());
        k.colwise() += x.rowwise().squaredNorm();
        k.rowwise() += y.rowwise().squaredNorm().transpose();
        return Mat((-inv * k.cwiseMax(0.0)).array().exp());
    };
    const Mat kaa = gram(a, a), kbb = gram(b, b), kab = gram(a, b);
    const double na = static_cast<double>(a.rows()), nb = static_cast<double>(b.rows());
    const double saa = (kaa.sum() - kaa.trace()) / (na * (na - 1.0));
    const double sbb = (kbb.sum() - kbb.trace()) / (nb * (nb - 1.0));
    const double sab = kab.mean();
    MmdResult r{saa + sbb - 2.0 * sab, 0.0, h};

    // Standard error from the U-statistic variance on the first m pairs,
    // h(i,j) = k(a_i,a_j) + k(b_i,b_j) - k(a_i,b_j) - k(a_j,b_i).
    const Eigen::Index m = std::min(a.rows(), b.rows());
    if (m >= 3) {
        const auto M = static_cast<double>(m);
        Mat H = kaa.topLeftCorner(m, m) + kbb.topLeftCorner(m, m) - kab.topLeftCorner(m, m) -
                kab.topLeftCorner(m, m).transpose();
        H.diagonal().setZero();
        const double mean_h = H.sum() / (M * (M - 1.0));
        Vec row_mean = H.rowwise().sum() / (M - 1.0);
        double zeta2 = 0.0;
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                if (i != j) zeta2 += (H(i, j) - mean_h) * (H(i, j) - mean_h);
        zeta2 /= M * (M - 1.0) - 1.0;
        const double var_rows = (row_mean.array() - mean_h).square().sum() / (M - 1.0);
        const double zeta1 = std::max(0.0, var_rows - zeta2 / (M - 1.0));
        const double var = 4.0 * (M - 2.0) / (M * (M - 1.0)) * zeta1 + 2.0 / (M * (M - 1.0)) * zeta2;
        r.se = std::sqrt(std::max(0.0, var));
    }
    return r;
}

// Fisher gap ------------------------------------------------------------------

FisherGap fisher_gap(const Points& q_samples, const ScoreField& score_p, const ScoreField& score_q, double alpha) {
    if (!(alpha > 0.0)) throw ValidationError("fisher_gap: alpha must be positive");
    const Eigen::Index n = q_samples.rows();
    if (n == 0) throw ValidationError("fisher_gap: no samples");
    const Points sp = score_p(q_samples);
    const Points sq = score_q(q_samples);
    if (sp.rows() != n || sq.rows() != n || sp.cols() != sq.cols())
        throw ValidationError("fisher_gap: score fields returned mismatched shapes");
    const Vec per = (sp - sq).rowwise().squaredNorm();
    const double mean = per.mean();
    double se = 0.0;
    if (n > 1) se = std::sqrt((per.array() - mean).square().sum() / static_cast<double>(n - 1) / static_cast<double>(n));
    return {mean, mean / (4.0 * alpha), se, n};
}

// Report ----------------------------------------------------------------------

std::string EvalReport::csv_header() {
    return "w2,w2_mode,mmd2,mmd_se,bandwidth,fisher_gap,fisher_gap_scaled,fisher_se,n_a,n_b,seed_a,seed_b";
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os << std::setprecision(10) << w2 << ',' << w2_mode << ',' << mmd2 << ',' << mmd_se << ',' << bandwidth << ',';
    if (fisher)
        os << fisher->value << ',' << fisher->scaled << ',' << fisher->se;
    else
        os << ",,";
    os << ',' << n_a << ',' << n_b << ',' << seed_a << ',' << seed_b;
    return os.str();
}

std::string EvalReport::pretty() const {
    std::ostringstream os;
    os << std::setprecision(6);
    os << "W2 (" << w2_mode << "):  " << w2 << "\n";
    os << "MMD^2:       " << mmd2 << "  (se " << mmd_se << ", bandwidth " << bandwidth << ")\n";
    if (fisher)
        os << "Fisher gap:  " << fisher->value << "  (scaled " << fisher->scaled << ", se " << fisher->se << ")\n";
    os << "sizes:       " << n_a << " vs " << n_b << "\n";
    os << "seeds:       " << seed_a << " vs " << seed_b << "\n";
    return os.str();
}

EvalReport evaluate(const SampleBatch& a, const SampleBatch& b) {
    EvalReport r;
    const bool exact = a.size() == b.size() && a.size() <= kExactW2MaxN;
    r.w2 = w2_empirical(a.points, b.points, exact ? W2Mode::Exact : W2Mode::Sliced);
    r.w2_mode = exact ? "exact" : "sliced";
    const auto m = mmd(a.points, b.points);
    r.mmd2 = std::max(0.0, m.mmd2);
    r.mmd_se = m.se;
    r.bandwidth = m.bandwidth;
    r.n_a = a.size();
    r.n_b = b.size();
    r.seed_a = a.seed;
    r.seed_b = b.seed;
    return r;
}

}  // namespace cosim::metrics
