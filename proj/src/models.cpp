#include "cosim/models.hpp"

#include <algorithm>
#include <cmath>

namespace cosim::models {

std::vector<double> time_features(double t, int dim) {
    if (!(t > 0.0)) throw ValidationError("time embedding requires t > 0, got " + std::to_string(t));
    if (dim < 2 || dim % 2 != 0) throw ValidationError("time embedding dimension must be even");
    const int half = dim / 2;
    const double lt = std::log(t);
    std::vector<double> f(static_cast<std::size_t>(dim));
    // Frequencies log-spaced over [1/8, 16].
    for (int k = 0; k < half; ++k) {
        const double w = half > 1 ? std::exp(std::log(0.125) + k * std::log(128.0) / (half - 1)) : 1.0;
        f[static_cast<std::size_t>(k)] = std::sin(w * lt);
        f[static_cast<std::size_t>(half + k)] = std::cos(w * lt);
    }
    return f;
}

namespace {

Tensor normal_tensor(nd::Shape shape, double stddev, Rng& rng) {
    std::normal_distribution<double> n(0.0, stddev);
    std::vector<double> v(nd::shape_numel(shape));
    for (auto& x : v) x = n(rng);
    return Tensor(std::move(shape), std::move(v));
}

void zero_fill(Tensor& t) { std::fill(t.data_mut().begin(), t.data_mut().end(), 0.0); }

void copy_values(const Tensor& src, Tensor& dst) {
    if (src.shape() != dst.shape())
        throw nd::ShapeError("parameter copy: shape " + nd::shape_string(src.shape()) + " vs " +
                             nd::shape_string(dst.shape()));
    std::copy(src.data().begin(), src.data().end(), dst.data_mut().begin());
}

}  // namespace

// TimeEmbedding ----------------------------------------------------------------

TimeEmbedding::TimeEmbedding(int dim)
    : dim_(dim),
      W_(Tensor::zeros({static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)})),
      b_(Tensor::zeros({static_cast<std::size_t>(dim)})) {}

void TimeEmbedding::init(Rng& rng) {
    W_ = normal_tensor(W_.shape(), 1.0 / std::sqrt(static_cast<double>(dim_)), rng);
    b_ = Tensor::zeros(b_.shape());
}

void TimeEmbedding::zero() {
    zero_fill(W_);
    zero_fill(b_);
}

Tensor TimeEmbedding::forward(std::span<const double> t) const {
    std::vector<double> feats;
    feats.reserve(t.size() * static_cast<std::size_t>(dim_));
    for (double ti : t) {
        auto f = time_features(ti, dim_);
        feats.insert(feats.end(), f.begin(), f.end());
    }
    Tensor phi({t.size(), static_cast<std::size_t>(dim_)}, std::move(feats));
    return nd::silu(nd::add(nd::matmul(phi, W_), b_));
}

void TimeEmbedding::collect(const std::string& prefix, NamedTensors& out) const {
    out.emplace_back(prefix + ".W", W_);
    out.emplace_back(prefix + ".b", b_);
}

TimeEmbedding TimeEmbedding::clone() const {
    TimeEmbedding e(dim_);
    e.W_ = W_.clone(W_.requires_grad());
    e.b_ = b_.clone(b_.requires_grad());
    return e;
}

// Mlp ----------------------------------------------------------------------------

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ValidationError("mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
        if (widths_[i] <= 0 || widths_[i + 1] <= 0) throw ValidationError("mlp widths must be positive");
        weights_.push_back(Tensor::zeros(
            {static_cast<std::size_t>(widths_[i]), static_cast<std::size_t>(widths_[i + 1])}));
        biases_.push_back(Tensor::zeros({static_cast<std::size_t>(widths_[i + 1])}));
    }
}

void Mlp::init(Rng& rng, bool zero_last) {
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        const double std = 1.0 / std::sqrt(static_cast<double>(widths_[i]));
        weights_[i] = normal_tensor(weights_[i].shape(), std, rng);
        biases_[i] = Tensor::zeros(biases_[i].shape());
    }
    if (zero_last) zero_fill(weights_.back());
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = nd::add(nd::matmul(h, weights_[i]), biases_[i]);
        if (i + 1 < weights_.size()) h = nd::silu(h);
    }
    return h;
}

std::vector<Tensor> Mlp::parameters() const {
    std::vector<Tensor> p;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        p.push_back(weights_[i]);
        p.push_back(biases_[i]);
    }
    return p;
}

void Mlp::collect(const std::string& prefix, NamedTensors& out) const {
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        out.emplace_back(prefix + "." + std::to_string(i) + ".W", weights_[i]);
        out.emplace_back(prefix + "." + std::to_string(i) + ".b", biases_[i]);
    }
}

Mlp Mlp::clone() const {
    Mlp m;
    m.widths_ = widths_;
    for (const auto& w : weights_) m.weights_.push_back(w.clone(w.requires_grad()));
    for (const auto& b : biases_) m.biases_.push_back(b.clone(b.requires_grad()));
    return m;
}

// DenoiserNet ----------------------------------------------------------------------

std::vector<int> NetConfig::widths() const {
    std::vector<int> w{data_dim + embed_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(data_dim);
    return w;
}

DenoiserNet::DenoiserNet(NetConfig cfg, SdeScheme scheme)
    : cfg_(std::move(cfg)), scheme_(scheme), embed_(cfg_.embed_dim), body_(cfg_.widths()) {
    scheme_.validate();
}

void DenoiserNet::init(Rng& rng, bool zero_last) {
    embed_.init(rng);
    body_.init(rng, zero_last);
}

Tensor DenoiserNet::denoise(const Tensor& x, std::span<const double> t) const {
    return denoise_with_embedding(x, embed_.forward(t), t);
}

Tensor DenoiserNet::denoise_with_embedding(const Tensor& x, const Tensor& emb,
                                           std::span<const double> t) const {
    if (x.rank() != 2 || x.cols() != static_cast<std::size_t>(cfg_.data_dim) || x.rows() != t.size())
        throw nd::ShapeError("denoiser input " + nd::shape_string(x.shape()) + " with " +
                             std::to_string(t.size()) + " times");
    const std::size_t n = t.size();
    std::vector<double> c_skip(n), c_out(n), c_in(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto c = precond_coeffs(scheme_, t[i], cfg_.sigma_data);
        c_skip[i] = c.c_skip / c.a;
        c_out[i] = c.c_out / c.a;
        c_in[i] = c.c_in;
    }
    Tensor f = body_.forward(nd::concat(nd::scale_rows(x, c_in), emb));
    return nd::add(nd::scale_rows(x, c_skip), nd::scale_rows(f, c_out));
}

Tensor DenoiserNet::score(const Tensor& x, std::span<const double> t) const {
    return score_from_denoiser(denoise(x, t), x, t, scheme_);
}

std::vector<Tensor> DenoiserNet::parameters() const {
    auto p = embed_.parameters();
    auto q = body_.parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

NamedTensors DenoiserNet::named_parameters() const {
    NamedTensors out;
    embed_.collect("embed_s", out);
    body_.collect("body", out);
    return out;
}

std::size_t DenoiserNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

void DenoiserNet::set_trainable(bool on) const {
    for (auto p : parameters()) p.set_requires_grad(on);
}

DenoiserNet DenoiserNet::clone() const {
    DenoiserNet d(cfg_, scheme_);
    d.embed_ = embed_.clone();
    d.body_ = body_.clone();
    return d;
}

GeneratorFn DenoiserNet::as_generator() const {
    return [this](const Tensor& x, std::span<const double> t) { return denoise(x, t); };
}

ScoreFn DenoiserNet::as_score() const {
    return [this](const Tensor& x, std::span<const double> t) { return score(x, t); };
}

// AuxNet -----------------------------------------------------------------------------

AuxNet::AuxNet(NetConfig cfg, SdeScheme scheme) : base_(cfg, scheme), embed_t_(cfg.embed_dim) {}

AuxNet AuxNet::from_teacher(const DenoiserNet& teacher) {
    AuxNet a(teacher.config(), teacher.scheme());
    a.base_ = teacher.clone();
    a.embed_t_.zero();
    return a;
}

void AuxNet::init(Rng& rng, bool zero_last) {
    base_.init(rng, zero_last);
    embed_t_.init(rng);
}

Tensor AuxNet::denoise(const Tensor& x, std::span<const double> s, std::span<const double> t) const {
    if (s.size() != t.size()) throw nd::ShapeError("aux net: s and t batches differ in length");
    Tensor emb = nd::add(base_.embedding().forward(s), embed_t_.forward(t));
    return base_.denoise_with_embedding(x, emb, s);
}

Tensor AuxNet::forward(const Tensor& x, std::span<const double> s, std::span<const double> t) const {
    for (std::size_t i = 0; i < s.size() && i < t.size(); ++i)
        if (!(s[i] < t[i]))
            throw ValidationError("aux net requires s < t (row " + std::to_string(i) +
                                  ": s = " + std::to_string(s[i]) + ", t = " + std::to_string(t[i]) + ")");
    return score_from_denoiser(denoise(x, s, t), x, s, base_.scheme());
}

std::vector<Tensor> AuxNet::parameters() const {
    auto p = base_.parameters();
    auto q = embed_t_.parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

NamedTensors AuxNet::named_parameters() const {
    auto out = base_.named_parameters();
    embed_t_.collect("embed_t", out);
    return out;
}

void AuxNet::set_trainable(bool on) const {
    for (auto p : parameters()) p.set_requires_grad(on);
}

AuxNet AuxNet::clone() const {
    AuxNet a(base_.config(), base_.scheme());
    a.base_ = base_.clone();
    a.embed_t_ = embed_t_.clone();
    return a;
}

AuxFn AuxNet::as_aux() const {
    return [this](const Tensor& x, std::span<const double> s, std::span<const double> t) {
        return forward(x, s, t);
    };
}

// Free functions -------------------------------------------------------------------

Tensor score_from_denoiser(const Tensor& denoised, const Tensor& x, std::span<const double> t,
                           const SdeScheme& scheme) {
    const std::size_t n = t.size();
    std::vector<double> a(n), inv_var(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto c = sde_coeffs(scheme, t[i]);
        if (!(c.sigma > 0.0)) throw ValidationError("score_from_denoiser: sigma(t) = 0");
        a[i] = c.a;
        inv_var[i] = 1.0 / (c.sigma * c.sigma);
    }
    return nd::scale_rows(nd::sub(nd::scale_rows(denoised, a), x), inv_var);
}

void copy_parameters(const NamedTensors& src, const NamedTensors& dst) {
    if (src.size() != dst.size()) throw ValidationError("parameter copy: group sizes differ");
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (src[i].first != dst[i].first)
            throw ValidationError("parameter copy: name mismatch " + src[i].first + " vs " + dst[i].first);
        Tensor d = dst[i].second;
        copy_values(src[i].second, d);
    }
}

}  // namespace cosim::models
