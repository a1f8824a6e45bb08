#pragma once

#include "cosim/common.hpp"
#include "cosim/diffusion.hpp"
#include "cosim/ndgrad.hpp"

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cosim::models {

using nd::Tensor;
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// x -> G(x, t), one time per row.
using GeneratorFn = std::function<Tensor(const Tensor& x, std::span<const double> t)>;
/// x -> grad log p(x; s), one time per row.
using ScoreFn = std::function<Tensor(const Tensor& x, std::span<const double> s)>;
/// x_s -> f(x_s; s, t), one (s, t) pair per row.
using AuxFn = std::function<Tensor(const Tensor& x, std::span<const double> s, std::span<const double> t)>;

/// Sin/cos features of log t at log-spaced frequencies (dim must be even).
std::vector<double> time_features(double t, int dim);

/// Fixed Fourier features followed by a learned dim x dim projection and SiLU.
/// With the projection zeroed the embedding is identically zero.
class TimeEmbedding {
public:
    explicit TimeEmbedding(int dim = 16);

    int dim() const { return dim_; }
    void init(Rng& rng);
    void zero();
    Tensor forward(std::span<const double> t) const;  // [N, dim]

    std::vector<Tensor> parameters() const { return {W_, b_}; }
    void collect(const std::string& prefix, NamedTensors& out) const;
    TimeEmbedding clone() const;

private:
    int dim_;
    Tensor W_;
    Tensor b_;
};

/// Dense SiLU network; the final layer is linear.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> widths);

    const std::vector<int>& widths() const { return widths_; }
    /// Normal(0, 1/fan_in) weights, zero biases; optionally zero final layer.
    void init(Rng& rng, bool zero_last);
    Tensor forward(const Tensor& x) const;

    std::vector<Tensor> parameters() const;
    void collect(const std::string& prefix, NamedTensors& out) const;
    Mlp clone() const;

private:
    std::vector<int> widths_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

struct NetConfig {
    int data_dim = 2;
    int embed_dim = 16;
    std::vector<int> hidden{128, 128, 128};
    double sigma_data = kSigmaData;

    std::vector<int> widths() const;
    bool operator==(const NetConfig&) const = default;
};

/// Preconditioned denoiser D(x, t) = (c_skip x + c_out F(c_in x, embed(t))) / a(t).
/// The teacher and the consistency generator G_phi share this type.
class DenoiserNet {
public:
    DenoiserNet(NetConfig cfg, SdeScheme scheme);

    const NetConfig& config() const { return cfg_; }
    const SdeScheme& scheme() const { return scheme_; }

    void init(Rng& rng, bool zero_last = true);
    Tensor denoise(const Tensor& x, std::span<const double> t) const;
    /// Denoiser with an externally supplied time embedding (used by AuxNet).
    Tensor denoise_with_embedding(const Tensor& x, const Tensor& emb, std::span<const double> t) const;
    Tensor score(const Tensor& x, std::span<const double> t) const;

    const TimeEmbedding& embedding() const { return embed_; }

    std::vector<Tensor> parameters() const;
    NamedTensors named_parameters() const;
    std::size_t parameter_count() const;
    void set_trainable(bool on) const;
    DenoiserNet clone() const;

    GeneratorFn as_generator() const;
    ScoreFn as_score() const;

private:
    NetConfig cfg_;
    SdeScheme scheme_;
    TimeEmbedding embed_;
    Mlp body_;
};

using GeneratorNet = DenoiserNet;

/// Dual-time auxiliary field f_psi(x_s; s, t): a denoiser whose time input is
/// embed_s(s) + embed_t(t), converted to a score at noise level s.
class AuxNet {
public:
    AuxNet(NetConfig cfg, SdeScheme scheme);

    /// Copy of the teacher with a zeroed t-embedding, so f(x; s, t) equals the
    /// teacher score at s for every t.
    static AuxNet from_teacher(const DenoiserNet& teacher);

    void init(Rng& rng, bool zero_last = true);
    Tensor denoise(const Tensor& x, std::span<const double> s, std::span<const double> t) const;
    /// Throws ValidationError unless s < t row-wise.
    Tensor forward(const Tensor& x, std::span<const double> s, std::span<const double> t) const;

    const DenoiserNet& base() const { return base_; }
    const TimeEmbedding& t_embedding() const { return embed_t_; }
    void zero_t_embedding() { embed_t_.zero(); }

    std::vector<Tensor> parameters() const;
    NamedTensors named_parameters() const;
    void set_trainable(bool on) const;
    AuxNet clone() const;

    AuxFn as_aux() const;

private:
    DenoiserNet base_;
    TimeEmbedding embed_t_;
};

/// (a(t) D - x) / sigma(t)^2, row-wise; throws if some sigma(t) = 0.
Tensor score_from_denoiser(const Tensor& denoised, const Tensor& x, std::span<const double> t,
                           const SdeScheme& scheme);

/// Overwrite `dst` parameters with `src` values (matching names and shapes).
void copy_parameters(const NamedTensors& src, const NamedTensors& dst);

}  // namespace cosim::models
