#include "cosim/experiment.hpp"

#include "cosim/metrics.hpp"

#include <algorithm>

namespace cosim::experiment {

oracle::GaussianMixture data_law(const RunConfig& cfg) { return oracle::dataset_by_name(cfg.dataset); }

Dataset make_dataset(const RunConfig& cfg) {
    Rng rng(cfg.data_seed);
    return Dataset(data_law(cfg).sample(cfg.dataset_size, rng));
}

Points reference_points(const RunConfig& cfg, Eigen::Index n, std::uint64_t seed) {
    // Offset so the reference never coincides with the training draw.
    Rng rng(seed ^ 0x5eedf00dULL);
    return data_law(cfg).sample(n, rng);
}

checkpoint::Checkpoint new_checkpoint(const RunConfig& cfg) {
    checkpoint::Checkpoint ck;
    ck.scheme = cfg.sde();
    ck.seed = cfg.seed;
    ck.config_text = config::to_text(cfg);
    return ck;
}

models::DenoiserNet load_denoiser(const checkpoint::Checkpoint& ck, const std::string& group, const RunConfig& cfg) {
    if (!(ck.scheme == cfg.sde()))
        throw ValidationError("incompatible checkpoint scheme: checkpoint uses " + to_string(ck.scheme.variant) +
                              " (delta " + std::to_string(ck.scheme.delta) + ", T " + std::to_string(ck.scheme.T) +
                              "), config asks for " + to_string(cfg.scheme) + " (delta " +
                              std::to_string(cfg.delta) + ", T " + std::to_string(cfg.T) + ")");
    models::DenoiserNet net(cfg.net(static_cast<int>(data_law(cfg).dim())), cfg.sde());
    checkpoint::load_into(ck.group(group), net.named_parameters());
    return net;
}

SampleBatch generate(const models::GeneratorNet& G, const RunConfig& cfg, int K, Eigen::Index n, std::uint64_t seed,
                     double scale) {
    RunConfig c = cfg;
    c.scale = scale;
    auto out = metrics::multistep_sample(G.as_generator(), c.time_grid(K), n, G.config().data_dim, cfg.sde(), seed);
    out.provenance = "cosim-" + std::to_string(K) + "-step";
    return out;
}

bool ConsistencyReport::passed() const {
    if (w2.empty()) return false;
    for (double v : w2)
        if (!std::isfinite(v) || v > ratio_limit * w2.front()) return false;
    return true;
}

ConsistencyReport consistency_check(const models::GeneratorNet& G, const RunConfig& cfg, Eigen::Index n,
                                    std::uint64_t seed) {
    ConsistencyReport r;
    const Points ref = reference_points(cfg, n, seed);
    const auto law = data_law(cfg);
    Rng rng(seed + 1);
    for (double frac : {0.25, 0.5, 1.0}) {
        const double t = frac * cfg.T;
        const Points x0 = law.sample(n, rng);
        const Points pushed = metrics::consistency_pushforward(G.as_generator(), x0, t, cfg.sde(), rng);
        r.times.push_back(t);
        r.w2.push_back(metrics::w2_empirical(pushed, ref));
    }
    return r;
}

ScaleSweep sweep_scale(const models::GeneratorNet& G, const RunConfig& cfg, int K,
                       const std::vector<double>& candidates, Eigen::Index n, std::uint64_t seed) {
    if (candidates.empty()) throw ValidationError("sweep-scale needs at least one candidate");
    ScaleSweep out;
    out.steps = K;
    const Points ref = reference_points(cfg, n, seed);
    for (double sc : candidates) {
        if (!(sc > 0.0)) throw ValidationError("scale candidates must be > 0");
        const auto s = generate(G, cfg, K, n, seed + 1, sc);
        out.points.push_back({sc, metrics::w2_empirical(s.points, ref)});
    }
    const auto best = std::min_element(out.points.begin(), out.points.end(),
                                       [](const ScalePoint& a, const ScalePoint& b) { return a.w2 < b.w2; });
    out.best_scale = best->scale;
    out.best_w2 = best->w2;
    return out;
}

}  // namespace cosim::experiment
