#include "cosim/cli.hpp"

#include "cosim/experiment.hpp"
#include "cosim/io.hpp"
#include "cosim/metrics.hpp"
#include "cosim/teacher.hpp"
#include "cosim/theory.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <optional>

namespace cosim::cli {

namespace fs = std::filesystem;
using config::RunConfig;
using io::format_double;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_path, "Config file (flat key = value)");
    sub->add_option("--set", c.sets, "Override one config key, key=value (repeatable)");
    sub->add_option("--out", c.out_dir, "Output directory");
}

/// Defaults (or a checkpoint's snapshot), then --config, then --set, then the
/// output directory overrides.
RunConfig resolve_config(const Common& c, const std::string& snapshot = "") {
    RunConfig cfg = snapshot.empty() ? RunConfig{} : config::parse_config(snapshot);
    if (!c.config_path.empty()) cfg = config::load_config(c.config_path);
    config::apply_overrides(cfg, c.sets);
    if (const char* env = std::getenv(kOutDirEnv); env && *env) cfg.out_dir = env;
    if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
    return cfg;
}

fs::path in_out_dir(const RunConfig& cfg, const std::string& explicit_path, const std::string& name) {
    return explicit_path.empty() ? fs::path(cfg.out_dir) / name : fs::path(explicit_path);
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + suffix);
}

void save_checkpoint(const checkpoint::Checkpoint& ck, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    checkpoint::save(ck, path);
}

// train-teacher -------------------------------------------------------------------

struct TeacherArgs {
    Common common;
    std::string output;
};

int cmd_train_teacher(const TeacherArgs& a, std::ostream& out) {
    const RunConfig cfg = resolve_config(a.common);
    const Dataset data = experiment::make_dataset(cfg);
    const auto tc = cfg.teacher_config(static_cast<int>(data.dim()));

    std::string log = "iteration,loss\n";
    auto progress = [&](int it, double loss) {
        log += std::to_string(it) + "," + format_double(loss) + "\n";
        out << "iteration " << it << "  loss " << loss << "\n";
    };
    const auto result = teacher::train_teacher(tc, cfg.sde(), data, progress, cfg.log_every);

    auto ck = experiment::new_checkpoint(cfg);
    ck.add_group("teacher", result.net.named_parameters());
    const fs::path path = in_out_dir(cfg, a.output, "teacher.ckpt");
    save_checkpoint(ck, path);
    io::write_text(sibling(path, "_log.csv"), log);
    out << "teacher: " << result.iterations << " iterations, final loss " << result.final_loss << "\n"
        << "wrote " << path.string() << "\n";
    return kOk;
}

// distill ---------------------------------------------------------------------------

struct DistillArgs {
    Common common;
    std::string teacher;
    std::string output;
};

int cmd_distill(const DistillArgs& a, std::ostream& out) {
    const auto tck = checkpoint::load(a.teacher);
    const RunConfig cfg = resolve_config(a.common, tck.config_text);
    const auto teacher_net = experiment::load_denoiser(tck, "teacher", cfg);
    const Dataset data = experiment::make_dataset(cfg);

    const Points ref = experiment::reference_points(cfg, cfg.eval_samples, cfg.seed);
    std::string log = "iteration,phi_loss,psi_loss,w2\n";
    distill::TrainHooks hooks;
    hooks.log_every = cfg.log_every;
    hooks.eval_w2 = [&](const models::GeneratorNet& g) {
        const auto s = experiment::generate(g, cfg, 1, cfg.eval_samples, cfg.seed + 1, cfg.scale);
        return metrics::w2_empirical(s.points, ref);
    };
    hooks.on_log = [&](const distill::LogRow& r) {
        log += std::to_string(r.iteration) + "," + format_double(r.phi_loss) + "," + format_double(r.psi_loss) + "," +
               (r.w2 ? format_double(*r.w2) : "") + "\n";
        out << "iteration " << r.iteration << "  phi " << r.phi_loss << "  psi " << r.psi_loss;
        if (r.w2) out << "  w2 " << *r.w2;
        out << "\n";
    };
    const auto result = distill::train_distill(cfg.distill_config(), teacher_net, data, hooks);

    auto ck = experiment::new_checkpoint(cfg);
    ck.add_group("teacher", teacher_net.named_parameters());
    ck.add_group("generator", result.generator.named_parameters());
    ck.add_group("aux", result.aux.named_parameters());
    ck.add_group("ema", result.ema.named_parameters());
    const fs::path path = in_out_dir(cfg, a.output, "distill.ckpt");
    save_checkpoint(ck, path);
    io::write_text(sibling(path, "_log.csv"), log);
    out << "distill: " << result.phi_updates << " generator updates, " << result.psi_updates
        << " auxiliary updates\nwrote " << path.string() << "\n";
    return kOk;
}

// sample ----------------------------------------------------------------------------

struct SampleArgs {
    Common common;
    std::string checkpoint;
    std::string model;
    std::optional<int> steps;
    std::optional<long> n;
    std::optional<std::uint64_t> seed;
    std::string output;
    bool no_plot = false;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
    const auto ck = checkpoint::load(a.checkpoint);
    const RunConfig cfg = resolve_config(a.common, ck.config_text);
    const std::string model = !a.model.empty() ? a.model : ck.has_group("ema") ? "ema" : "teacher";
    const Eigen::Index n = a.n.value_or(cfg.eval_samples);
    const std::uint64_t seed = a.seed.value_or(cfg.seed);
    if (n < 1) throw ValidationError("--n must be >= 1");

    SampleBatch batch;
    if (model == "teacher") {
        const int steps = a.steps.value_or(100);
        if (steps < 1) throw ValidationError("--steps must be >= 1");
        const auto net = experiment::load_denoiser(ck, "teacher", cfg);
        batch = teacher::reverse_sde_sample(net.as_score(), cfg.sde(), net.config().data_dim, steps, n, seed, cfg.rho);
    } else if (model == "ema" || model == "generator") {
        const int steps = a.steps.value_or(cfg.steps);
        if (steps < 1) throw ValidationError("--steps must be >= 1");
        const auto net = experiment::load_denoiser(ck, model, cfg);
        batch = experiment::generate(net, cfg, steps, n, seed, cfg.scale);
    } else {
        throw ValidationError("--model must be ema, generator or teacher");
    }
    if (!batch.finite()) throw NumericalError("sampling produced non-finite points");

    const fs::path path = in_out_dir(cfg, a.output, "samples.csv");
    io::write_points_csv(batch.points, path);
    out << "wrote " << batch.size() << " samples (" << model << ", " << batch.provenance << ", seed " << seed
        << ") to " << path.string() << "\n";
    if (!a.no_plot && batch.dim() == 2) {
        const fs::path plot = sibling(path, ".ppm");
        io::write_scatter_ppm(batch.points, plot);
        out << "wrote " << plot.string() << "\n";
    }
    return kOk;
}

// eval ------------------------------------------------------------------------------

struct EvalArgs {
    Common common;
    std::string a;
    std::string b;
    std::string output;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const RunConfig cfg = resolve_config(a.common);
    SampleBatch A{io::read_points_csv(a.a), 0, a.a};
    SampleBatch B{io::read_points_csv(a.b), 0, a.b};
    if (A.dim() != B.dim()) throw ValidationError("sample files have different dimensions");
    const auto report = metrics::evaluate(A, B);
    const fs::path path = in_out_dir(cfg, a.output, "eval.csv");
    io::write_text(path, metrics::EvalReport::csv_header() + "\n" + report.csv_row() + "\n");
    out << report.pretty() << "wrote " << path.string() << "\n";
    return kOk;
}

// verify-theory ---------------------------------------------------------------------

struct TheoryArgs {
    Common common;
    std::string which = "all";
    std::optional<double> coef;
    std::string checkpoint;
};

const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

int cmd_verify_theory(const TheoryArgs& a, std::ostream& out) {
    const std::vector<std::string> cases{"gaussian-fixed-point", "sivi-reduction", "phi-equilibrium", "consistency"};
    if (a.which != "all" && std::find(cases.begin(), cases.end(), a.which) == cases.end())
        throw ValidationError("unknown case '" + a.which + "'");
    const bool all = a.which == "all";
    bool ok = true;

    if (all || a.which == "gaussian-fixed-point") {
        const std::vector<double> coefs = a.coef ? std::vector<double>{*a.coef} : std::vector<double>{0.5, 0.75, 1.0};
        for (double c : coefs) {
            if (!(c > 0.0)) throw ValidationError("--coef must be > 0");
            theory::FixedPointCase fc;
            fc.coef = c;
            const auto r = theory::gaussian_fixed_point(fc);
            out << "gaussian-fixed-point coef=" << c << " rel_l2=" << r.rel_l2 << " threshold=" << r.threshold << " "
                << verdict(r.passed()) << "\n";
            ok = ok && r.passed();
        }
    }
    if (all || a.which == "sivi-reduction") {
        const auto r = theory::sivi_reduction();
        out << "sivi-reduction generator max_abs_diff=" << r.phi.max_abs_diff << " threshold=" << r.phi.threshold
            << " " << verdict(r.phi.passed()) << "\n"
            << "sivi-reduction auxiliary max_abs_diff=" << r.psi.max_abs_diff << " threshold=" << r.psi.threshold
            << " " << verdict(r.psi.passed()) << "\n";
        ok = ok && r.passed();
    }
    if (all || a.which == "phi-equilibrium") {
        const auto r = theory::phi_equilibrium();
        out << "phi-equilibrium max_abs_grad=" << r.max_abs_grad << " threshold=" << r.threshold << " "
            << verdict(r.passed()) << "\n";
        ok = ok && r.passed();
    }
    if (all || a.which == "consistency") {
        if (a.checkpoint.empty()) {
            if (!all) throw ValidationError("the consistency case needs --checkpoint (a distilled checkpoint)");
            out << "consistency skipped (no --checkpoint)\n";
        } else {
            const auto ck = checkpoint::load(a.checkpoint);
            const RunConfig cfg = resolve_config(a.common, ck.config_text);
            const auto G = experiment::load_denoiser(ck, ck.has_group("ema") ? "ema" : "generator", cfg);
            const auto r = experiment::consistency_check(G, cfg, cfg.eval_samples, cfg.seed);
            for (std::size_t i = 0; i < r.times.size(); ++i)
                out << "consistency t=" << r.times[i] << " w2=" << r.w2[i] << "\n";
            out << "consistency limit=" << r.ratio_limit << "x smallest-t w2 " << verdict(r.passed()) << "\n";
            ok = ok && r.passed();
        }
    }
    return ok ? kOk : kValidation;
}

// sweep-scale -----------------------------------------------------------------------

struct SweepArgs {
    Common common;
    std::string checkpoint;
    std::optional<int> steps;
    std::vector<double> candidates;
    std::string output;
};

int cmd_sweep_scale(const SweepArgs& a, std::ostream& out) {
    const auto ck = checkpoint::load(a.checkpoint);
    const RunConfig cfg = resolve_config(a.common, ck.config_text);
    // With one step the grid is [T, delta] whatever the scale.
    const int K = a.steps.value_or(std::max(cfg.steps, 2));
    if (K < 2) throw ValidationError("sweep-scale needs --steps >= 2");
    const auto G = experiment::load_denoiser(ck, ck.has_group("ema") ? "ema" : "generator", cfg);
    const auto& cands = a.candidates.empty() ? experiment::kScaleCandidates : a.candidates;
    const auto sweep = experiment::sweep_scale(G, cfg, K, cands, cfg.eval_samples, cfg.seed);

    std::string csv = "scale,steps,w2\n";
    for (const auto& p : sweep.points) {
        csv += format_double(p.scale) + "," + std::to_string(K) + "," + format_double(p.w2) + "\n";
        out << "scale " << p.scale << "  w2 " << p.w2 << "\n";
    }
    const fs::path path = in_out_dir(cfg, a.output, "sweep_scale.csv");
    io::write_text(path, csv);
    out << "best scale " << sweep.best_scale << " (w2 " << sweep.best_w2 << ", " << K << " steps)\n"
        << "wrote " << path.string() << "\n";
    return kOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Continuous semi-implicit distillation on toy data"};
    app.name("cosim");
    app.require_subcommand(0, 1);
    bool explain = false;
    app.add_flag("--explain-defaults", explain, "Print every config default and where it comes from");

    TeacherArgs ta;
    auto* train = app.add_subcommand("train-teacher", "Train the teacher denoiser with DSM");
    add_common(train, ta.common);
    train->add_option("--output", ta.output, "Checkpoint path (default <out>/teacher.ckpt)");

    DistillArgs da;
    auto* distill = app.add_subcommand("distill", "Distill a trained teacher");
    add_common(distill, da.common);
    distill->add_option("--teacher", da.teacher, "Teacher checkpoint")->required();
    distill->add_option("--output", da.output, "Checkpoint path (default <out>/distill.ckpt)");

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
    add_common(sample, sa.common);
    sample->add_option("--checkpoint", sa.checkpoint, "Checkpoint to sample from")->required();
    sample->add_option("--model", sa.model, "ema | generator | teacher (default ema when present)");
    sample->add_option("--steps", sa.steps, "Generator steps, or reverse-SDE steps for the teacher (default 100)");
    sample->add_option("--n", sa.n, "Number of samples (default eval_samples)");
    sample->add_option("--seed", sa.seed, "Sampler seed (default: config seed)");
    sample->add_option("--output", sa.output, "CSV path (default <out>/samples.csv)");
    sample->add_flag("--no-plot", sa.no_plot, "Skip the scatter raster");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Compare two sample files");
    add_common(eval, ea.common);
    eval->add_option("a", ea.a, "First sample CSV")->required();
    eval->add_option("b", ea.b, "Second sample CSV")->required();
    eval->add_option("--output", ea.output, "Report CSV path (default <out>/eval.csv)");

    TheoryArgs va;
    auto* verify = app.add_subcommand("verify-theory", "Run the analytic property checks");
    add_common(verify, va.common);
    verify->add_option("--case", va.which,
                       "gaussian-fixed-point | sivi-reduction | phi-equilibrium | consistency | all");
    verify->add_option("--coef", va.coef, "Auxiliary-stage coefficient for the fixed-point case");
    verify->add_option("--checkpoint", va.checkpoint, "Distilled checkpoint for the consistency case");

    SweepArgs wa;
    auto* sweep = app.add_subcommand("sweep-scale", "Pick the inference grid scale with the lowest W2");
    add_common(sweep, wa.common);
    sweep->add_option("--checkpoint", wa.checkpoint, "Distilled checkpoint")->required();
    sweep->add_option("--steps", wa.steps, "Grid steps (default max(steps, 2))");
    sweep->add_option("--candidates", wa.candidates, "Scale candidates (default 0.5 0.75 1 1.5 2)");
    sweep->add_option("--output", wa.output, "CSV path (default <out>/sweep_scale.csv)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (explain) {
            out << config::explain_defaults_text();
            return kOk;
        }
        if (train->parsed()) return cmd_train_teacher(ta, out);
        if (distill->parsed()) return cmd_distill(da, out);
        if (sample->parsed()) return cmd_sample(sa, out);
        if (eval->parsed()) return cmd_eval(ea, out);
        if (verify->parsed()) return cmd_verify_theory(va, out);
        if (sweep->parsed()) return cmd_sweep_scale(wa, out);
        err << app.help();
        return kUsage;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }
}

}  // namespace cosim::cli
