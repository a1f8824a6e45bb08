#pragma once

// Run configuration: a flat `key = value` document.
//
//   # comment
//   scheme = ve
//   coef = 0.75
//   hidden = 128, 128, 128
//
// Blank lines and `#` comments are ignored, keys are case-sensitive, every key
// may appear at most once and unknown keys are rejected. Absent keys take the
// defaults below. `delta` and `T` default per scheme (VE 0.002 / 80, VP 1e-3 / 8).

#include "cosim/distill.hpp"
#include "cosim/teacher.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace cosim::config {

class ConfigError : public ValidationError {
public:
    enum class Kind { MissingFile, Parse, UnknownKey, Constraint };
    ConfigError(Kind kind, const std::string& what);
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct RunConfig {
    // Forward process and schedule.
    SdeVariant scheme = SdeVariant::VE;
    double delta = 0.002;
    double T = 80.0;
    double rho = 7.0;
    int R = 4;

    // Inference grid.
    std::string grid = "edm";  // edm | repeat-mid
    double scale = 1.0;
    double t_mid = 1.0;
    int steps = 1;

    // Data.
    std::string dataset = "ring8";
    int dataset_size = 20000;
    std::uint64_t data_seed = 1;

    // Networks.
    double sigma_data = kSigmaData;
    int embed_dim = 16;
    std::vector<int> hidden{128, 128, 128};

    // Teacher.
    int teacher_iterations = 50000;
    int teacher_batch_size = 256;
    double teacher_lr = 1e-3;
    double teacher_beta1 = 0.9;

    // Distillation.
    double alpha = 1.2;
    double coef = 1.0;
    double lr = 3e-5;
    int batch_size = 128;
    int iterations = 20000;
    double ema_halflife = 50000.0;
    distill::WeightMode weights = distill::WeightMode::Denoiser;
    double adam_beta1 = 0.0;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    // Logging and evaluation.
    int log_every = 1000;
    int eval_samples = 1024;

    std::uint64_t seed = 0;
    std::string out_dir = "runs";

    void validate() const;

    SdeScheme sde() const;
    TimeSchedule schedule() const;
    TimeGrid time_grid(int K) const;
    models::NetConfig net(int data_dim) const;
    teacher::TeacherConfig teacher_config(int data_dim) const;
    distill::DistillConfig distill_config() const;
};

/// Parses a document; throws ConfigError (Parse, UnknownKey, Constraint).
RunConfig parse_config(const std::string& text);
/// Throws ConfigError(MissingFile) when the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);

/// Applies one `key=value` override on top of an existing config.
void apply_override(RunConfig& cfg, const std::string& assignment);
/// Applies several overrides, then validates once. Switching `scheme` resets
/// `delta` and `T` to that scheme's defaults unless the same list sets them.
/// On error `cfg` is left unchanged.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

/// Every key, in a fixed order, so save -> load -> save is byte-stable.
std::string to_text(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

struct DefaultNote {
    std::string key;
    std::string value;
    bool published;  // taken from the published experimental setup
    std::string note;
};

/// One entry per key, describing where its default comes from.
std::vector<DefaultNote> explain_defaults();
std::string explain_defaults_text();

}  // namespace cosim::config
