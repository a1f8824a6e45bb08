#include "cosim/config.hpp"

#include "cosim/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace cosim::config {

namespace {

const char* kind_prefix(ConfigError::Kind k) {
    switch (k) {
        case ConfigError::Kind::MissingFile: return "config file not found: ";
        case ConfigError::Kind::Parse: return "config parse error: ";
        case ConfigError::Kind::UnknownKey: return "unknown config key: ";
        case ConfigError::Kind::Constraint: return "config constraint violated: ";
    }
    return "";
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(ConfigError::Kind::Parse, key + ": expected a number, got '" + v + "'");
    return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
    Int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(ConfigError::Kind::Parse, key + ": expected an integer, got '" + v + "'");
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
    if (out.empty()) throw ConfigError(ConfigError::Kind::Parse, key + ": expected a comma-separated list");
    return out;
}

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define DOUBLE_FIELD(name) \
    Field { #name, [](const RunConfig& c) { return fmt(c.name); }, \
            [](RunConfig& c, const std::string& v) { c.name = parse_double(#name, v); } }
#define INT_FIELD(name) \
    Field { #name, [](const RunConfig& c) { return std::to_string(c.name); }, \
            [](RunConfig& c, const std::string& v) { c.name = parse_int<decltype(c.name)>(#name, v); } }
#define STRING_FIELD(name) \
    Field { #name, [](const RunConfig& c) { return c.name; }, \
            [](RunConfig& c, const std::string& v) { c.name = v; } }

const std::vector<Field>& fields() {
    static const std::vector<Field> f{
        Field{"scheme", [](const RunConfig& c) { return to_string(c.scheme); },
              [](RunConfig& c, const std::string& v) {
                  try {
                      c.scheme = parse_sde_variant(v);
                  } catch (const ValidationError&) {
                      throw ConfigError(ConfigError::Kind::Parse, "scheme: expected ve or vp, got '" + v + "'");
                  }
              }},
        DOUBLE_FIELD(delta),
        DOUBLE_FIELD(T),
        DOUBLE_FIELD(rho),
        INT_FIELD(R),
        STRING_FIELD(grid),
        DOUBLE_FIELD(scale),
        DOUBLE_FIELD(t_mid),
        INT_FIELD(steps),
        STRING_FIELD(dataset),
        INT_FIELD(dataset_size),
        INT_FIELD(data_seed),
        DOUBLE_FIELD(sigma_data),
        INT_FIELD(embed_dim),
        Field{"hidden",
              [](const RunConfig& c) {
                  std::string s;
                  for (std::size_t i = 0; i < c.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden[i]);
                  return s;
              },
              [](RunConfig& c, const std::string& v) { c.hidden = parse_int_list("hidden", v); }},
        INT_FIELD(teacher_iterations),
        INT_FIELD(teacher_batch_size),
        DOUBLE_FIELD(teacher_lr),
        DOUBLE_FIELD(teacher_beta1),
        DOUBLE_FIELD(alpha),
        DOUBLE_FIELD(coef),
        DOUBLE_FIELD(lr),
        INT_FIELD(batch_size),
        INT_FIELD(iterations),
        DOUBLE_FIELD(ema_halflife),
        Field{"weights", [](const RunConfig& c) { return distill::to_string(c.weights); },
              [](RunConfig& c, const std::string& v) {
                  try {
                      c.weights = distill::parse_weight_mode(v);
                  } catch (const ValidationError&) {
                      throw ConfigError(ConfigError::Kind::Parse,
                                        "weights: expected unit, normalized or denoiser, got '" + v + "'");
                  }
              }},
        DOUBLE_FIELD(adam_beta1),
        DOUBLE_FIELD(adam_beta2),
        DOUBLE_FIELD(adam_eps),
        INT_FIELD(log_every),
        INT_FIELD(eval_samples),
        INT_FIELD(seed),
        STRING_FIELD(out_dir),
    };
    return f;
}

#undef DOUBLE_FIELD
#undef INT_FIELD
#undef STRING_FIELD

const Field& field_for(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return f;
    throw ConfigError(ConfigError::Kind::UnknownKey, "'" + key + "'");
}

std::pair<std::string, std::string> split_assignment(const std::string& line, int lineno) {
    const auto eq = line.find('=');
    const std::string where = lineno > 0 ? "line " + std::to_string(lineno) + ": " : "";
    if (eq == std::string::npos) throw ConfigError(ConfigError::Kind::Parse, where + "expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(ConfigError::Kind::Parse, where + "missing key");
    if (value.empty()) throw ConfigError(ConfigError::Kind::Parse, where + "missing value for '" + key + "'");
    return {key, value};
}

void constraint(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(ConfigError::Kind::Constraint, what);
}

}  // namespace

ConfigError::ConfigError(Kind kind, const std::string& what)
    : ValidationError(kind_prefix(kind) + what), kind_(kind) {}

void RunConfig::validate() const {
    constraint(delta > 0.0 && T > delta, "need 0 < delta < T");
    if (scheme == SdeVariant::VP) constraint(T <= 20.0, "VP T must be <= 20 (a(T) underflows beyond)");
    constraint(rho >= 1.0, "rho must be >= 1");
    constraint(R >= 1, "R must be >= 1");
    constraint(grid == "edm" || grid == "repeat-mid", "grid must be edm or repeat-mid");
    constraint(scale > 0.0, "scale must be > 0");
    constraint(t_mid > delta && t_mid < T, "t_mid must lie strictly between delta and T");
    constraint(steps >= 1, "steps must be >= 1");
    const auto names = oracle::dataset_names();
    constraint(std::find(names.begin(), names.end(), dataset) != names.end(), "unknown dataset '" + dataset + "'");
    constraint(dataset_size >= 1, "dataset_size must be >= 1");
    constraint(sigma_data > 0.0, "sigma_data must be > 0");
    constraint(embed_dim >= 2 && embed_dim % 2 == 0, "embed_dim must be a positive even number");
    constraint(!hidden.empty(), "hidden must list at least one layer");
    for (int h : hidden) constraint(h >= 1, "hidden widths must be >= 1");
    constraint(teacher_iterations >= 0 && iterations >= 0, "iteration counts must be >= 0");
    constraint(teacher_batch_size >= 1 && batch_size >= 1, "batch sizes must be >= 1");
    constraint(teacher_lr > 0.0 && lr > 0.0, "learning rates must be > 0");
    constraint(teacher_beta1 >= 0.0 && teacher_beta1 < 1.0, "teacher_beta1 must be in [0, 1)");
    constraint(alpha > 0.0, "alpha must be > 0");
    constraint(coef > 0.0, "coef must be > 0");
    constraint(ema_halflife > 0.0, "ema_halflife must be > 0");
    constraint(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must be in [0, 1)");
    constraint(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must be in [0, 1)");
    constraint(adam_eps > 0.0, "adam_eps must be > 0");
    constraint(log_every >= 0, "log_every must be >= 0");
    constraint(eval_samples >= 1, "eval_samples must be >= 1");
}

SdeScheme RunConfig::sde() const { return {scheme, delta, T}; }

TimeSchedule RunConfig::schedule() const { return TimeSchedule::for_scheme(sde(), rho, R); }

TimeGrid RunConfig::time_grid(int K) const {
    if (grid == "repeat-mid") return repeat_mid_grid(schedule(), K, t_mid);
    return edm_grid(schedule(), K, scale);
}

models::NetConfig RunConfig::net(int data_dim) const { return {data_dim, embed_dim, hidden, sigma_data}; }

teacher::TeacherConfig RunConfig::teacher_config(int data_dim) const {
    teacher::TeacherConfig c;
    c.net = net(data_dim);
    c.schedule = schedule();
    c.iterations = teacher_iterations;
    c.batch_size = teacher_batch_size;
    c.lr = teacher_lr;
    c.adam = {teacher_beta1, adam_beta2, adam_eps};
    c.seed = seed;
    return c;
}

distill::DistillConfig RunConfig::distill_config() const {
    distill::DistillConfig c;
    c.alpha = alpha;
    c.coef = coef;
    c.lr = lr;
    c.batch_size = batch_size;
    c.iterations = iterations;
    c.ema_halflife = ema_halflife;
    c.seed = seed;
    c.schedule = schedule();
    c.weights = weights;
    c.adam = {adam_beta1, adam_beta2, adam_eps};
    return c;
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        auto [key, value] = split_assignment(line, lineno);
        const Field& f = field_for(key);
        if (!seen.insert(key).second)
            throw ConfigError(ConfigError::Kind::Parse, "line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        f.set(cfg, value);
    }
    if (cfg.scheme == SdeVariant::VP) {
        const auto vp = SdeScheme::vp();
        if (!seen.count("delta")) cfg.delta = vp.delta;
        if (!seen.count("T")) cfg.T = vp.T;
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ConfigError::Kind::MissingFile, path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& assignment) { apply_overrides(cfg, {assignment}); }

void apply_overrides(RunConfig& target, const std::vector<std::string>& assignments) {
    RunConfig cfg = target;
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& a : assignments) {
        kv.push_back(split_assignment(a, 0));
        field_for(kv.back().first);
    }
    // A scheme switch brings that scheme's delta and T unless they are also given.
    for (const auto& [key, value] : kv) {
        if (key != "scheme") continue;
        const SdeVariant before = cfg.scheme;
        field_for(key).set(cfg, value);
        if (cfg.scheme != before) {
            const SdeScheme d = cfg.scheme == SdeVariant::VP ? SdeScheme::vp() : SdeScheme::ve();
            cfg.delta = d.delta;
            cfg.T = d.T;
        }
    }
    for (const auto& [key, value] : kv)
        if (key != "scheme") field_for(key).set(cfg, value);
    cfg.validate();
    target = std::move(cfg);
}

std::string to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write config to " + path.string());
    out << to_text(cfg);
}

std::vector<DefaultNote> explain_defaults() {
    const std::map<std::string, std::pair<bool, std::string>> notes{
        {"scheme", {false, "VE process, matching the EDM convention"}},
        {"delta", {false, "standard EDM noise floor for VE (VP default 1e-3)"}},
        {"T", {false, "standard EDM noise ceiling for VE (VP default 8)"}},
        {"rho", {true, "time-warp exponent of the published schedule"}},
        {"R", {true, "largest gap divisor in the published (s, t) schedule"}},
        {"grid", {false, "EDM-style inference grid; repeat-mid is available"}},
        {"scale", {false, "untuned grid warp; sweep-scale searches 0.5 to 2"}},
        {"t_mid", {false, "repeat-mid interior time; no computable published value"}},
        {"steps", {false, "one-step sampling unless asked otherwise"}},
        {"dataset", {false, "8-mode ring, a desk-scale stand-in for image data"}},
        {"dataset_size", {false, "finite training set drawn once from the dataset law"}},
        {"data_seed", {false, "seed of that draw"}},
        {"sigma_data", {true, "data scale in the published preconditioning"}},
        {"embed_dim", {false, "Fourier time-feature width of the toy network"}},
        {"hidden", {false, "toy MLP widths"}},
        {"teacher_iterations", {false, "enough DSM steps for a converged toy teacher"}},
        {"teacher_batch_size", {false, "toy teacher batch"}},
        {"teacher_lr", {false, "toy teacher learning rate"}},
        {"teacher_beta1", {false, "standard Adam momentum for score pretraining"}},
        {"alpha", {true, "generator-stage quadratic coefficient"}},
        {"coef", {true, "auxiliary-stage quadratic coefficient alpha (1 + lambda)"}},
        {"lr", {false, "desk-scale distillation learning rate, chosen by a small sweep"}},
        {"batch_size", {false, "desk-scale distillation batch"}},
        {"iterations", {false, "desk-scale training length"}},
        {"ema_halflife", {false, "EMA half-life in samples, shortened for the toy run length"}},
        {"weights", {false, "stage weights sigma(s)^4 / a(s)^2, residuals in denoiser units"}},
        {"adam_beta1", {true, "zero first-moment decay for both distillation optimizers"}},
        {"adam_beta2", {true, "second-moment decay, small-model setting"}},
        {"adam_eps", {true, "Adam epsilon, small-model setting"}},
        {"log_every", {false, "metrics logging interval"}},
        {"eval_samples", {false, "sample count for the exact-W2 evaluation"}},
        {"seed", {false, "training seed"}},
        {"out_dir", {false, "output directory; COSIM_OUT_DIR overrides it"}},
    };
    const RunConfig defaults;
    std::vector<DefaultNote> out;
    for (const auto& f : fields()) {
        auto it = notes.find(f.key);
        if (it == notes.end()) throw std::logic_error("explain_defaults: no note for " + f.key);
        out.push_back({f.key, f.get(defaults), it->second.first, it->second.second});
    }
    return out;
}

std::string explain_defaults_text() {
    std::ostringstream os;
    for (const auto& n : explain_defaults()) {
        os << n.key << " = " << n.value << "  [" << (n.published ? "published setting" : "artifact decision")
           << "] " << n.note << "\n";
    }
    return os.str();
}

}  // namespace cosim::config
