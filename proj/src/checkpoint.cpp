#include "cosim/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cosim::checkpoint {

namespace {

constexpr char kMagic[8] = {'C', 'O', 'S', 'I', 'M', 'C', 'K', 'P'};
const std::vector<std::string> kGroupNames{"teacher", "generator", "aux", "ema"};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& s) : s_(s) {}
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(s_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    void expect(const char* p, std::size_t n) {
        need(n);
        if (std::memcmp(s_.data() + pos_, p, n) != 0) throw ValidationError("checkpoint: bad magic (not a checkpoint file)");
        pos_ += n;
    }
    bool done() const { return pos_ == s_.size(); }

private:
    void need(std::size_t n) const {
        if (s_.size() - pos_ < n) throw ValidationError("checkpoint: truncated file");
    }
    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

bool Checkpoint::has_group(const std::string& name) const {
    for (const auto& g : groups)
        if (g.name == name) return true;
    return false;
}

const Group& Checkpoint::group(const std::string& name) const {
    for (const auto& g : groups)
        if (g.name == name) return g;
    throw ValidationError("checkpoint has no '" + name + "' parameters");
}

void Checkpoint::add_group(const std::string& name, const models::NamedTensors& params) {
    if (std::find(kGroupNames.begin(), kGroupNames.end(), name) == kGroupNames.end())
        throw ValidationError("checkpoint: unknown group '" + name + "'");
    if (has_group(name)) throw ValidationError("checkpoint: duplicate group '" + name + "'");
    Group g{name, {}};
    for (const auto& [pname, t] : params) {
        TensorRecord r{pname, {}, {}};
        for (auto d : t.shape()) r.shape.push_back(d);
        r.values.reserve(t.numel());
        for (double v : t.data()) r.values.push_back(static_cast<float>(v));
        g.tensors.push_back(std::move(r));
    }
    groups.push_back(std::move(g));
}

void load_into(const Group& g, const models::NamedTensors& dst) {
    if (g.tensors.size() != dst.size())
        throw ValidationError("checkpoint group '" + g.name + "' has " + std::to_string(g.tensors.size()) +
                              " tensors, model expects " + std::to_string(dst.size()));
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const auto& rec = g.tensors[i];
        auto [name, t] = dst[i];
        if (rec.name != name) throw ValidationError("checkpoint tensor '" + rec.name + "' where '" + name + "' expected");
        const nd::Shape& shape = t.shape();
        if (rec.shape.size() != shape.size() || !std::equal(shape.begin(), shape.end(), rec.shape.begin()))
            throw ValidationError("checkpoint tensor '" + name + "' shape does not match the model " +
                                  nd::shape_string(shape));
        auto out = t.data_mut();
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<double>(rec.values[j]);
    }
}

std::string serialize(const Checkpoint& ck) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(ck.version);
    w.u8(ck.scheme.variant == SdeVariant::VE ? 1 : 0);
    w.f64(ck.scheme.delta);
    w.f64(ck.scheme.T);
    w.u64(ck.seed);
    w.str(ck.config_text);
    w.u32(static_cast<std::uint32_t>(ck.groups.size()));
    for (const auto& g : ck.groups) {
        w.str(g.name);
        w.u32(static_cast<std::uint32_t>(g.tensors.size()));
        for (const auto& t : g.tensors) {
            w.str(t.name);
            w.u32(static_cast<std::uint32_t>(t.shape.size()));
            for (auto d : t.shape) w.u64(d);
            for (float v : t.values) w.f32(v);
        }
    }
    return w.take();
}

Checkpoint deserialize(const std::string& bytes) {
    Reader r(bytes);
    r.expect(kMagic, sizeof kMagic);
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != kFormatVersion)
        throw ValidationError("checkpoint: unsupported format version " + std::to_string(ck.version) + " (expected " +
                              std::to_string(kFormatVersion) + ")");
    const std::uint8_t variant = r.u8();
    if (variant > 1) throw ValidationError("checkpoint: bad scheme tag");
    ck.scheme.variant = variant == 1 ? SdeVariant::VE : SdeVariant::VP;
    ck.scheme.delta = r.f64();
    ck.scheme.T = r.f64();
    ck.scheme.validate();
    ck.seed = r.u64();
    ck.config_text = r.str();
    const std::uint32_t n_groups = r.u32();
    for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
        Group g;
        g.name = r.str();
        const std::uint32_t n_tensors = r.u32();
        for (std::uint32_t ti = 0; ti < n_tensors; ++ti) {
            TensorRecord t;
            t.name = r.str();
            const std::uint32_t rank = r.u32();
            std::uint64_t numel = 1;
            for (std::uint32_t k = 0; k < rank; ++k) {
                t.shape.push_back(r.u64());
                numel *= t.shape.back();
            }
            if (numel > bytes.size() / 4) throw ValidationError("checkpoint: payload shorter than declared shape");
            t.values.resize(numel);
            for (auto& v : t.values) v = r.f32();
            g.tensors.push_back(std::move(t));
        }
        ck.groups.push_back(std::move(g));
    }
    if (!r.done()) throw ValidationError("checkpoint: trailing bytes after the last group");
    return ck;
}

void save(const Checkpoint& ck, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write checkpoint " + path.string());
    const std::string bytes = serialize(ck);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("checkpoint not found: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize(ss.str());
}

}  // namespace cosim::checkpoint
