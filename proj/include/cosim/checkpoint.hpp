#pragma once

// Binary checkpoints. Layout, all integers little-endian:
//
//   "COSIMCKP"            8-byte magic
//   u32 version
//   u8  scheme (0 = VP, 1 = VE), f64 delta, f64 T
//   u64 seed
//   u32 length, bytes     config snapshot (flat key = value text)
//   u32 group count, then per group:
//     u32 length, bytes   group name (teacher | generator | aux | ema)
//     u32 tensor count, then per tensor:
//       u32 length, bytes name
//       u32 rank, u64 dims[rank]
//       f32 values[prod(dims)]
//
// Parameters are stored as 32-bit floats; loading widens them to double, so a
// save -> load -> save cycle reproduces the same bytes.

#include "cosim/diffusion.hpp"
#include "cosim/models.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cosim::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct TensorRecord {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> values;
};

struct Group {
    std::string name;
    std::vector<TensorRecord> tensors;
};

struct Checkpoint {
    std::uint32_t version = kFormatVersion;
    SdeScheme scheme;
    std::uint64_t seed = 0;
    std::string config_text;
    std::vector<Group> groups;

    bool has_group(const std::string& name) const;
    /// Throws ValidationError if absent.
    const Group& group(const std::string& name) const;
    void add_group(const std::string& name, const models::NamedTensors& params);
};

/// Writes a group's values into matching parameters (names and shapes must agree).
void load_into(const Group& g, const models::NamedTensors& dst);

std::string serialize(const Checkpoint& ck);
/// Throws ValidationError on bad magic, unsupported version, truncation or a
/// payload that disagrees with its declared shape.
Checkpoint deserialize(const std::string& bytes);

void save(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);

}  // namespace cosim::checkpoint
