#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "capsnet/model.hpp"

namespace capsnet {

inline constexpr std::uint16_t kArchiveVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor<float> value;
};

/// Portable trained-weights file:
///   "CAPW" | version u16 | model name (str16) | spec JSON (str32) |
///   fingerprint u64 | class count u16 + names (str16 each) |
///   init scheme (str16) | train seed u64 | tensor count u32 |
///   per tensor: name (str16) | rank u8 | dims u32 each | float32 payload.
/// Strings are length-prefixed, everything little-endian.
struct WeightArchive {
    std::string model_name;
    std::string spec_json;
    std::uint64_t fingerprint = 0;
    std::vector<std::string> class_names;
    std::string init_scheme = kInitScheme;
    std::uint64_t seed = 0;
    std::vector<NamedTensor> tensors;

    ModelSpec spec() const { return spec_from_json(spec_json); }
};

WeightArchive make_archive(const Model<float>& model, std::vector<std::string> class_names, std::uint64_t seed);

std::vector<std::uint8_t> encode_archive(const WeightArchive& archive);
WeightArchive decode_archive(const std::vector<std::uint8_t>& bytes, const std::string& what = "weight archive");

void save_weights(const std::filesystem::path& path, const WeightArchive& archive);
void save_weights(const std::filesystem::path& path, const Model<float>& model,
                  std::vector<std::string> class_names = {}, std::uint64_t seed = 0);
WeightArchive read_archive(const std::filesystem::path& path);

/// Model from the spec stored in the archive.
Model<float> model_from_archive(const WeightArchive& archive);
/// Throws FingerprintError unless the archive was written for `expected`.
Model<float> model_from_archive(const WeightArchive& archive, const ModelSpec& expected);
Model<float> load_weights(const std::filesystem::path& path, const ModelSpec& expected);

}  // namespace capsnet
