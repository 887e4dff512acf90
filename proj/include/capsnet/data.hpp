#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "capsnet/tensor.hpp"

namespace capsnet {

/// One labeled example: an image (C x H x W, values in [0,1]) or a feature vector.
struct Sample {
    Tensor<float> x;
    std::size_t label = 0;
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    std::size_t n_classes() const noexcept { return class_names.size(); }
    const Shape& sample_shape() const;
    std::vector<std::size_t> class_counts() const;
    const std::string& class_name(std::size_t label) const;
};

/// Either `root/<class>/<file>.ppm|pgm` (classes in lexicographic order, files
/// sorted by name) or a packed CAPD file. Images are rescaled to [0,1],
/// converted to `channels` (0 keeps the first image's count) and resized to
/// side x side.
Dataset load_image_dataset(const std::filesystem::path& root, std::size_t expected_side, std::size_t channels = 0);

/// Stratified: every class contributes floor(train_frac * n_c) samples to
/// train and the rest to test. Both halves keep the input order.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double train_frac, std::uint64_t seed);

/// Stratified subset of floor(fraction * n_c) samples per class.
Dataset select_fraction(const Dataset& data, double fraction, std::uint64_t seed);

// ---- packed formats --------------------------------------------------------

inline constexpr std::uint16_t kPackedVersion = 1;
inline constexpr std::uint16_t kFeatureVersion = 1;

/// CAPD: "CAPD" | version u16 | n_samples u32 | channels u8 | side u16 |
/// n_classes u16 | per sample: label u16 + channels*side^2 bytes (planar).
void write_packed_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_packed_dataset(const std::filesystem::path& path);

struct FeatureRecord {
    Tensor<float> features;
    std::size_t label = 0;
};

/// FEAT: "FEAT" | version u16 | n_records u32 | dim u32 | per record: label
/// u16 + dim float32.
void write_feature_file(const std::filesystem::path& path, const std::vector<FeatureRecord>& records,
                        std::size_t dim);
std::vector<FeatureRecord> load_feature_dataset(const std::filesystem::path& path);

/// Class names are the decimal label values 0 .. max label.
Dataset feature_dataset(const std::vector<FeatureRecord>& records);

}  // namespace capsnet
