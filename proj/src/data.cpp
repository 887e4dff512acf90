#include "capsnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "capsnet/binary_io.hpp"
#include "capsnet/image_io.hpp"

namespace capsnet {

namespace fs = std::filesystem;

const Shape& Dataset::sample_shape() const {
    if (samples.empty()) throw DataError("empty dataset has no sample shape");
    return samples.front().x.shape();
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(n_classes(), 0);
    for (const auto& s : samples) ++counts.at(s.label);
    return counts;
}

const std::string& Dataset::class_name(std::size_t label) const {
    if (label >= class_names.size())
        throw IndexError("label " + std::to_string(label) + " has no class name");
    return class_names[label];
}

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".ppm" || ext == ".pgm";
}

// floor(frac * n) without 0.7 * 3000 landing on 2099.999...
std::size_t stratum_count(double frac, std::size_t n) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
    std::vector<std::vector<std::size_t>> by_class(data.n_classes());
    for (std::size_t i = 0; i < data.size(); ++i) by_class.at(data.samples[i].label).push_back(i);
    return by_class;
}

Dataset subset(const Dataset& data, std::vector<std::size_t> idx) {
    std::sort(idx.begin(), idx.end());
    Dataset out;
    out.class_names = data.class_names;
    out.samples.reserve(idx.size());
    for (auto i : idx) out.samples.push_back(data.samples[i]);
    return out;
}

}  // namespace

Dataset load_image_dataset(const fs::path& root, std::size_t expected_side, std::size_t channels) {
    if (expected_side == 0) throw ContractError("expected image side must be positive");
    if (!fs::exists(root)) throw DataError("dataset path '" + root.string() + "' does not exist");

    Dataset data;
    if (fs::is_regular_file(root)) {
        Dataset packed = read_packed_dataset(root);
        data.class_names = packed.class_names;
        for (auto& s : packed.samples) {
            Tensor<float> x = channels ? convert_channels(s.x, channels) : std::move(s.x);
            data.samples.push_back({resize_bilinear(x, expected_side, expected_side), s.label});
        }
        return data;
    }

    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError("no class directories under '" + root.string() + "'");

    for (std::size_t label = 0; label < class_dirs.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[label]))
            if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("class directory '" + class_dirs[label].string() + "' has no images");
        data.class_names.push_back(class_dirs[label].filename().string());
        for (const auto& f : files) {
            Tensor<float> x = rescale_u8(read_pnm(f));
            if (channels == 0) channels = x.dim(0);
            x = convert_channels(x, channels);
            data.samples.push_back({resize_bilinear(x, expected_side, expected_side), label});
        }
    }
    return data;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double train_frac, std::uint64_t seed) {
    if (!(train_frac > 0 && train_frac < 1)) throw ContractError("train fraction must lie in (0, 1)");
    auto by_class = indices_by_class(data);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train, test;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 2)
            throw DataError("class '" + data.class_names[c] + "' has " + std::to_string(idx.size()) +
                            " samples; splitting needs at least 2");
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n_train = stratum_count(train_frac, idx.size());
        train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    return {subset(data, std::move(train)), subset(data, std::move(test))};
}

Dataset select_fraction(const Dataset& data, double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction <= 1)) throw ContractError("dataset fraction must lie in (0, 1]");
    if (fraction == 1) return data;
    auto by_class = indices_by_class(data);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> keep;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t n = stratum_count(fraction, idx.size());
        keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
    }
    return subset(data, std::move(keep));
}

// ---- packed formats --------------------------------------------------------

void write_packed_dataset(const fs::path& path, const Dataset& data) {
    if (data.empty()) throw DataError("refusing to pack an empty dataset");
    const Shape& shape = data.sample_shape();
    if (shape.size() != 3 || shape[1] != shape[2]) throw ShapeError("packed datasets hold square C x side x side images");
    if (shape[0] > 0xFF || shape[1] > 0xFFFF || data.n_classes() > 0xFFFF || data.size() > 0xFFFFFFFFu)
        throw ContractError("dataset exceeds the packed format's field widths");
    io::ByteWriter w;
    w.magic("CAPD");
    w.u16(kPackedVersion);
    w.u32(static_cast<std::uint32_t>(data.size()));
    w.u8(static_cast<std::uint8_t>(shape[0]));
    w.u16(static_cast<std::uint16_t>(shape[1]));
    w.u16(static_cast<std::uint16_t>(data.n_classes()));
    for (const auto& s : data.samples) {
        if (s.x.shape() != shape) throw ShapeError("mixed sample shapes in dataset");
        w.u16(static_cast<std::uint16_t>(s.label));
        const Image8 img = quantize_u8(s.x);
        w.bytes(img.pixels.data(), img.pixels.size());
    }
    io::write_file(path, w.buffer());
}

Dataset read_packed_dataset(const fs::path& path) {
    const auto buf = io::read_file(path);
    io::ByteReader r(buf, "'" + path.string() + "'");
    if (r.magic(4) != "CAPD") throw BadMagicError("'" + path.string() + "' is not a packed dataset (bad magic)");
    const std::uint16_t version = r.u16();
    if (version != kPackedVersion)
        throw VersionError("'" + path.string() + "' has packed-dataset version " + std::to_string(version) +
                           ", expected " + std::to_string(kPackedVersion));
    const std::uint32_t n = r.u32();
    const std::size_t channels = r.u8();
    const std::size_t side = r.u16();
    const std::size_t n_classes = r.u16();
    if (channels == 0 || side == 0) throw DataError("'" + path.string() + "' declares empty images");
    const std::size_t pixels = channels * side * side;
    const std::size_t expected = r.position() + static_cast<std::size_t>(n) * (2 + pixels);
    if (buf.size() < expected)
        throw TruncationError("'" + path.string() + "' truncated: expected " + std::to_string(expected) +
                              " bytes, found " + std::to_string(buf.size()));
    if (buf.size() > expected)
        throw LengthMismatchError("'" + path.string() + "' has " + std::to_string(buf.size() - expected) +
                                  " bytes beyond the declared payload");
    Dataset data;
    for (std::size_t c = 0; c < n_classes; ++c) data.class_names.push_back(std::to_string(c));
    data.samples.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::size_t label = r.u16();
        if (label >= n_classes)
            throw DataError("'" + path.string() + "' sample " + std::to_string(i) + " has label " +
                            std::to_string(label) + " >= n_classes " + std::to_string(n_classes));
        const auto* p = r.take(pixels);
        data.samples.push_back({rescale_u8(std::span(p, pixels), Shape{channels, side, side}), label});
    }
    return data;
}

void write_feature_file(const fs::path& path, const std::vector<FeatureRecord>& records, std::size_t dim) {
    io::ByteWriter w;
    w.magic("FEAT");
    w.u16(kFeatureVersion);
    w.u32(static_cast<std::uint32_t>(records.size()));
    w.u32(static_cast<std::uint32_t>(dim));
    for (const auto& rec : records) {
        if (rec.features.size() != dim)
            throw ShapeError("feature record of length " + std::to_string(rec.features.size()) + " in a dim-" +
                             std::to_string(dim) + " file");
        w.u16(static_cast<std::uint16_t>(rec.label));
        for (float v : rec.features.data()) w.f32(v);
    }
    io::write_file(path, w.buffer());
}

std::vector<FeatureRecord> load_feature_dataset(const fs::path& path) {
    const auto buf = io::read_file(path);
    io::ByteReader r(buf, "'" + path.string() + "'");
    if (r.magic(4) != "FEAT") throw BadMagicError("'" + path.string() + "' is not a feature file (bad magic)");
    const std::uint16_t version = r.u16();
    if (version != kFeatureVersion)
        throw VersionError("'" + path.string() + "' has feature-file version " + std::to_string(version) +
                           ", expected " + std::to_string(kFeatureVersion));
    const std::uint32_t n = r.u32();
    const std::uint32_t dim = r.u32();
    if (dim == 0 && n > 0) throw DataError("'" + path.string() + "' declares zero-length features");
    const std::size_t expected = r.position() + static_cast<std::size_t>(n) * (2 + 4 * static_cast<std::size_t>(dim));
    if (buf.size() < expected)
        throw TruncationError("'" + path.string() + "' truncated: expected " + std::to_string(expected) +
                              " bytes, found " + std::to_string(buf.size()));
    if (buf.size() > expected)
        throw LengthMismatchError("'" + path.string() + "' holds " + std::to_string(buf.size()) +
                                  " bytes but its header declares " + std::to_string(expected));
    std::vector<FeatureRecord> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        FeatureRecord rec{Tensor<float>(Shape{dim}), r.u16()};
        for (std::uint32_t k = 0; k < dim; ++k) rec.features[k] = r.f32();
        if (!rec.features.all_finite())
            throw DataError("'" + path.string() + "' record " + std::to_string(i) + " has non-finite features");
        out.push_back(std::move(rec));
    }
    return out;
}

Dataset feature_dataset(const std::vector<FeatureRecord>& records) {
    Dataset data;
    std::size_t n_classes = 0;
    for (const auto& rec : records) n_classes = std::max(n_classes, rec.label + 1);
    for (std::size_t c = 0; c < n_classes; ++c) data.class_names.push_back(std::to_string(c));
    for (const auto& rec : records) data.samples.push_back({rec.features, rec.label});
    return data;
}

}  // namespace capsnet
