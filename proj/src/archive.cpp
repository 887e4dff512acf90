#include "capsnet/archive.hpp"

#include <cstdio>

#include "capsnet/binary_io.hpp"

namespace capsnet {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

WeightArchive make_archive(const Model<float>& model, std::vector<std::string> class_names, std::uint64_t seed) {
    WeightArchive a;
    a.model_name = model.spec().name;
    a.spec_json = to_json(model.spec());
    a.fingerprint = fingerprint(model.spec());
    a.class_names = std::move(class_names);
    a.seed = seed;
    for (std::size_t k = 0; k < model.params().size(); ++k)
        a.tensors.push_back({model.layout()[k].name, model.params()[k]});
    return a;
}

std::vector<std::uint8_t> encode_archive(const WeightArchive& a) {
    io::ByteWriter w;
    w.magic("CAPW");
    w.u16(kArchiveVersion);
    w.str16(a.model_name);
    w.str32(a.spec_json);
    w.u64(a.fingerprint);
    if (a.class_names.size() > 0xFFFF) throw ContractError("too many class names for the archive");
    w.u16(static_cast<std::uint16_t>(a.class_names.size()));
    for (const auto& n : a.class_names) w.str16(n);
    w.str16(a.init_scheme);
    w.u64(a.seed);
    w.u32(static_cast<std::uint32_t>(a.tensors.size()));
    for (const auto& t : a.tensors) {
        w.str16(t.name);
        w.u8(static_cast<std::uint8_t>(t.value.rank()));
        for (auto d : t.value.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (float v : t.value.data()) w.f32(v);
    }
    return w.take();
}

WeightArchive decode_archive(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    io::ByteReader r(bytes, what);
    if (bytes.size() < 4 || r.magic(4) != "CAPW") throw BadMagicError(what + " is not a weight archive (bad magic)");
    const std::uint16_t version = r.u16();
    if (version != kArchiveVersion)
        throw VersionError(what + " has archive version " + std::to_string(version) + ", expected " +
                           std::to_string(kArchiveVersion));
    WeightArchive a;
    a.model_name = r.str16();
    a.spec_json = r.str32();
    a.fingerprint = r.u64();
    const std::size_t n_names = r.u16();
    for (std::size_t i = 0; i < n_names; ++i) a.class_names.push_back(r.str16());
    a.init_scheme = r.str16();
    a.seed = r.u64();
    const std::uint32_t n_tensors = r.u32();
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
        NamedTensor nt;
        nt.name = r.str16();
        const std::size_t rank = r.u8();
        if (rank == 0) throw DataError(what + ": tensor '" + nt.name + "' has rank 0");
        Shape shape;
        for (std::size_t d = 0; d < rank; ++d) shape.push_back(r.u32());
        const std::size_t n = shape_size(shape);
        r.need(4 * n);
        nt.value = Tensor<float>(shape);
        for (std::size_t i = 0; i < n; ++i) nt.value[i] = r.f32();
        a.tensors.push_back(std::move(nt));
    }
    if (r.remaining() != 0)
        throw LengthMismatchError(what + " has " + std::to_string(r.remaining()) + " bytes after the last tensor");
    return a;
}

void save_weights(const std::filesystem::path& path, const WeightArchive& archive) {
    io::write_file(path, encode_archive(archive));
}

void save_weights(const std::filesystem::path& path, const Model<float>& model, std::vector<std::string> class_names,
                  std::uint64_t seed) {
    save_weights(path, make_archive(model, std::move(class_names), seed));
}

WeightArchive read_archive(const std::filesystem::path& path) {
    return decode_archive(io::read_file(path), "'" + path.string() + "'");
}

Model<float> model_from_archive(const WeightArchive& a) {
    ModelSpec spec = a.spec();
    if (fingerprint(spec) != a.fingerprint)
        throw FingerprintError("archive fingerprint " + hex64(a.fingerprint) +
                               " does not match its stored model description (" + hex64(fingerprint(spec)) + ")");
    Model<float> m(std::move(spec));
    if (a.tensors.size() != m.params().size())
        throw DataError("archive holds " + std::to_string(a.tensors.size()) + " tensors, model '" + a.model_name +
                        "' needs " + std::to_string(m.params().size()));
    for (std::size_t k = 0; k < a.tensors.size(); ++k) {
        const ParamInfo& info = m.layout()[k];
        const NamedTensor& t = a.tensors[k];
        if (t.name != info.name || t.value.shape() != info.shape)
            throw DataError("archive tensor " + std::to_string(k) + " is '" + t.name + "' " +
                            shape_str(t.value.shape()) + ", expected '" + info.name + "' " + shape_str(info.shape));
        m.params()[k] = t.value;
    }
    return m;
}

Model<float> model_from_archive(const WeightArchive& a, const ModelSpec& expected) {
    const std::uint64_t want = fingerprint(expected);
    if (a.fingerprint != want)
        throw FingerprintError("archive was written for '" + a.model_name + "' (fingerprint " + hex64(a.fingerprint) +
                               "), not '" + expected.name + "' (" + hex64(want) + ")");
    return model_from_archive(a);
}

Model<float> load_weights(const std::filesystem::path& path, const ModelSpec& expected) {
    return model_from_archive(read_archive(path), expected);
}

}  // namespace capsnet
