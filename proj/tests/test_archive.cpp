#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "capsnet/archive.hpp"
#include "synthetic.hpp"

using namespace capsnet;
namespace fs = std::filesystem;

namespace {

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
    return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(Archive, EveryZooModelRoundTripsBitExactly) {
    const auto dir = capsnet::testing::scratch_dir("archive");
    for (const auto& name : zoo_model_names()) {
        const auto spec = build_named_model(name, ZooInputs{5, 1, 32, 64});
        auto m = Model<float>::initialized(spec, 21);
        m.params()[0][0] = -0.0f;  // sign of zero must survive too
        save_weights(dir / "w.capw", m, {"a", "b", "c", "d", "e"}, 21);
        const auto back = load_weights(dir / "w.capw", spec);
        ASSERT_EQ(back.params().size(), m.params().size()) << name;
        for (std::size_t k = 0; k < m.params().size(); ++k)
            EXPECT_TRUE(bit_equal(back.params()[k], m.params()[k])) << name << " " << m.layout()[k].name;
        const auto a = read_archive(dir / "w.capw");
        EXPECT_EQ(a.model_name, spec.name);
        EXPECT_EQ(a.fingerprint, fingerprint(spec));
        EXPECT_EQ(a.class_names, (std::vector<std::string>{"a", "b", "c", "d", "e"}));
        EXPECT_EQ(a.seed, 21u);
        EXPECT_EQ(a.init_scheme, std::string(kInitScheme));
        EXPECT_EQ(a.spec(), spec);
    }
    fs::remove_all(dir);
}

TEST(Archive, EncodeDecodeIsStable) {
    const auto m = Model<float>::initialized(tiny_clone("lstm-head"), 3);
    const auto bytes = encode_archive(make_archive(m, {"x", "y", "z"}, 3));
    EXPECT_EQ(encode_archive(decode_archive(bytes)), bytes);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CAPW");
}

TEST(Archive, V1WeightsRejectedForV2) {
    const auto dir = capsnet::testing::scratch_dir("fp");
    const auto v1 = build_capsule32_v1(5), v2 = build_capsule32_v2(5);
    save_weights(dir / "v1.capw", Model<float>(v1));
    EXPECT_THROW(load_weights(dir / "v1.capw", v2), FingerprintError);
    EXPECT_NO_THROW(load_weights(dir / "v1.capw", v1));
    fs::remove_all(dir);
}

TEST(Archive, CorruptionsRaiseDistinctErrors) {
    const auto dir = capsnet::testing::scratch_dir("corrupt");
    const auto spec = tiny_clone("capsule32-v2");
    save_weights(dir / "w.capw", Model<float>::initialized(spec, 4));
    const auto bytes = read_bytes(dir / "w.capw");

    auto bad = bytes;
    bad[1] = 'X';
    write_bytes(dir / "magic.capw", bad);
    EXPECT_THROW(load_weights(dir / "magic.capw", spec), BadMagicError);

    bad = bytes;
    bad[4] = static_cast<char>(kArchiveVersion + 1);
    write_bytes(dir / "version.capw", bad);
    EXPECT_THROW(load_weights(dir / "version.capw", spec), VersionError);

    write_bytes(dir / "trunc.capw", std::vector<char>(bytes.begin(), bytes.end() - 1));
    EXPECT_THROW(load_weights(dir / "trunc.capw", spec), TruncationError);

    bad = bytes;
    bad.push_back(0);
    write_bytes(dir / "long.capw", bad);
    EXPECT_THROW(load_weights(dir / "long.capw", spec), LengthMismatchError);

    EXPECT_THROW(load_weights(dir / "absent.capw", spec), DataError);
    fs::remove_all(dir);
}

TEST(Archive, EveryTruncationPointIsDetected) {
    const auto m = Model<float>::initialized(tiny_clone("mlp-head"), 5);
    const auto bytes = encode_archive(make_archive(m, {}, 5));
    for (std::size_t n = 0; n < bytes.size(); n += 7)
        EXPECT_THROW(decode_archive(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<long>(n))),
                     DataError)
            << n;
}

TEST(Archive, TamperedSpecJsonIsFingerprintError) {
    const auto spec = tiny_clone("mlp-head");
    auto a = make_archive(Model<float>::initialized(spec, 6), {}, 6);
    auto other = build_mlp_head(6, 3, 6);
    a.spec_json = to_json(other);  // stored fingerprint no longer matches
    EXPECT_THROW(model_from_archive(decode_archive(encode_archive(a))), FingerprintError);
}
