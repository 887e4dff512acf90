#include "capsnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace capsnet {

void AugmentConfig::validate() const {
    if (rotation_deg < 0 || shear < 0 || width_shift_frac < 0 || height_shift_frac < 0)
        throw ContractError("augmentation magnitudes must be non-negative");
    if (brightness.lo > brightness.hi || contrast.lo > contrast.hi)
        throw ContractError("augmentation ranges need lo <= hi");
    if (brightness.lo < 0 || contrast.lo < 0) throw ContractError("brightness and contrast factors must be non-negative");
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over a running combination
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ b);
}

namespace {

double symmetric(double mag, std::mt19937_64& rng) { return (2 * uniform01(rng) - 1) * mag; }
double in_range(const Range& r, std::mt19937_64& rng) { return r.lo + (r.hi - r.lo) * uniform01(rng); }

}  // namespace

AugmentDraw sample_augmentation(const AugmentConfig& cfg, std::size_t height, std::size_t width,
                                std::mt19937_64& rng) {
    cfg.validate();
    AugmentDraw d;
    d.rotation_deg = symmetric(cfg.rotation_deg, rng);
    d.shear = symmetric(cfg.shear, rng);
    d.shift_x = symmetric(cfg.width_shift_frac, rng) * static_cast<double>(width);
    d.shift_y = symmetric(cfg.height_shift_frac, rng) * static_cast<double>(height);
    d.brightness = in_range(cfg.brightness, rng);
    d.contrast = in_range(cfg.contrast, rng);
    return d;
}

Tensor<float> apply_affine(const Tensor<float>& image, const AugmentDraw& d) {
    if (image.rank() != 3) throw ShapeError("expected C x H x W, got " + shape_str(image.shape()));
    if (d.rotation_deg == 0 && d.shear == 0 && d.shift_x == 0 && d.shift_y == 0) return image;
    const std::size_t C = image.dim(0), H = image.dim(1), W = image.dim(2);
    const double th = d.rotation_deg * std::numbers::pi / 180.0;
    const double ct = std::cos(th), st = std::sin(th);
    const double cy = (static_cast<double>(H) - 1) / 2, cx = (static_cast<double>(W) - 1) / 2;

    Tensor<float> out(image.shape(), 0.0f);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const double oy = static_cast<double>(y) - cy, ox = static_cast<double>(x) - cx;
            // shear, then shift, then rotate
            const double sy = oy - std::sin(d.shear) * ox + d.shift_y;
            const double sx = std::cos(d.shear) * ox + d.shift_x;
            const double iy = ct * sy - st * sx + cy;
            const double ix = st * sy + ct * sx + cx;
            const double fy = std::floor(iy), fx = std::floor(ix);
            const double wy = iy - fy, wx = ix - fx;
            const auto y0 = static_cast<long>(fy), x0 = static_cast<long>(fx);
            for (std::size_t c = 0; c < C; ++c) {
                auto at = [&](long yy, long xx) -> double {
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W)) return 0.0;
                    return image(c, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                };
                const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)) +
                                 wy * ((1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
                out(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

Tensor<float> apply_photometric(const Tensor<float>& image, double brightness, double contrast) {
    Tensor<float> out = image;
    if (contrast != 1.0) {
        double mean = 0;
        for (float v : image.data()) mean += v;
        mean /= static_cast<double>(image.size());
        for (auto& v : out.storage())
            v = static_cast<float>(std::clamp(contrast * (static_cast<double>(v) - mean) + mean, 0.0, 1.0));
    }
    if (brightness != 1.0)
        for (auto& v : out.storage()) v = static_cast<float>(std::clamp(static_cast<double>(v) * brightness, 0.0, 1.0));
    return out;
}

Tensor<float> augment(const Tensor<float>& image, const AugmentDraw& d) {
    return apply_photometric(apply_affine(image, d), d.brightness, d.contrast);
}

Sample augment(const Sample& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
    if (sample.x.rank() != 3) throw ShapeError("augmentation needs a C x H x W image");
    const AugmentDraw d = sample_augmentation(cfg, sample.x.dim(1), sample.x.dim(2), rng);
    return {augment(sample.x, d), sample.label};
}

}  // namespace capsnet
