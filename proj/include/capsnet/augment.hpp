#pragma once

#include <cstdint>
#include <random>

#include "capsnet/data.hpp"

namespace capsnet {

struct Range {
    double lo = 1.0;
    double hi = 1.0;
};

/// Random affine + photometric jitter. Shear is an angle in radians, shifts
/// are fractions of the image side, brightness and contrast are
/// multiplicative factors.
struct AugmentConfig {
    double rotation_deg = 20.0;
    double shear = 0.2;
    double width_shift_frac = 0.2;
    double height_shift_frac = 0.2;
    Range brightness{0.6, 1.5};
    Range contrast{0.6, 1.5};

    static AugmentConfig identity() { return {0, 0, 0, 0, {1, 1}, {1, 1}}; }
    void validate() const;
};

/// One concrete draw of the random parameters.
struct AugmentDraw {
    double rotation_deg = 0;
    double shear = 0;
    double shift_x = 0;  // pixels
    double shift_y = 0;  // pixels
    double brightness = 1;
    double contrast = 1;
};

/// Uniform in [0,1) from the top 53 bits; identical on every standard library.
double uniform01(std::mt19937_64& rng);

/// Independent stream per (seed, a, b), e.g. (train seed, epoch, sample index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

AugmentDraw sample_augmentation(const AugmentConfig& cfg, std::size_t height, std::size_t width,
                                std::mt19937_64& rng);

/// Inverse-mapped affine warp about the image centre with bilinear sampling
/// and zero fill. In centred (row, col) coordinates an output pixel o reads
/// the input at R(theta) * (Sh(shear) * o + shift).
Tensor<float> apply_affine(const Tensor<float>& image, const AugmentDraw& d);

/// p' = clamp(contrast * (p - mean) + mean), then p'' = clamp(p' * brightness),
/// mean over all pixels of the image. Factors of exactly 1 are skipped.
Tensor<float> apply_photometric(const Tensor<float>& image, double brightness, double contrast);

Tensor<float> augment(const Tensor<float>& image, const AugmentDraw& d);
Sample augment(const Sample& sample, const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace capsnet
