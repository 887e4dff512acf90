#pragma once

#include <cstddef>
#include <vector>

#include "capsnet/tape.hpp"

namespace capsnet {

struct MarginLossConfig {
    double m_plus = 0.9;
    double m_minus = 0.1;
    double lambda = 0.5;

    void validate() const;
};

/// Widths of the reconstruction FC stack; the last one covers output_side^2 pixels.
struct DecoderSpec {
    std::vector<std::size_t> fc_sizes;
    std::size_t output_side = 0;

    void validate() const;
    bool operator==(const DecoderSpec&) const = default;
};

/// Reconstruction weight that keeps the 0.0005-per-784-pixel pressure at any resolution.
double default_recon_weight(std::size_t pixel_count);

template <typename T>
T margin_loss(const Tensor<T>& norms, std::size_t target, const MarginLossConfig& cfg = {});

/// Zeroes every capsule except `selected` and flattens to n_classes*d.
template <typename T>
Tensor<T> mask_class_capsules(const Tensor<T>& v, std::size_t selected);

/// Decoder parameters laid out as [W0, b0, W1, b1, ...].
template <typename T>
Tensor<T> decode(const Tensor<T>& masked, const DecoderSpec& spec, const std::vector<Tensor<T>>& params);

template <typename T>
T reconstruction_loss(const Tensor<T>& original, const Tensor<T>& reconstructed);

template <typename T>
T total_loss(T margin, T recon, T recon_weight);

namespace ops {

template <typename T>
Var margin_loss(Tape<T>& tape, Var norms, std::size_t target, const MarginLossConfig& cfg = {});

template <typename T>
Var mask_class_capsules(Tape<T>& tape, Var v, std::size_t selected);

/// Hidden layers relu, output sigmoid, reshaped to side x side.
template <typename T>
Var decode(Tape<T>& tape, Var masked, const DecoderSpec& spec, const std::vector<Var>& params);

template <typename T>
Var reconstruction_loss(Tape<T>& tape, const Tensor<T>& original, Var reconstructed);

template <typename T>
Var total_loss(Tape<T>& tape, Var margin, Var recon, T recon_weight);

}  // namespace ops

}  // namespace capsnet
