#include "capsnet/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace capsnet {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

std::string_view to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "identity";
}

Padding parse_padding(std::string_view s) {
    if (s == "same") return Padding::same;
    if (s == "valid") return Padding::valid;
    throw ContractError("unknown padding '" + std::string(s) + "'");
}

Activation parse_activation(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    throw ContractError("unknown activation '" + std::string(s) + "'");
}

AxisGeometry conv_axis(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
    if (stride == 0) throw ContractError("stride must be positive");
    AxisGeometry g;
    if (padding == Padding::same) {
        g.out = (in + stride - 1) / stride;
        const std::size_t needed = (g.out - 1) * stride + kernel;
        g.pad_total = needed > in ? needed - in : 0;
        g.pad_before = g.pad_total / 2;
    }
    if (kernel > in + g.pad_total)
        throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input " +
                         std::to_string(in + g.pad_total));
    g.out = (in + g.pad_total - kernel) / stride + 1;
    return g;
}

ConvGeometry conv_geometry(const Shape& input, const Shape& kernels, std::size_t stride,
                           Padding padding) {
    if (input.size() != 3) throw ShapeError("conv2d input must be CxHxW, got " + shape_str(input));
    if (kernels.size() != 4)
        throw ShapeError("conv2d kernels must be FxCxkhxkw, got " + shape_str(kernels));
    if (kernels[1] != input[0])
        throw ShapeError("conv2d kernel channels " + std::to_string(kernels[1]) +
                         " != input channels " + std::to_string(input[0]));
    ConvGeometry g{input[0], input[1], input[2], kernels[2], kernels[3], stride, {}, {}};
    g.rows = conv_axis(input[1], kernels[2], stride, padding);
    g.cols = conv_axis(input[2], kernels[3], stride, padding);
    return g;
}

namespace detail {

template <typename T>
void im2col(const T* input, const ConvGeometry& g, T* cols) {
    const std::size_t oh = g.rows.out, ow = g.cols.out;
    const auto ph = static_cast<std::ptrdiff_t>(g.rows.pad_before);
    const auto pw = static_cast<std::ptrdiff_t>(g.cols.pad_before);
    const auto H = static_cast<std::ptrdiff_t>(g.height);
    const auto W = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = input + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
                T* dst = cols + row * oh * ow;
                for (std::size_t y = 0; y < oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - ph;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst + y * ow, dst + (y + 1) * ow, T(0));
                        continue;
                    }
                    for (std::size_t x = 0; x < ow; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - pw;
                        dst[y * ow + x] = (ix < 0 || ix >= W) ? T(0) : plane[iy * W + ix];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* input_grad) {
    const std::size_t oh = g.rows.out, ow = g.cols.out;
    const auto ph = static_cast<std::ptrdiff_t>(g.rows.pad_before);
    const auto pw = static_cast<std::ptrdiff_t>(g.cols.pad_before);
    const auto H = static_cast<std::ptrdiff_t>(g.height);
    const auto W = static_cast<std::ptrdiff_t>(g.width);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = input_grad + c * g.height * g.width;
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
                const T* src = cols + row * oh * ow;
                for (std::size_t y = 0; y < oh; ++y) {
                    const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + ki) - ph;
                    if (iy < 0 || iy >= H) continue;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kj) - pw;
                        if (ix >= 0 && ix < W) plane[iy * W + ix] += src[y * ow + x];
                    }
                }
            }
        }
    }
}

template void im2col<float>(const float*, const ConvGeometry&, float*);
template void im2col<double>(const double*, const ConvGeometry&, double*);
template void col2im<float>(const float*, const ConvGeometry&, float*);
template void col2im<double>(const double*, const ConvGeometry&, double*);

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, Padding padding) {
    const ConvGeometry g = conv_geometry(input.shape(), kernels.shape(), stride, padding);
    const std::size_t filters = kernels.dim(0);
    if (bias.size() != filters)
        throw ShapeError("conv2d bias length " + std::to_string(bias.size()) + " != filters " +
                         std::to_string(filters));
    const std::size_t patch = g.channels * g.kh * g.kw;
    const std::size_t pixels = g.rows.out * g.cols.out;
    AlignedVector<T> cols(patch * pixels);
    detail::im2col(input.ptr(), g, cols.data());

    Tensor<T> out(Shape{filters, g.rows.out, g.cols.out});
    Eigen::Map<const RowMat<T>> K(kernels.ptr(), filters, patch);
    Eigen::Map<const RowMat<T>> C(cols.data(), patch, pixels);
    Eigen::Map<RowMat<T>> O(out.ptr(), filters, pixels);
    O.noalias() = K * C;
    Eigen::Map<const Vec<T>> b(bias.ptr(), filters);
    O.colwise() += b;
    return out;
}

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
    if (input.rank() != 3) throw ShapeError("maxpool2 input must be CxHxW, got " + shape_str(input.shape()));
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    if (H % 2 || W % 2)
        throw ShapeError("maxpool2 needs even height and width, got " + shape_str(input.shape()));
    const std::size_t oh = H / 2, ow = W / 2;
    PoolResult<T> r{Tensor<T>(Shape{C, oh, ow}), std::vector<std::size_t>(C * oh * ow)};
    const T* x = input.ptr();
    std::size_t o = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
                std::size_t best = (c * H + 2 * y) * W + 2 * xx;
                for (std::size_t dy = 0; dy < 2; ++dy)
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (c * H + 2 * y + dy) * W + 2 * xx + dx;
                        if (x[idx] > x[best]) best = idx;
                    }
                r.output[o] = x[best];
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
    if (weights.rank() != 2) throw ShapeError("dense weights must be m x n, got " + shape_str(weights.shape()));
    const std::size_t m = weights.dim(0), n = weights.dim(1);
    if (input.size() != n)
        throw ShapeError("dense input length " + std::to_string(input.size()) +
                         " != weight columns " + std::to_string(n));
    if (bias.size() != m)
        throw ShapeError("dense bias length " + std::to_string(bias.size()) + " != rows " + std::to_string(m));
    Tensor<T> out(Shape{m});
    Eigen::Map<const RowMat<T>> Wm(weights.ptr(), m, n);
    Eigen::Map<const Vec<T>> x(input.ptr(), n);
    Eigen::Map<const Vec<T>> b(bias.ptr(), m);
    Eigen::Map<Vec<T>> y(out.ptr(), m);
    y.noalias() = Wm * x;
    y += b;
    return out;
}

template <typename T>
Tensor<T> apply_activation(const Tensor<T>& input, Activation kind) {
    Tensor<T> out = input;
    auto d = out.data();
    switch (kind) {
        case Activation::identity: break;
        case Activation::relu:
            for (auto& v : d) v = v > T(0) ? v : T(0);
            break;
        case Activation::sigmoid:
            for (auto& v : d) v = T(1) / (T(1) + std::exp(-v));
            break;
        case Activation::tanh:
            for (auto& v : d) v = std::tanh(v);
            break;
    }
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.empty()) throw ShapeError("softmax over an empty axis");
    const std::size_t k = logits.shape().back();
    const std::size_t rows = logits.size() / k;
    Tensor<T> out = logits;
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = out.ptr() + r * k;
        const T mx = *std::max_element(row, row + k);
        T total = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row[j] = std::exp(row[j] - mx);
            total += row[j];
        }
        for (std::size_t j = 0; j < k; ++j) row[j] /= total;
    }
    return out;
}

#define CAPSNET_INSTANTIATE(T)                                                                     \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                              Padding);                                                            \
    template PoolResult<T> maxpool2(const Tensor<T>&);                                             \
    template Tensor<T> dense(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> apply_activation(const Tensor<T>&, Activation);                             \
    template Tensor<T> softmax(const Tensor<T>&);

CAPSNET_INSTANTIATE(float)
CAPSNET_INSTANTIATE(double)
#undef CAPSNET_INSTANTIATE

}  // namespace capsnet
