#include "capsnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace capsnet::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
void accumulate(Tensor<T>* sink, const Tensor<T>& g) {
    if (!sink) return;
    auto dst = sink->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var kernels, Var bias, std::size_t stride, Padding padding) {
    const Tensor<T>& x = tape.value(input);
    const Tensor<T>& k = tape.value(kernels);
    Tensor<T> out = capsnet::conv2d(x, k, tape.value(bias), stride, padding);
    const ConvGeometry g = conv_geometry(x.shape(), k.shape(), stride, padding);
    return tape.record(OpKind::conv2d, std::move(out), {input, kernels, bias},
                       [input, kernels, bias, g](Tape<T>& t, const Tensor<T>& gout) {
                           const Tensor<T>& x = t.value(input);
                           const Tensor<T>& k = t.value(kernels);
                           const std::size_t filters = k.dim(0);
                           const std::size_t patch = g.channels * g.kh * g.kw;
                           const std::size_t pixels = g.rows.out * g.cols.out;
                           Eigen::Map<const RowMat<T>> G(gout.ptr(), filters, pixels);
                           if (Tensor<T>* db = t.grad_sink(bias)) {
                               Eigen::Map<Vec<T>> b(db->ptr(), filters);
                               b += G.rowwise().sum();
                           }
                           Tensor<T>* dk = t.grad_sink(kernels);
                           Tensor<T>* dx = t.grad_sink(input);
                           if (!dk && !dx) return;
                           AlignedVector<T> cols(patch * pixels);
                           if (dk) {
                               detail::im2col(x.ptr(), g, cols.data());
                               Eigen::Map<const RowMat<T>> C(cols.data(), patch, pixels);
                               Eigen::Map<RowMat<T>> K(dk->ptr(), filters, patch);
                               K.noalias() += G * C.transpose();
                           }
                           if (dx) {
                               Eigen::Map<const RowMat<T>> K(k.ptr(), filters, patch);
                               Eigen::Map<RowMat<T>> C(cols.data(), patch, pixels);
                               C.noalias() = K.transpose() * G;
                               detail::col2im(cols.data(), g, dx->ptr());
                           }
                       });
}

template <typename T>
Var maxpool2(Tape<T>& tape, Var input) {
    PoolResult<T> r = capsnet::maxpool2(tape.value(input));
    return tape.record(OpKind::maxpool2, std::move(r.output), {input},
                       [input, idx = std::move(r.argmax)](Tape<T>& t, const Tensor<T>& gout) {
                           Tensor<T>* dx = t.grad_sink(input);
                           for (std::size_t o = 0; o < idx.size(); ++o) (*dx)[idx[o]] += gout[o];
                       });
}

template <typename T>
Var dense(Tape<T>& tape, Var input, Var weights, Var bias) {
    Tensor<T> out = capsnet::dense(tape.value(input), tape.value(weights), tape.value(bias));
    return tape.record(OpKind::dense, std::move(out), {input, weights, bias},
                       [input, weights, bias](Tape<T>& t, const Tensor<T>& gout) {
                           const Tensor<T>& x = t.value(input);
                           const Tensor<T>& w = t.value(weights);
                           const std::size_t m = w.dim(0), n = w.dim(1);
                           Eigen::Map<const Vec<T>> g(gout.ptr(), m);
                           accumulate(t.grad_sink(bias), gout);
                           if (Tensor<T>* dw = t.grad_sink(weights)) {
                               Eigen::Map<const Vec<T>> xv(x.ptr(), n);
                               Eigen::Map<RowMat<T>> W(dw->ptr(), m, n);
                               W.noalias() += g * xv.transpose();
                           }
                           if (Tensor<T>* dx = t.grad_sink(input)) {
                               Eigen::Map<const RowMat<T>> W(w.ptr(), m, n);
                               Eigen::Map<Vec<T>> xv(dx->ptr(), n);
                               xv.noalias() += W.transpose() * g;
                           }
                       });
}

template <typename T>
Var activation(Tape<T>& tape, Var input, Activation kind) {
    if (kind == Activation::identity) return input;
    Tensor<T> out = apply_activation(tape.value(input), kind);
    return tape.record(OpKind::activation, std::move(out), {input},
                         [input, kind](Tape<T>& t, const Tensor<T>& gout) {
                             Tensor<T>* dx = t.grad_sink(input);
                             const Tensor<T>& x = t.value(input);
                             for (std::size_t i = 0; i < gout.size(); ++i) {
                                 T d = 0;
                                 switch (kind) {
                                     case Activation::relu: d = x[i] > T(0) ? T(1) : T(0); break;
                                     case Activation::sigmoid: {
                                         const T s = T(1) / (T(1) + std::exp(-x[i]));
                                         d = s * (T(1) - s);
                                         break;
                                     }
                                     case Activation::tanh: {
                                         const T th = std::tanh(x[i]);
                                         d = T(1) - th * th;
                                         break;
                                     }
                                     case Activation::identity: d = T(1); break;
                                 }
                                 (*dx)[i] += gout[i] * d;
                             }
                         });
}

template <typename T>
Var softmax(Tape<T>& tape, Var logits) {
    Tensor<T> out = capsnet::softmax(tape.value(logits));
    Tensor<T> saved = out;
    return tape.record(OpKind::softmax, std::move(out), {logits},
                       [logits, p = std::move(saved)](Tape<T>& t, const Tensor<T>& gout) {
                           Tensor<T>* dx = t.grad_sink(logits);
                           const std::size_t k = p.shape().back();
                           const std::size_t rows = p.size() / k;
                           for (std::size_t r = 0; r < rows; ++r) {
                               T dot = 0;
                               for (std::size_t j = 0; j < k; ++j) dot += gout[r * k + j] * p[r * k + j];
                               for (std::size_t j = 0; j < k; ++j)
                                   (*dx)[r * k + j] += p[r * k + j] * (gout[r * k + j] - dot);
                           }
                       });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    same_shape(tape.shape(a), tape.shape(b), "add");
    Tensor<T> out = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return tape.record(OpKind::add, std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
        accumulate(t.grad_sink(a), g);
        accumulate(t.grad_sink(b), g);
    });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
    same_shape(tape.shape(a), tape.shape(b), "mul");
    Tensor<T> out = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return tape.record(OpKind::mul, std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(a);
        const Tensor<T>& bv = t.value(b);
        if (Tensor<T>* da = t.grad_sink(a))
            for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * bv[i];
        if (Tensor<T>* db = t.grad_sink(b))
            for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * av[i];
    });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
    Tensor<T> out = tape.value(a);
    for (auto& v : out.data()) v *= factor;
    return tape.record(OpKind::scale, std::move(out), {a}, [a, factor](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>* da = t.grad_sink(a);
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += factor * g[i];
    });
}

template <typename T>
Var sum(Tape<T>& tape, Var a) {
    T total = 0;
    for (T v : tape.value(a).data()) total += v;
    return tape.record(OpKind::sum, Tensor<T>::scalar(total), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>* da = t.grad_sink(a);
        for (auto& v : da->data()) v += g[0];
    });
}

template <typename T>
Var reshape(Tape<T>& tape, Var a, Shape shape) {
    Tensor<T> out = tape.value(a).reshaped(std::move(shape));
    return tape.record(OpKind::reshape, std::move(out), {a}, [a](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>* da = t.grad_sink(a);
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
    });
}

template <typename T>
Var concat(Tape<T>& tape, Var a, Var b) {
    const Tensor<T>& av = tape.value(a);
    const Tensor<T>& bv = tape.value(b);
    const std::size_t na = av.size();
    std::vector<T> data(av.data().begin(), av.data().end());
    data.insert(data.end(), bv.data().begin(), bv.data().end());
    const std::size_t n = data.size();
    Tensor<T> out(Shape{n}, std::move(data));
    return tape.record(OpKind::concat, std::move(out), {a, b}, [a, b, na](Tape<T>& t, const Tensor<T>& g) {
        if (Tensor<T>* da = t.grad_sink(a))
            for (std::size_t i = 0; i < na; ++i) (*da)[i] += g[i];
        if (Tensor<T>* db = t.grad_sink(b))
            for (std::size_t i = 0; i < db->size(); ++i) (*db)[i] += g[na + i];
    });
}

template <typename T>
Var slice(Tape<T>& tape, Var a, std::size_t offset, std::size_t length) {
    const Tensor<T>& av = tape.value(a);
    if (length == 0 || offset + length > av.size())
        throw IndexError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                         ") out of range for " + std::to_string(av.size()) + " elements");
    std::vector<T> data(av.data().begin() + offset, av.data().begin() + offset + length);
    Tensor<T> out(Shape{length}, std::move(data));
    return tape.record(OpKind::slice, std::move(out), {a}, [a, offset](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>* da = t.grad_sink(a);
        for (std::size_t i = 0; i < g.size(); ++i) (*da)[offset + i] += g[i];
    });
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::size_t label) {
    const Tensor<T>& z = tape.value(logits);
    if (label >= z.size())
        throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(z.size()) +
                         " classes");
    Tensor<T> p = capsnet::softmax(z.reshaped(Shape{z.size()}));
    const T mx = *std::max_element(z.data().begin(), z.data().end());
    T lse = 0;
    for (T v : z.data()) lse += std::exp(v - mx);
    const T loss = std::log(lse) + mx - z[label];
    return tape.record(OpKind::cross_entropy, Tensor<T>::scalar(loss), {logits},
                       [logits, label, p = std::move(p)](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>* dz = t.grad_sink(logits);
                           for (std::size_t j = 0; j < p.size(); ++j)
                               (*dz)[j] += g[0] * (p[j] - (j == label ? T(1) : T(0)));
                       });
}

template <typename T>
Var squared_error(Tape<T>& tape, Var prediction, const Tensor<T>& target) {
    const Tensor<T>& y = tape.value(prediction);
    if (y.size() != target.size())
        throw ShapeError("squared_error: prediction " + shape_str(y.shape()) + " vs target " +
                         shape_str(target.shape()));
    T total = 0;
    for (std::size_t i = 0; i < y.size(); ++i) total += (y[i] - target[i]) * (y[i] - target[i]);
    return tape.record(OpKind::squared_error, Tensor<T>::scalar(total), {prediction},
                       [prediction, target](Tape<T>& t, const Tensor<T>& g) {
                           Tensor<T>* dy = t.grad_sink(prediction);
                           const Tensor<T>& y = t.value(prediction);
                           for (std::size_t i = 0; i < y.size(); ++i) (*dy)[i] += g[0] * T(2) * (y[i] - target[i]);
                       });
}

#define CAPSNET_INSTANTIATE(T)                                                              \
    template Var conv2d(Tape<T>&, Var, Var, Var, std::size_t, Padding);                     \
    template Var maxpool2(Tape<T>&, Var);                                                   \
    template Var dense(Tape<T>&, Var, Var, Var);                                            \
    template Var activation(Tape<T>&, Var, Activation);                                     \
    template Var softmax(Tape<T>&, Var);                                                    \
    template Var add(Tape<T>&, Var, Var);                                                   \
    template Var mul(Tape<T>&, Var, Var);                                                   \
    template Var scale(Tape<T>&, Var, T);                                                   \
    template Var sum(Tape<T>&, Var);                                                        \
    template Var reshape(Tape<T>&, Var, Shape);                                             \
    template Var concat(Tape<T>&, Var, Var);                                                \
    template Var slice(Tape<T>&, Var, std::size_t, std::size_t);                            \
    template Var cross_entropy(Tape<T>&, Var, std::size_t);                                 \
    template Var squared_error(Tape<T>&, Var, const Tensor<T>&);

CAPSNET_INSTANTIATE(float)
CAPSNET_INSTANTIATE(double)
#undef CAPSNET_INSTANTIATE

}  // namespace capsnet::ops
