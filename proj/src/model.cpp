#include "capsnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "capsnet/ops.hpp"

namespace capsnet {

template <typename T>
std::pair<Var, Var> lstm_step(Tape<T>& tape, Var x, Var h_prev, Var c_prev, const LstmVars<T>& p) {
    const std::size_t u = tape.value(h_prev).size();
    if (tape.value(c_prev).size() != u) throw ShapeError("lstm hidden and cell state sizes differ");
    const Shape expected{u, tape.value(x).size() + u};
    for (Var w : {p.W_i, p.W_f, p.W_g, p.W_o})
        if (tape.shape(w) != expected)
            throw ShapeError("lstm gate weights " + shape_str(tape.shape(w)) + ", expected " + shape_str(expected));
    const Var z = ops::concat(tape, x, h_prev);
    const Var i = ops::activation(tape, ops::dense(tape, z, p.W_i, p.b_i), Activation::sigmoid);
    const Var f = ops::activation(tape, ops::dense(tape, z, p.W_f, p.b_f), Activation::sigmoid);
    const Var g = ops::activation(tape, ops::dense(tape, z, p.W_g, p.b_g), Activation::tanh);
    const Var o = ops::activation(tape, ops::dense(tape, z, p.W_o, p.b_o), Activation::sigmoid);
    const Var c_flat = ops::reshape(tape, c_prev, Shape{u});
    const Var c = ops::add(tape, ops::mul(tape, f, c_flat), ops::mul(tape, i, g));
    const Var h = ops::mul(tape, o, ops::activation(tape, c, Activation::tanh));
    return {h, c};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                                          const LstmWeights<T>& p) {
    Tape<T> tape(false);
    auto bind = [&](const Tensor<T>& t) { return tape.parameter(t, nullptr); };
    const LstmVars<T> v{bind(p.W_i), bind(p.W_f), bind(p.W_g), bind(p.W_o),
                        bind(p.b_i), bind(p.b_f), bind(p.b_g), bind(p.b_o)};
    auto [h, c] = lstm_step(tape, tape.constant(x), tape.constant(h_prev), tape.constant(c_prev), v);
    return {tape.value(h), tape.value(c)};
}

template <typename T>
Tensor<T> reconstruction_target(const Tensor<T>& image) {
    if (image.rank() != 3) throw ShapeError("reconstruction target needs C x H x W, got " + shape_str(image.shape()));
    const std::size_t C = image.dim(0), plane = image.dim(1) * image.dim(2);
    if (C == 1) return image.reshaped(Shape{image.dim(1), image.dim(2)});
    Tensor<T> out(Shape{image.dim(1), image.dim(2)});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < plane; ++p) out[p] += image[c * plane + p];
    for (auto& v : out.data()) v /= static_cast<T>(C);
    return out;
}

template <typename T>
Model<T>::Model(ModelSpec spec) : spec_(std::move(spec)), layout_(parameter_layout(spec_)) {
    params_.reserve(layout_.size());
    grads_.reserve(layout_.size());
    for (const auto& p : layout_) {
        params_.emplace_back(p.shape);
        grads_.emplace_back(p.shape);
    }
}

template <typename T>
Model<T> Model<T>::initialized(ModelSpec spec, std::uint64_t seed) {
    Model m(std::move(spec));
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < m.layout_.size(); ++k) {
        const ParamInfo& info = m.layout_[k];
        Tensor<T>& t = m.params_[k];
        if (info.shape.size() == 1) continue;  // biases
        if (info.kind == LayerKind::class_caps) {
            std::normal_distribution<double> dist(0.0, 0.05);
            for (auto& v : t.data()) v = static_cast<T>(dist(rng));
            continue;
        }
        std::size_t fan_in = 1;
        for (std::size_t a = 1; a < info.shape.size(); ++a) fan_in *= info.shape[a];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    }
    return m;
}

template <typename T>
Tensor<T>& Model<T>::param(std::string_view name) {
    for (std::size_t k = 0; k < layout_.size(); ++k)
        if (layout_[k].name == name) return params_[k];
    throw IndexError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const Tensor<T>& Model<T>::param(std::string_view name) const {
    return const_cast<Model*>(this)->param(name);
}

template <typename T>
void Model<T>::zero_grad() {
    for (auto& g : grads_) g.fill(T(0));
}

template <typename T>
ForwardOutputs<T> Model<T>::forward(Tape<T>& tape, const Tensor<T>& input, const ForwardOptions& opt) {
    return run(tape, input, opt, tape.recording() ? &grads_ : nullptr);
}

template <typename T>
ForwardOutputs<T> Model<T>::infer(Tape<T>& tape, const Tensor<T>& input, const ForwardOptions& opt) const {
    return run(tape, input, opt, nullptr);
}

template <typename T>
ForwardOutputs<T> Model<T>::run(Tape<T>& tape, const Tensor<T>& input, const ForwardOptions& opt,
                                std::vector<Tensor<T>>* sinks) const {
    if (input.shape() != spec_.input_shape)
        throw ShapeError(spec_.name + " expects input " + shape_str(spec_.input_shape) + ", got " +
                         shape_str(input.shape()));
    std::vector<Var> P;
    P.reserve(params_.size());
    for (std::size_t k = 0; k < params_.size(); ++k)
        P.push_back(tape.parameter(params_[k], sinks ? &(*sinks)[k] : nullptr));

    ForwardOutputs<T> out;
    Var h = tape.constant(input);
    std::size_t p = 0;
    for (const LayerSpec& l : spec_.layers) {
        switch (l.kind) {
            case LayerKind::conv:
                h = ops::activation(tape, ops::conv2d(tape, h, P[p], P[p + 1], l.stride, l.padding), l.activation);
                p += 2;
                break;
            case LayerKind::maxpool: h = ops::maxpool2(tape, h); break;
            case LayerKind::dense:
                h = ops::activation(tape, ops::dense(tape, h, P[p], P[p + 1]), l.activation);
                p += 2;
                break;
            case LayerKind::primary_caps: {
                const Var maps = ops::conv2d(tape, h, P[p], P[p + 1], l.stride, Padding::valid);
                h = ops::primary_caps(tape, maps, l.capsule_types, l.capsule_dim);
                p += 2;
                break;
            }
            case LayerKind::class_caps: {
                const Var votes = ops::votes(tape, h, P[p]);
                out.routing = ops::dynamic_routing(tape, votes, l.routing_iterations);
                h = out.routing->outputs;
                out.class_caps = h;
                out.scores = ops::row_norms(tape, h);
                p += 1;
                break;
            }
            case LayerKind::decoder: {
                const std::size_t n = 2 * l.decoder.fc_sizes.size();
                if (opt.reconstruct) {
                    std::size_t selected;
                    if (opt.mask_label) {
                        selected = *opt.mask_label;
                    } else {
                        const auto s = tape.value(out.scores).data();
                        selected = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
                    }
                    const Var masked = ops::mask_class_capsules(tape, *out.class_caps, selected);
                    std::vector<Var> dp(P.begin() + p, P.begin() + p + n);
                    out.reconstruction = ops::decode(tape, masked, l.decoder, dp);
                }
                p += n;
                break;
            }
            case LayerKind::lstm: {
                const std::size_t u = l.units;
                const Var h0 = tape.constant(Tensor<T>(Shape{u}));
                const Var c0 = tape.constant(Tensor<T>(Shape{u}));
                const LstmVars<T> lv{P[p], P[p + 1], P[p + 2], P[p + 3], P[p + 4], P[p + 5], P[p + 6], P[p + 7]};
                h = lstm_step(tape, ops::reshape(tape, h, Shape{tape.value(h).size()}), h0, c0, lv).first;
                p += 8;
                break;
            }
            case LayerKind::softmax_head: {
                const Var logits = ops::dense(tape, h, P[p], P[p + 1]);
                out.logits = logits;
                out.scores = ops::softmax(tape, logits);
                h = out.scores;
                p += 2;
                break;
            }
        }
    }
    return out;
}

template <typename T>
Var Model<T>::loss(Tape<T>& tape, const Tensor<T>& input, std::size_t label, const LossOptions& opt,
                   ForwardOutputs<T>* outputs) {
    if (label >= spec_.n_classes)
        throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(spec_.n_classes) +
                         " classes");
    ForwardOutputs<T> out;
    Var total{};
    if (spec_.is_capsule_model()) {
        out = forward(tape, input, ForwardOptions{true, label});
        const Var margin = ops::margin_loss(tape, out.scores, label, opt.margin);
        const Tensor<T> target = reconstruction_target(input);
        const double w = opt.recon_weight >= 0 ? opt.recon_weight : default_recon_weight(target.size());
        const Var recon = ops::reconstruction_loss(tape, target, *out.reconstruction);
        total = ops::total_loss(tape, margin, recon, static_cast<T>(w));
    } else {
        out = forward(tape, input, ForwardOptions{});
        total = ops::cross_entropy(tape, *out.logits, label);
    }
    if (outputs) *outputs = out;
    return total;
}

template class Model<float>;
template class Model<double>;

#define CAPSNET_INSTANTIATE(T)                                                                               \
    template std::pair<Var, Var> lstm_step(Tape<T>&, Var, Var, Var, const LstmVars<T>&);                     \
    template std::pair<Tensor<T>, Tensor<T>> lstm_step(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                                       const LstmWeights<T>&);                               \
    template Tensor<T> reconstruction_target(const Tensor<T>&);

CAPSNET_INSTANTIATE(float)
CAPSNET_INSTANTIATE(double)
#undef CAPSNET_INSTANTIATE

}  // namespace capsnet
