#include "capsnet/objective.hpp"

#include <algorithm>
#include <string>

#include "capsnet/ops.hpp"

namespace capsnet {

void MarginLossConfig::validate() const {
    if (!(0 < m_minus && m_minus < m_plus && m_plus < 1))
        throw ContractError("margin loss needs 0 < m_minus < m_plus < 1");
    if (!(lambda > 0)) throw ContractError("margin loss needs lambda > 0");
}

void DecoderSpec::validate() const {
    if (fc_sizes.empty()) throw ContractError("decoder needs at least one FC layer");
    for (auto s : fc_sizes)
        if (s == 0) throw ContractError("decoder FC widths must be positive");
    if (output_side == 0 || fc_sizes.back() != output_side * output_side)
        throw ContractError("decoder last width " + std::to_string(fc_sizes.back()) + " != output_side^2 (" +
                            std::to_string(output_side * output_side) + ")");
}

double default_recon_weight(std::size_t pixel_count) {
    return 0.0005 * static_cast<double>(pixel_count) / 784.0;
}

template <typename T>
T margin_loss(const Tensor<T>& norms, std::size_t target, const MarginLossConfig& cfg) {
    Tape<T> tape(false);
    return tape.value(ops::margin_loss(tape, tape.constant(norms), target, cfg))[0];
}

template <typename T>
Tensor<T> mask_class_capsules(const Tensor<T>& v, std::size_t selected) {
    Tape<T> tape(false);
    return tape.value(ops::mask_class_capsules(tape, tape.constant(v), selected));
}

template <typename T>
Tensor<T> decode(const Tensor<T>& masked, const DecoderSpec& spec, const std::vector<Tensor<T>>& params) {
    Tape<T> tape(false);
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(tape.parameter(p, nullptr));
    return tape.value(ops::decode(tape, tape.constant(masked), spec, vars));
}

template <typename T>
T reconstruction_loss(const Tensor<T>& original, const Tensor<T>& reconstructed) {
    if (original.shape() != reconstructed.shape())
        throw ShapeError("reconstruction " + shape_str(reconstructed.shape()) + " vs original " +
                         shape_str(original.shape()));
    Tape<T> tape(false);
    return tape.value(ops::squared_error(tape, tape.constant(reconstructed), original))[0];
}

template <typename T>
T total_loss(T margin, T recon, T recon_weight) {
    if (recon_weight < T(0)) throw ContractError("reconstruction weight must be non-negative");
    return margin + recon_weight * recon;
}

namespace ops {

template <typename T>
Var margin_loss(Tape<T>& tape, Var norms, std::size_t target, const MarginLossConfig& cfg) {
    cfg.validate();
    const Tensor<T>& n = tape.value(norms);
    if (target >= n.size())
        throw IndexError("target class " + std::to_string(target) + " out of range for " +
                         std::to_string(n.size()) + " capsules");
    const T mp = static_cast<T>(cfg.m_plus), mm = static_cast<T>(cfg.m_minus), lam = static_cast<T>(cfg.lambda);
    T loss = 0;
    for (std::size_t k = 0; k < n.size(); ++k) {
        if (k == target) {
            const T h = std::max(T(0), mp - n[k]);
            loss += h * h;
        } else {
            const T h = std::max(T(0), n[k] - mm);
            loss += lam * h * h;
        }
    }
    return tape.record(OpKind::margin_loss, Tensor<T>::scalar(loss), {norms},
                       [norms, target, mp, mm, lam](Tape<T>& t, const Tensor<T>& g) {
                           const Tensor<T>& n = t.value(norms);
                           Tensor<T>* dn = t.grad_sink(norms);
                           for (std::size_t k = 0; k < n.size(); ++k) {
                               if (k == target)
                                   (*dn)[k] += g[0] * T(-2) * std::max(T(0), mp - n[k]);
                               else
                                   (*dn)[k] += g[0] * T(2) * lam * std::max(T(0), n[k] - mm);
                           }
                       });
}

template <typename T>
Var mask_class_capsules(Tape<T>& tape, Var v, std::size_t selected) {
    const Tensor<T>& x = tape.value(v);
    if (x.rank() != 2) throw ShapeError("class capsules must be n_classes x d, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (selected >= n)
        throw IndexError("masked capsule " + std::to_string(selected) + " out of range for " + std::to_string(n));
    Tensor<T> out(Shape{n * d});
    for (std::size_t k = 0; k < d; ++k) out[selected * d + k] = x(selected, k);
    return tape.record(OpKind::mask, std::move(out), {v}, [v, selected, d](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>* dx = t.grad_sink(v);
        for (std::size_t k = 0; k < d; ++k) (*dx)[selected * d + k] += g[selected * d + k];
    });
}

template <typename T>
Var decode(Tape<T>& tape, Var masked, const DecoderSpec& spec, const std::vector<Var>& params) {
    spec.validate();
    if (params.size() != 2 * spec.fc_sizes.size())
        throw ShapeError("decoder expects " + std::to_string(2 * spec.fc_sizes.size()) + " parameter tensors, got " +
                         std::to_string(params.size()));
    std::size_t in = tape.value(masked).size();
    Var h = masked;
    for (std::size_t l = 0; l < spec.fc_sizes.size(); ++l) {
        const Shape& w = tape.shape(params[2 * l]);
        if (w != Shape{spec.fc_sizes[l], in})
            throw ShapeError("decoder layer " + std::to_string(l) + " weights " + shape_str(w) + ", expected " +
                             shape_str(Shape{spec.fc_sizes[l], in}));
        h = dense(tape, h, params[2 * l], params[2 * l + 1]);
        const bool last = l + 1 == spec.fc_sizes.size();
        h = activation(tape, h, last ? Activation::sigmoid : Activation::relu);
        in = spec.fc_sizes[l];
    }
    return reshape(tape, h, Shape{spec.output_side, spec.output_side});
}

template <typename T>
Var reconstruction_loss(Tape<T>& tape, const Tensor<T>& original, Var reconstructed) {
    if (original.shape() != tape.shape(reconstructed))
        throw ShapeError("reconstruction " + shape_str(tape.shape(reconstructed)) + " vs original " +
                         shape_str(original.shape()));
    return squared_error(tape, reconstructed, original);
}

template <typename T>
Var total_loss(Tape<T>& tape, Var margin, Var recon, T recon_weight) {
    if (recon_weight < T(0)) throw ContractError("reconstruction weight must be non-negative");
    if (recon_weight == T(0)) return margin;
    return add(tape, margin, scale(tape, recon, recon_weight));
}

}  // namespace ops

#define CAPSNET_INSTANTIATE(T)                                                                             \
    template T margin_loss(const Tensor<T>&, std::size_t, const MarginLossConfig&);                        \
    template Tensor<T> mask_class_capsules(const Tensor<T>&, std::size_t);                                 \
    template Tensor<T> decode(const Tensor<T>&, const DecoderSpec&, const std::vector<Tensor<T>>&);        \
    template T reconstruction_loss(const Tensor<T>&, const Tensor<T>&);                                    \
    template T total_loss(T, T, T);                                                                        \
    template Var ops::margin_loss(Tape<T>&, Var, std::size_t, const MarginLossConfig&);                    \
    template Var ops::mask_class_capsules(Tape<T>&, Var, std::size_t);                                     \
    template Var ops::decode(Tape<T>&, Var, const DecoderSpec&, const std::vector<Var>&);                  \
    template Var ops::reconstruction_loss(Tape<T>&, const Tensor<T>&, Var);                                \
    template Var ops::total_loss(Tape<T>&, Var, Var, T);

CAPSNET_INSTANTIATE(float)
CAPSNET_INSTANTIATE(double)
#undef CAPSNET_INSTANTIATE

}  // namespace capsnet
