#include "capsnet/tape.hpp"

#include <string>

namespace capsnet {

std::string_view to_string(OpKind kind) {
    switch (kind) {
        case OpKind::conv2d: return "conv2d";
        case OpKind::maxpool2: return "maxpool2";
        case OpKind::dense: return "dense";
        case OpKind::activation: return "activation";
        case OpKind::softmax: return "softmax";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::sum: return "sum";
        case OpKind::reshape: return "reshape";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::cross_entropy: return "cross_entropy";
        case OpKind::squared_error: return "squared_error";
        case OpKind::squash: return "squash";
        case OpKind::votes: return "votes";
        case OpKind::weighted_sum: return "weighted_sum";
        case OpKind::agreement: return "agreement";
        case OpKind::regroup: return "regroup";
        case OpKind::row_norms: return "row_norms";
        case OpKind::mask: return "mask";
        case OpKind::margin_loss: return "margin_loss";
    }
    return "unknown";
}

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
    if (v.id >= nodes_.size()) throw IndexError("invalid tape variable " + std::to_string(v.id));
    return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
    if (v.id >= nodes_.size()) throw IndexError("invalid tape variable " + std::to_string(v.id));
    return nodes_[v.id];
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, false});
    return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::leaf(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, recording_});
    return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(const Tensor<T>& value, Tensor<T>* grad_sink) {
    const bool needs = recording_ && grad_sink != nullptr;
    if (needs && grad_sink->shape() != value.shape())
        throw ShapeError("gradient sink " + shape_str(grad_sink->shape()) + " does not match parameter " +
                         shape_str(value.shape()));
    nodes_.push_back(Node{{}, &value, {}, needs ? grad_sink : nullptr, needs});
    return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
    const Node& n = node(v);
    return n.ref ? *n.ref : n.owned;
}

template <typename T>
bool Tape<T>::requires_grad(Var v) const {
    return node(v).requires_grad;
}

template <typename T>
Tensor<T> Tape<T>::grad(Var v) const {
    const Node& n = node(v);
    if (n.sink) return *n.sink;
    if (n.grad.empty()) return Tensor<T>(value(v).shape());
    return n.grad;
}

template <typename T>
Var Tape<T>::record(OpKind kind, Tensor<T> value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    if (recording_)
        for (Var in : inputs) needs = needs || node(in).requires_grad;
    nodes_.push_back(Node{std::move(value), nullptr, {}, nullptr, needs});
    Var out{nodes_.size() - 1};
    if (needs) ops_.push_back(Op{kind, out.id, std::move(backward)});
    return out;
}

template <typename T>
Tensor<T>* Tape<T>::grad_sink(Var v) {
    Node& n = node(v);
    if (!n.requires_grad) return nullptr;
    if (n.sink) return n.sink;
    if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape());
    return &n.grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
    if (!recording_) throw ContractError("backward on a tape that did not record");
    if (value(loss).size() != 1)
        throw ContractError("backward needs a scalar loss, got shape " + shape_str(value(loss).shape()));
    trace_.clear();
    if (!node(loss).requires_grad) return;
    Tensor<T>* seed = grad_sink(loss);
    (*seed)[0] += T(1);
    for (std::size_t k = ops_.size(); k-- > 0;) {
        Op& op = ops_[k];
        Node& out = nodes_[op.output];
        if (out.grad.empty()) continue;
        if (corrupt_ && corrupt_->first == op.kind)
            for (auto& g : out.grad.data()) g *= corrupt_->second;
        trace_.push_back(k);
        op.backward(*this, out.grad);
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace capsnet
