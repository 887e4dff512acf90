#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "capsnet/tensor.hpp"

namespace capsnet {

enum class OpKind {
    conv2d,
    maxpool2,
    dense,
    activation,
    softmax,
    add,
    mul,
    scale,
    sum,
    reshape,
    concat,
    slice,
    cross_entropy,
    squared_error,
    squash,
    votes,
    weighted_sum,
    agreement,
    regroup,
    row_norms,
    mask,
    margin_loss,
};

std::string_view to_string(OpKind kind);

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
};

/// Record of executed primitives for reverse-mode differentiation.
///
/// Nodes hold forward values; parameters are referenced rather than copied and
/// their gradients accumulate into caller-owned sinks, so one set of gradient
/// buffers can collect a whole mini-batch. A Tape constructed with
/// `recording = false` runs the same forward code without saving any
/// backward closures.
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor<T>& out_grad)>;

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return recording_; }

    Var constant(Tensor<T> value);
    /// Differentiable input with a tape-owned gradient.
    Var leaf(Tensor<T> value);
    /// `value` and `grad_sink` must outlive the tape.
    Var parameter(const Tensor<T>& value, Tensor<T>* grad_sink);

    const Tensor<T>& value(Var v) const;
    const Shape& shape(Var v) const { return value(v).shape(); }
    bool requires_grad(Var v) const;

    /// Gradient accumulated at a node after backward(); zeros if none flowed.
    Tensor<T> grad(Var v) const;

    /// Append an op's output. `backward` is dropped when not recording or when
    /// no input needs a gradient.
    Var record(OpKind kind, Tensor<T> value, std::initializer_list<Var> inputs, Backward backward);

    /// Accumulation target for an input's gradient, or nullptr when the input
    /// does not need one.
    Tensor<T>* grad_sink(Var v);

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse order.
    void backward(Var loss);

    /// Test fixture: multiplies the upstream gradient entering every rule of
    /// `kind` by `factor`, producing a wrong but well-formed gradient.
    void corrupt(OpKind kind, T factor) { corrupt_ = {kind, factor}; }

    std::size_t node_count() const noexcept { return nodes_.size(); }
    std::size_t op_count() const noexcept { return ops_.size(); }
    const std::vector<std::size_t>& backward_trace() const noexcept { return trace_; }
    OpKind op_kind(std::size_t op) const { return ops_.at(op).kind; }

private:
    struct Node {
        Tensor<T> owned;
        const Tensor<T>* ref = nullptr;
        Tensor<T> grad;
        Tensor<T>* sink = nullptr;
        bool requires_grad = false;
    };
    struct Op {
        OpKind kind;
        std::size_t output;
        Backward backward;
    };

    Node& node(Var v);
    const Node& node(Var v) const;

    bool recording_;
    std::deque<Node> nodes_;
    std::vector<Op> ops_;
    std::vector<std::size_t> trace_;
    std::optional<std::pair<OpKind, T>> corrupt_;
};

}  // namespace capsnet
