#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capsnet/capsule.hpp"
#include "capsnet/model_spec.hpp"
#include "capsnet/objective.hpp"
#include "capsnet/tape.hpp"

namespace capsnet {

inline constexpr const char* kInitScheme =
    "conv/dense/lstm/decoder weights uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)); biases 0; "
    "capsule transforms normal(0, 0.05)";

// ---- LSTM cell -------------------------------------------------------------

template <typename T>
struct LstmWeights {
    // Each gate maps [x; h_prev] (d + u) to u units.
    Tensor<T> W_i, W_f, W_g, W_o;
    Tensor<T> b_i, b_f, b_g, b_o;
};

template <typename T>
struct LstmVars {
    Var W_i, W_f, W_g, W_o;
    Var b_i, b_f, b_g, b_o;
};

/// i, f, o = sigmoid(.), g = tanh(.), c = f*c_prev + i*g, h = o*tanh(c).
template <typename T>
std::pair<Var, Var> lstm_step(Tape<T>& tape, Var x, Var h_prev, Var c_prev, const LstmVars<T>& p);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev,
                                          const LstmWeights<T>& p);

// ---- model -----------------------------------------------------------------

struct ForwardOptions {
    bool reconstruct = false;
    /// Capsule to keep for the decoder; argmax of norms when empty.
    std::optional<std::size_t> mask_label;
};

struct LossOptions {
    MarginLossConfig margin;
    /// Negative selects default_recon_weight(input pixels).
    double recon_weight = -1;
};

template <typename T>
struct ForwardOutputs {
    Var scores{};  // class-capsule norms, or softmax probabilities
    std::optional<Var> logits;
    std::optional<Var> class_caps;
    std::optional<ops::RoutingVars<T>> routing;
    std::optional<Var> reconstruction;
};

/// Parameters of a ModelSpec plus matching gradient buffers.
template <typename T>
class Model {
public:
    explicit Model(ModelSpec spec);

    /// Parameters drawn with the kInitScheme recipe from a seeded generator.
    static Model initialized(ModelSpec spec, std::uint64_t seed);

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::vector<ParamInfo>& layout() const noexcept { return layout_; }
    std::vector<Tensor<T>>& params() noexcept { return params_; }
    const std::vector<Tensor<T>>& params() const noexcept { return params_; }
    std::vector<Tensor<T>>& grads() noexcept { return grads_; }
    const std::vector<Tensor<T>>& grads() const noexcept { return grads_; }

    Tensor<T>& param(std::string_view name);
    const Tensor<T>& param(std::string_view name) const;

    void zero_grad();

    /// Binds gradient sinks when the tape records.
    ForwardOutputs<T> forward(Tape<T>& tape, const Tensor<T>& input, const ForwardOptions& opt = {});
    /// Read-only pass; never touches gradient buffers.
    ForwardOutputs<T> infer(Tape<T>& tape, const Tensor<T>& input, const ForwardOptions& opt = {}) const;

    /// Margin + weighted reconstruction loss for capsule models, cross-entropy otherwise.
    Var loss(Tape<T>& tape, const Tensor<T>& input, std::size_t label, const LossOptions& opt = {},
             ForwardOutputs<T>* outputs = nullptr);

    template <typename U>
    Model<U> cast() const {
        Model<U> m(spec_);
        for (std::size_t i = 0; i < params_.size(); ++i) m.params()[i] = params_[i].template cast<U>();
        return m;
    }

private:
    ForwardOutputs<T> run(Tape<T>& tape, const Tensor<T>& input, const ForwardOptions& opt,
                          std::vector<Tensor<T>>* sinks) const;

    ModelSpec spec_;
    std::vector<ParamInfo> layout_;
    std::vector<Tensor<T>> params_;
    std::vector<Tensor<T>> grads_;
};

/// Single-channel image the decoder is trained to reproduce: the channel mean.
template <typename T>
Tensor<T> reconstruction_target(const Tensor<T>& image);

}  // namespace capsnet
