#include "capsnet/optimizer.hpp"

#include <cmath>
#include <string>

namespace capsnet {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "sgd") return OptimizerKind::sgd;
    throw ContractError("unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

namespace {

template <typename T>
void check_pairs(const std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads) {
    if (params.size() != grads.size()) throw ShapeError("parameter and gradient counts differ");
    for (std::size_t k = 0; k < params.size(); ++k)
        if (params[k].shape() != grads[k].shape())
            throw ShapeError("gradient " + std::to_string(k) + " has shape " + shape_str(grads[k].shape()) +
                             ", parameter has " + shape_str(params[k].shape()));
}

}  // namespace

template <typename T>
void Adam<T>::step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads) {
    check_pairs(params, grads);
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    } else if (m_.size() != params.size()) {
        throw ShapeError("parameter set changed between Adam steps");
    }
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        T* p = params[k].ptr();
        const T* g = grads[k].ptr();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            m[i] = b1 * m[i] + (1 - b1) * gi;
            v[i] = b2 * v[i] + (1 - b2) * gi * gi;
            const double mhat = m[i] / c1, vhat = v[i] / c2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
        }
    }
}

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, double learning_rate) {
    check_pairs(params, grads);
    for (std::size_t k = 0; k < params.size(); ++k) {
        T* p = params[k].ptr();
        const T* g = grads[k].ptr();
        for (std::size_t i = 0; i < params[k].size(); ++i) p[i] -= static_cast<T>(learning_rate) * g[i];
    }
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate), adam_(AdamConfig{learning_rate}) {
    if (!(learning_rate > 0)) throw ContractError("learning rate must be positive");
}

template <typename T>
void Optimizer<T>::step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads) {
    if (kind_ == OptimizerKind::adam)
        adam_.step(params, grads);
    else
        sgd_step(params, grads, lr_);
    ++steps_;
}

template class Adam<float>;
template class Adam<double>;
template class Optimizer<float>;
template class Optimizer<double>;
template void sgd_step(std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&, double);
template void sgd_step(std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&, double);

}  // namespace capsnet
