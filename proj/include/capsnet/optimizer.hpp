#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "capsnet/tensor.hpp"

namespace capsnet {

enum class OptimizerKind { adam, sgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view s);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction; moments are kept in double.
template <typename T>
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads);
    std::uint64_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }

private:
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

template <typename T>
void sgd_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads, double learning_rate);

/// Adam or plain SGD behind one interface.
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate);
    void step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads);
    std::uint64_t steps() const noexcept { return steps_; }

private:
    OptimizerKind kind_;
    double lr_;
    Adam<T> adam_;
    std::uint64_t steps_ = 0;
};

}  // namespace capsnet
