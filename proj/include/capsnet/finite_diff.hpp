#pragma once

#include <functional>

#include "capsnet/tensor.hpp"

namespace capsnet {

/// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / 2eps for every element of x.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double eps) {
    if (!(eps > 0)) throw ContractError("finite_diff_grad needs eps > 0");
    Tensor<double> probe = x;
    Tensor<double> grad(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double up = f(probe);
        probe[i] = orig - eps;
        const double down = f(probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2 * eps);
    }
    return grad;
}

}  // namespace capsnet
