#pragma once

#include <functional>
#include <vector>

#include "lstmkd/numerics/finite_diff.hpp"
#include "lstmkd/numerics/tensor.hpp"

namespace lstmkd {

using Leaves = std::vector<Tensor<double>>;

// Rebuilds the graph from fresh leaves on every call so finite differences and
// the tape see the same function. Returns the worst relative error over all
// leaf gradients.
inline double gradcheck(const std::vector<Shape> &shapes, const std::vector<std::vector<double>> &values,
                        const std::function<Tensor<double>(const Leaves &)> &fn, double eps = 1e-6) {
    Leaves leaves;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        leaves.push_back(Tensor<double>::from(shapes[i], std::span<const double>(values[i]), true));
    }
    fn(leaves).backward();
    double worst = 0.0;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        auto f = [&](std::span<const double> x) {
            NoGradGuard guard;
            Leaves probe;
            for (std::size_t j = 0; j < shapes.size(); ++j) {
                probe.push_back(j == i ? Tensor<double>::from(shapes[j], x)
                                       : Tensor<double>::from(shapes[j], std::span<const double>(values[j])));
            }
            return fn(probe).item();
        };
        auto numeric = finite_diff_grad(f, values[i], eps);
        std::vector<double> analytic(numeric.size(), 0.0);
        if (leaves[i].has_grad()) {
            analytic.assign(leaves[i].grad().begin(), leaves[i].grad().end());
        }
        worst = std::max(worst, max_relative_error(analytic, numeric, 1e-4));
    }
    return worst;
}

// Compares the gradient already accumulated on a parameter leaf against
// central differences of `loss`, perturbing the parameter in place.
inline double parameter_gradcheck(Tensor<double> &param, const std::function<double()> &loss, double eps = 1e-6) {
    const std::vector<double> analytic(param.grad().begin(), param.grad().end());
    auto values = param.mutable_data();
    const std::vector<double> original(values.begin(), values.end());
    auto f = [&](std::span<const double> x) {
        NoGradGuard guard;
        std::copy(x.begin(), x.end(), values.begin());
        return loss();
    };
    auto numeric = finite_diff_grad(f, original, eps);
    std::copy(original.begin(), original.end(), values.begin());
    if (analytic.empty()) {
        return max_relative_error(std::vector<double>(numeric.size(), 0.0), numeric, 1e-4);
    }
    return max_relative_error(analytic, numeric, 1e-4);
}

} // namespace lstmkd
