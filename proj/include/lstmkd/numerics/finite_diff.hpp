#pragma once

#include <functional>
#include <span>
#include <vector>

namespace lstmkd {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate.
std::vector<double> finite_diff_grad(const ScalarFunction &f, std::span<const double> x, double eps);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, scale_floor). The floor keeps
/// near-zero components from dominating through round-off alone.
double max_relative_error(std::span<const double> a, std::span<const double> b, double scale_floor = 1e-6);

} // namespace lstmkd
