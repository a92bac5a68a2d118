#include "lstmkd/numerics/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "lstmkd/error.hpp"

namespace lstmkd {

std::vector<double> finite_diff_grad(const ScalarFunction &f, std::span<const double> x, double eps) {
    require(eps > 0.0, "invalid_argument", "finite_diff_grad: eps must be positive");
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + eps;
        const double up = f(point);
        point[i] = saved - eps;
        const double down = f(point);
        point[i] = saved;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double scale_floor) {
    require(a.size() == b.size(), "shape_mismatch", "max_relative_error: length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), scale_floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

} // namespace lstmkd
