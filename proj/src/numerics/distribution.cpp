#include "lstmkd/numerics/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lstmkd/error.hpp"

namespace lstmkd {

namespace {

void check_logits(std::span<const double> logits, double tau) {
    require(!logits.empty(), "invalid_argument", "softmax_t: empty logit vector");
    require(tau > 0.0 && std::isfinite(tau), "invalid_argument", "softmax_t: temperature must be positive");
    for (double l : logits) {
        require(std::isfinite(l), "non_finite", "softmax_t: non-finite logit");
    }
}

} // namespace

std::vector<double> log_softmax_t(std::span<const double> logits, double tau) {
    check_logits(logits, tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        out[c] = (logits[c] - mx) / tau;
        total += std::exp(out[c]);
    }
    const double lse = std::log(total);
    for (double &v : out) {
        v -= lse;
    }
    return out;
}

SoftDistribution softmax_t(std::span<const double> logits, double tau) {
    check_logits(logits, tau);
    const double mx = *std::max_element(logits.begin(), logits.end());
    SoftDistribution dist{std::vector<double>(logits.size()), tau};
    double total = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        dist.probs[c] = std::exp((logits[c] - mx) / tau);
        total += dist.probs[c];
    }
    for (double &p : dist.probs) {
        p /= total;
    }
    return dist;
}

double kl_divergence(std::span<const double> p, std::span<const double> q, KlOptions options) {
    require(p.size() == q.size(), "shape_mismatch",
            "kl_divergence: lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()) + " differ");
    double total = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p[c] <= 0.0) {
            continue;
        }
        if (!options.floor) {
            require(q[c] > 0.0, "zero_probability", "kl_divergence: q has a zero where p is positive");
            total += p[c] * (std::log(p[c]) - std::log(q[c]));
        } else {
            total += p[c] * (std::log(std::max(p[c], kProbabilityFloor)) - std::log(std::max(q[c], kProbabilityFloor)));
        }
    }
    // Round-off can leave a tiny negative value when p and q agree.
    return std::max(total, 0.0);
}

double kl_divergence(const SoftDistribution &p, const SoftDistribution &q, KlOptions options) {
    return kl_divergence(std::span<const double>(p.probs), std::span<const double>(q.probs), options);
}

} // namespace lstmkd
