#pragma once

#include <span>
#include <vector>

namespace lstmkd {

/// Probability floor used inside logarithms.
inline constexpr double kProbabilityFloor = 1e-12;

/// A temperature-softened categorical distribution over C classes.
struct SoftDistribution {
    std::vector<double> probs;
    double temperature = 1.0;

    std::size_t size() const { return probs.size(); }
    double operator[](std::size_t i) const { return probs[i]; }
};

/// exp(l_c / tau) / sum_c' exp(l_c' / tau), evaluated after subtracting the
/// maximum logit. Throws on an empty vector, tau <= 0 or non-finite logits.
SoftDistribution softmax_t(std::span<const double> logits, double tau);

/// Row-wise log of softmax_t without forming the probabilities.
std::vector<double> log_softmax_t(std::span<const double> logits, double tau);

struct KlOptions {
    /// When true, both arguments are clamped to kProbabilityFloor inside the
    /// logarithm. When false, q_c == 0 with p_c > 0 is an error.
    bool floor = true;
};

/// KL(p || q) = sum_c p_c ln(p_c / q_c), with 0 ln(0 / q) = 0.
double kl_divergence(const SoftDistribution &p, const SoftDistribution &q, KlOptions options = {});
double kl_divergence(std::span<const double> p, std::span<const double> q, KlOptions options = {});

} // namespace lstmkd
