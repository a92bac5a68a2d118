#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lstmkd {

/// Outcome of one randomized check: `passed` of `cases` instances met the
/// tolerance; `worst` is the largest observed error (or 0/1 for exact checks).
struct SuiteResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t passed = 0;
    double worst = 0.0;
    double tolerance = 0.0;
    double seconds = 0.0;

    bool ok() const { return cases > 0 && passed == cases; }
};

/// |KD - (TCKD + (1 - p^T) NCKD)| over random float64 draws with
/// tau in {0.5, 1, 2, 4} and C in {2, 5, 100, 500}.
SuiteResult decomposition_identity_suite(std::size_t draws, std::uint64_t seed, double tolerance = 1e-9);

/// |KD - DKD(alpha = 1, beta = 1 - p^T)| on the same kind of draws.
SuiteResult kd_dkd_equivalence_suite(std::size_t draws, std::uint64_t seed, double tolerance = 1e-9);

enum class GradientTarget { Kd, Dkd, MaskedCluster, ToyModel };

std::string to_string(GradientTarget target);

/// Tape gradients against central finite differences (relative error with a
/// 1e-4 absolute floor) on random small instances. ToyModel checks every
/// parameter of a randomly shaped miniature model under masked CE + KD.
SuiteResult gradient_suite(GradientTarget target, std::size_t instances, std::uint64_t seed,
                           double tolerance = 1e-4);

/// dL_KD / dl^S = tau (p^S - p^T) against the tape, float64.
SuiteResult analytic_kd_gradient_suite(std::size_t instances, std::uint64_t seed, double tolerance = 1e-6);

/// Rewriting logits at unmasked frames leaves the masked loss bit-identical.
SuiteResult masked_locality_suite(std::size_t cases, std::uint64_t seed);

/// Lloyd inertia never increases between iterations.
SuiteResult kmeans_inertia_suite(std::size_t datasets, std::uint64_t seed);

/// Nearest-centroid assignment equals a brute-force scan (lowest index on ties).
SuiteResult kmeans_assignment_suite(std::size_t datasets, std::uint64_t seed);

/// The suites behind `lstmkd verify`, at their acceptance sizes.
std::vector<SuiteResult> run_verify_suites(std::uint64_t seed);

} // namespace lstmkd
