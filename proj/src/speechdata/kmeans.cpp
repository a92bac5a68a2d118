#include <algorithm>
#include <cmath>
#include <limits>

#include "lstmkd/error.hpp"
#include "lstmkd/numerics/rng.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

namespace {

void assign_with_distances(const FeatureMatrix &x, const FeatureMatrix &centroids, std::vector<std::size_t> &labels,
                           std::vector<double> &distances) {
    const std::size_t d = x.cols;
    labels.resize(x.rows);
    distances.resize(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double *p = x.values.data() + i * d;
        std::size_t best = 0;
        double best_d = squared_distance(p, centroids.values.data(), d);
        for (std::size_t j = 1; j < centroids.rows; ++j) {
            const double dist = squared_distance(p, centroids.values.data() + j * d, d);
            if (dist < best_d) { // strict: ties stay with the lower index
                best_d = dist;
                best = j;
            }
        }
        labels[i] = best;
        distances[i] = best_d;
    }
}

// Greedy k-means++: each new centre is the best of 2 + ln(k) D^2-sampled
// candidates (the one leaving the smallest total potential), which avoids most
// of the poor local optima plain k-means++ falls into when k is large.
FeatureMatrix plus_plus_init(const FeatureMatrix &x, std::size_t k, Rng &rng) {
    const std::size_t n = x.rows, d = x.cols;
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(double(k)));
    FeatureMatrix c{k, d, std::vector<double>(k * d)};
    auto point = [&](std::size_t i) { return x.values.data() + i * d; };
    const std::size_t first = rng.below(n);
    std::copy_n(point(first), d, c.values.data());
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) {
        nearest[i] = squared_distance(point(i), point(first), d);
    }
    std::vector<double> candidate(n), best_nearest(n);
    for (std::size_t slot = 1; slot < k; ++slot) {
        double total = 0.0;
        for (double v : nearest) {
            total += v;
        }
        double best_potential = std::numeric_limits<double>::infinity();
        std::size_t best = 0;
        for (std::size_t trial = 0; trial < trials; ++trial) {
            std::size_t pick = rng.below(n);
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += nearest[i];
                    if (acc > target) {
                        pick = i;
                        break;
                    }
                }
            }
            double potential = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                candidate[i] = std::min(nearest[i], squared_distance(point(i), point(pick), d));
                potential += candidate[i];
            }
            if (potential < best_potential) {
                best_potential = potential;
                best = pick;
                best_nearest.swap(candidate);
            }
        }
        std::copy_n(point(best), d, c.values.data() + slot * d);
        nearest.swap(best_nearest);
    }
    return c;
}

} // namespace

double squared_distance(const double *a, const double *b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

std::vector<std::size_t> kmeans_assign(const FeatureMatrix &features, const FeatureMatrix &centroids) {
    require(centroids.rows > 0, "invalid_argument", "kmeans_assign: no centroids");
    require(features.cols == centroids.cols, "shape_mismatch",
            "kmeans_assign: features have " + std::to_string(features.cols) + " dimensions, centroids " +
                std::to_string(centroids.cols));
    std::vector<std::size_t> labels;
    std::vector<double> distances;
    assign_with_distances(features, centroids, labels, distances);
    return labels;
}

KMeansResult kmeans_fit(const FeatureMatrix &features, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
    require(k >= 1, "invalid_argument", "kmeans_fit: k must be positive");
    require(features.rows >= k, "invalid_argument",
            "kmeans_fit: " + std::to_string(features.rows) + " points cannot fill " + std::to_string(k) + " clusters");
    require(features.values.size() == features.rows * features.cols, "shape_mismatch", "kmeans_fit: bad matrix");
    const std::size_t n = features.rows, d = features.cols;
    Rng rng(seed);
    KMeansResult result;
    result.centroids = plus_plus_init(features, k, rng);

    std::vector<std::size_t> labels, previous;
    std::vector<double> distances;
    std::vector<double> sums(k * d);
    std::vector<std::size_t> counts(k);
    for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
        assign_with_distances(features, result.centroids, labels, distances);
        double inertia = 0.0;
        for (double v : distances) {
            inertia += v;
        }
        result.inertia_history.push_back(inertia);
        result.iterations = iter + 1;
        if (labels == previous) {
            result.converged = true;
            break;
        }
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double *p = features.values.data() + i * d;
            double *s = sums.data() + labels[i] * d;
            for (std::size_t j = 0; j < d; ++j) {
                s[j] += p[j];
            }
            ++counts[labels[i]];
        }
        std::vector<char> taken(n, 0);
        for (std::size_t c = 0; c < k; ++c) {
            double *dst = result.centroids.values.data() + c * d;
            if (counts[c] > 0) {
                for (std::size_t j = 0; j < d; ++j) {
                    dst[j] = sums[c * d + j] / double(counts[c]);
                }
                continue;
            }
            // Empty cluster: move it onto the worst-served point not already used.
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (!taken[i] && (far == n || distances[i] > distances[far])) {
                    far = i;
                }
            }
            taken[far] = 1;
            std::copy_n(features.values.data() + far * d, d, dst);
        }
        previous = labels;
    }
    return result;
}

} // namespace lstmkd
