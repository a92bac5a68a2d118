#include "lstmkd/cli/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "lstmkd/error.hpp"
#include "lstmkd/losses/losses.hpp"
#include "lstmkd/models/model.hpp"
#include "lstmkd/numerics/distribution.hpp"
#include "lstmkd/numerics/gradcheck.hpp"
#include "lstmkd/numerics/rng.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

namespace {

constexpr double kTaus[] = {0.5, 1.0, 2.0, 4.0};
constexpr std::size_t kClasses[] = {2, 5, 100, 500};

std::vector<double> normals(Rng &rng, std::size_t n, double sd) {
    std::vector<double> v(n);
    for (auto &x : v) {
        x = rng.normal() * sd;
    }
    return v;
}

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void record(SuiteResult &r, double error) {
    ++r.cases;
    r.worst = std::max(r.worst, error);
    if (error <= r.tolerance) {
        ++r.passed;
    }
}

struct Draw {
    std::vector<double> teacher, student;
    std::size_t target = 0;
    double tau = 1.0;
};

Draw draw_pair(Rng &rng) {
    Draw d;
    const std::size_t c = kClasses[rng.below(4)];
    d.tau = kTaus[rng.below(4)];
    d.teacher = normals(rng, c, 2.0);
    d.student = normals(rng, c, 2.0);
    d.target = rng.below(c);
    return d;
}

// A random miniature model: both architectures, both heads, a two-layer conv
// stack, and just enough frames to exercise attention and recurrence.
ModelConfig random_tiny_config(Rng &rng, std::size_t instance) {
    ModelConfig c;
    c.name = "verify-tiny";
    c.encoder_channels = 2 + rng.below(3);
    c.encoder_kernels = {2 + rng.below(3), 2 + rng.below(2)};
    c.encoder_strides = {2, 1 + rng.below(2)};
    c.arch = instance % 2 == 0 ? Arch::BiLstm : Arch::Transformer;
    c.num_layers = 1 + rng.below(2);
    if (c.arch == Arch::Transformer) {
        c.heads = 1 + rng.below(2);
        c.hidden = 2 * c.heads;
        c.ffn = 3 + rng.below(3);
        c.pos_conv_kernel = rng.bernoulli(0.5) ? 3 : 0;
    } else {
        c.hidden = 2 + rng.below(2);
    }
    c.num_clusters = 3 + rng.below(3);
    c.head = rng.bernoulli(0.5) ? HeadKind::Cosine : HeadKind::Linear;
    c.head_projection = 3;
    c.head_temperature = 1.0;
    c.validate();
    return c;
}

double toy_model_gradcheck(Rng &rng, std::size_t instance) {
    const auto cfg = random_tiny_config(rng, instance);
    Model<double> model(cfg, rng.next_u64());
    const std::size_t samples = cfg.receptive_field() + 6 + rng.below(12);
    std::vector<float> wave(samples);
    for (auto &v : wave) {
        v = static_cast<float>(rng.normal() * 0.5);
    }
    auto packed = pack_waveforms<double>({std::span<const float>(wave)});
    const std::size_t t = cfg.frames_for(samples), c = cfg.num_clusters;
    FrameTargets targets;
    for (std::size_t i = 0; i < t; ++i) {
        targets.labels.push_back(rng.below(c));
        if (rng.bernoulli(0.5) || i == 0) {
            targets.mask_indices.push_back(i);
        }
    }
    const auto teacher = make_teacher_targets(normals(rng, t * c, 1.5), t, c, 1.0 + rng.uniform());
    auto loss = [&] {
        auto logits = model.forward(packed).logits;
        return add(masked_cluster_loss(logits, targets, Reduction::Mean).value,
                   kd_loss(logits, teacher, Reduction::Mean));
    };
    model.zero_grad();
    loss().backward();
    double worst = 0.0;
    for (auto &p : model.parameters()) {
        worst = std::max(worst, parameter_gradcheck(p.value, [&] { return loss().item(); }));
    }
    return worst;
}

FeatureMatrix random_blobs(Rng &rng, std::size_t n, std::size_t d, std::size_t blobs) {
    const auto centres = normals(rng, blobs * d, 5.0);
    FeatureMatrix x{n, d, std::vector<double>(n * d)};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t b = rng.below(blobs);
        for (std::size_t e = 0; e < d; ++e) {
            x.values[i * d + e] = centres[b * d + e] + rng.normal();
        }
    }
    return x;
}

} // namespace

std::string to_string(GradientTarget target) {
    switch (target) {
    case GradientTarget::Kd:
        return "kd_loss";
    case GradientTarget::Dkd:
        return "dkd_loss";
    case GradientTarget::MaskedCluster:
        return "masked_cluster_loss";
    case GradientTarget::ToyModel:
        return "toy model forward + loss";
    }
    return "?";
}

SuiteResult decomposition_identity_suite(std::size_t draws, std::uint64_t seed, double tolerance) {
    Timer timer;
    SuiteResult r{"decomposition identity", 0, 0, 0.0, tolerance};
    Rng rng(seed);
    for (std::size_t i = 0; i < draws; ++i) {
        const auto d = draw_pair(rng);
        const double kd = kd_loss(d.teacher, d.student, d.tau);
        const auto parts = dkd_components(d.teacher, d.student, d.target, d.tau);
        record(r, std::abs(kd - (parts.tckd + (1.0 - parts.teacher_target_prob) * parts.nckd)));
    }
    r.seconds = timer.seconds();
    return r;
}

SuiteResult kd_dkd_equivalence_suite(std::size_t draws, std::uint64_t seed, double tolerance) {
    Timer timer;
    SuiteResult r{"kd = dkd(alpha=1, beta=1-p_target)", 0, 0, 0.0, tolerance};
    Rng rng(seed);
    for (std::size_t i = 0; i < draws; ++i) {
        const auto d = draw_pair(rng);
        const double kd = kd_loss(d.teacher, d.student, d.tau);
        const double p = softmax_t(d.teacher, d.tau)[d.target];
        record(r, std::abs(kd - dkd_loss(d.teacher, d.student, d.target, DkdWeights{1.0, 1.0 - p, d.tau})));
    }
    r.seconds = timer.seconds();
    return r;
}

SuiteResult gradient_suite(GradientTarget target, std::size_t instances, std::uint64_t seed, double tolerance) {
    Timer timer;
    SuiteResult r{"gradient check: " + to_string(target), 0, 0, 0.0, tolerance};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        if (target == GradientTarget::ToyModel) {
            record(r, toy_model_gradcheck(rng, i));
            continue;
        }
        const std::size_t rows = 1 + rng.below(4), c = 2 + rng.below(8);
        const double tau = 0.5 + 3.0 * rng.uniform();
        const auto t = normals(rng, rows * c, 1.5), s = normals(rng, rows * c, 1.5);
        std::vector<std::size_t> labels(rows);
        for (auto &g : labels) {
            g = rng.below(c);
        }
        const auto teacher = make_teacher_targets(t, rows, c, tau, labels);
        double err = 0.0;
        if (target == GradientTarget::Kd) {
            err = gradcheck({{rows, c}}, {s}, [&](const Leaves &l) { return kd_loss(l[0], teacher, Reduction::Mean); });
        } else if (target == GradientTarget::Dkd) {
            const DkdWeights w{rng.uniform(0.1, 2.0), rng.uniform(0.1, 8.0), tau};
            err = gradcheck({{rows, c}}, {s}, [&](const Leaves &l) { return dkd_loss(l[0], teacher, w, Reduction::Mean); });
        } else {
            FrameTargets ft{labels, {}};
            for (std::size_t row = 0; row < rows; ++row) {
                if (rng.bernoulli(0.6) || row == 0) {
                    ft.mask_indices.push_back(row);
                }
            }
            err = gradcheck({{rows, c}}, {s}, [&](const Leaves &l) {
                return masked_cluster_loss(l[0], ft, Reduction::Mean).value;
            });
        }
        record(r, err);
    }
    r.seconds = timer.seconds();
    return r;
}

SuiteResult analytic_kd_gradient_suite(std::size_t instances, std::uint64_t seed, double tolerance) {
    Timer timer;
    SuiteResult r{"kd gradient = tau (p_s - p_t)", 0, 0, 0.0, tolerance};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const auto d = draw_pair(rng);
        const std::size_t c = d.teacher.size();
        auto x = Tensor<double>::from({1, c}, std::span<const double>(d.student), true);
        kd_loss(x, make_teacher_targets(d.teacher, 1, c, d.tau), Reduction::Sum).backward();
        const auto ps = softmax_t(d.student, d.tau), pt = softmax_t(d.teacher, d.tau);
        double err = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            err = std::max(err, std::abs(x.grad()[j] - d.tau * (ps[j] - pt[j])));
        }
        record(r, err);
    }
    r.seconds = timer.seconds();
    return r;
}

SuiteResult masked_locality_suite(std::size_t cases, std::uint64_t seed) {
    Timer timer;
    SuiteResult r{"masked loss ignores unmasked frames", 0, 0, 0.0, 0.0};
    Rng rng(seed);
    for (std::size_t trial = 0; trial < cases; ++trial) {
        const std::size_t t = 3 + rng.below(20), c = 2 + rng.below(30);
        const auto logits = normals(rng, t * c, 3.0);
        FrameTargets targets;
        std::vector<bool> masked(t, false);
        for (std::size_t i = 0; i < t; ++i) {
            targets.labels.push_back(rng.below(c));
            if (rng.bernoulli(0.4)) {
                targets.mask_indices.push_back(i);
                masked[i] = true;
            }
        }
        const double before = masked_cluster_loss(logits, c, targets);
        auto mutated = logits;
        for (std::size_t i = 0; i < t; ++i) {
            for (std::size_t j = 0; j < c && !masked[i]; ++j) {
                mutated[i * c + j] = rng.normal() * 100.0;
            }
        }
        const double after = masked_cluster_loss(mutated, c, targets);
        record(r, std::memcmp(&before, &after, sizeof(double)) == 0 ? 0.0 : 1.0);
    }
    r.seconds = timer.seconds();
    return r;
}

SuiteResult kmeans_inertia_suite(std::size_t datasets, std::uint64_t seed) {
    Timer timer;
    SuiteResult r{"k-means inertia non-increasing", 0, 0, 0.0, 0.0};
    Rng rng(seed);
    for (std::size_t i = 0; i < datasets; ++i) {
        const std::size_t d = 1 + rng.below(6), n = 20 + rng.below(300), k = 1 + rng.below(10);
        const auto x = random_blobs(rng, n, d, 1 + rng.below(8));
        const auto fit = kmeans_fit(x, k, 100, rng.next_u64());
        double rise = 0.0;
        for (std::size_t s = 1; s < fit.inertia_history.size(); ++s) {
            rise = std::max(rise, fit.inertia_history[s] - fit.inertia_history[s - 1]);
        }
        record(r, rise);
    }
    r.seconds = timer.seconds();
    return r;
}

SuiteResult kmeans_assignment_suite(std::size_t datasets, std::uint64_t seed) {
    Timer timer;
    SuiteResult r{"nearest-centroid = brute force", 0, 0, 0.0, 0.0};
    Rng rng(seed);
    for (std::size_t trial = 0; trial < datasets; ++trial) {
        const std::size_t d = 1 + rng.below(6), k = 1 + rng.below(12), n = 50 + rng.below(250);
        FeatureMatrix cent{k, d, normals(rng, k * d, 2.0)};
        FeatureMatrix x{n, d, normals(rng, n * d, 2.0)};
        // exact copies of centroids make zero distances and ties likely
        for (std::size_t i = 0; i < std::min(k, n); ++i) {
            std::copy_n(cent.values.begin() + std::ptrdiff_t(i * d), d, x.values.begin() + std::ptrdiff_t(i * d));
        }
        const auto labels = kmeans_assign(x, cent);
        std::size_t mismatches = 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t e = 0; e < d; ++e) {
                    const double diff = x.values[i * d + e] - cent.values[j * d + e];
                    s += diff * diff;
                }
                if (j == 0 || s < best_d) {
                    best = j;
                    best_d = s;
                }
            }
            mismatches += labels[i] != best ? 1 : 0;
        }
        record(r, double(mismatches));
    }
    r.seconds = timer.seconds();
    return r;
}

std::vector<SuiteResult> run_verify_suites(std::uint64_t seed) {
    const Rng root(seed);
    std::vector<SuiteResult> out;
    out.push_back(decomposition_identity_suite(1000, root.fork(1).next_u64()));
    out.push_back(kd_dkd_equivalence_suite(1000, root.fork(2).next_u64()));
    std::uint64_t stream = 3;
    for (auto target : {GradientTarget::Kd, GradientTarget::Dkd, GradientTarget::MaskedCluster, GradientTarget::ToyModel}) {
        out.push_back(gradient_suite(target, 50, root.fork(stream++).next_u64()));
    }
    out.push_back(analytic_kd_gradient_suite(200, root.fork(7).next_u64()));
    out.push_back(masked_locality_suite(100, root.fork(8).next_u64()));
    out.push_back(kmeans_inertia_suite(100, root.fork(9).next_u64()));
    out.push_back(kmeans_assignment_suite(100, root.fork(10).next_u64()));
    return out;
}

} // namespace lstmkd
