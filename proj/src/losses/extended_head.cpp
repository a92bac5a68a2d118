#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "lstmkd/error.hpp"
#include "lstmkd/losses/losses.hpp"

#if defined(__SIZEOF_FLOAT128__)
extern "C" {
#include <quadmath.h>
}
#define LSTMKD_HAVE_FLOAT128 1
#endif

namespace lstmkd {

bool extended_precision_available() {
#ifdef LSTMKD_HAVE_FLOAT128
    return true;
#else
    return false;
#endif
}

#ifdef LSTMKD_HAVE_FLOAT128

namespace {

using Quad = __float128;

struct RowSoftmax {
    std::vector<Quad> probs;
    std::vector<Quad> logs;
};

template <typename T>
RowSoftmax quad_softmax(const T *logits, std::size_t classes, Quad tau) {
    RowSoftmax out{std::vector<Quad>(classes), std::vector<Quad>(classes)};
    Quad mx = static_cast<Quad>(logits[0]);
    for (std::size_t c = 1; c < classes; ++c) {
        mx = std::max(mx, static_cast<Quad>(logits[c]));
    }
    Quad total = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        out.logs[c] = (static_cast<Quad>(logits[c]) - mx) / tau;
        out.probs[c] = expq(out.logs[c]);
        total += out.probs[c];
    }
    const Quad lse = logq(total);
    for (std::size_t c = 0; c < classes; ++c) {
        out.probs[c] /= total;
        out.logs[c] -= lse;
    }
    return out;
}

} // namespace

Tensor<double> extended_distill_loss(const Tensor<double> &student_logits, std::span<const float> teacher_logits,
                                     std::span<const std::size_t> targets, const ExtendedDistillSpec &spec,
                                     Reduction reduction) {
    using Mode = ExtendedDistillSpec::Mode;
    const std::size_t rows = student_logits.rows(), classes = student_logits.cols();
    require(teacher_logits.size() == rows * classes, "shape_mismatch", "extended_distill_loss: teacher shape");
    require(classes >= 2, "invalid_argument", "extended_distill_loss: at least two classes are required");
    require(spec.tau > 0.0, "invalid_argument", "extended_distill_loss: temperature must be positive");
    const bool decoupled = spec.mode != Mode::Kd;
    require(!decoupled || targets.size() == rows, "shape_mismatch", "extended_distill_loss: one target per row");

    const Quad tau = spec.tau;
    const Quad tau2 = tau * tau;
    const Quad norm = reduction == Reduction::Mean ? Quad(1) / Quad(rows) : Quad(1);
    Quad total = 0;
    auto grad = std::make_shared<std::vector<double>>(rows * classes);
    std::vector<Quad> g(classes);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto s = quad_softmax(student_logits.data().data() + r * classes, classes, tau);
        const auto t = quad_softmax(teacher_logits.data() + r * classes, classes, tau);
        Quad loss = 0;
        if (!decoupled) {
            for (std::size_t c = 0; c < classes; ++c) {
                if (t.probs[c] > 0) {
                    loss += t.probs[c] * (t.logs[c] - s.logs[c]);
                }
                g[c] = tau * (s.probs[c] - t.probs[c]);
            }
            loss *= tau2;
        } else {
            const std::size_t target = targets[r];
            require(target < classes, "label_out_of_range", "extended_distill_loss: target out of range");
            Quad rest_t = 0, rest_s = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                if (c != target) {
                    rest_t += t.probs[c];
                    rest_s += s.probs[c];
                }
            }
            require(rest_t > 0 && rest_s > 0, "degenerate_target", "extended_distill_loss: degenerate target");
            const Quad tg = t.probs[target], sg = s.probs[target];
            const Quad tckd = tau2 * (tg * (t.logs[target] - s.logs[target]) + rest_t * (logq(rest_t) - logq(rest_s)));
            Quad nckd = 0;
            if (classes > 2) {
                for (std::size_t c = 0; c < classes; ++c) {
                    if (c != target && t.probs[c] > 0) {
                        const Quad pt = t.probs[c] / rest_t;
                        nckd += pt * ((t.logs[c] - logq(rest_t)) - (s.logs[c] - logq(rest_s)));
                    }
                }
                nckd *= tau2;
            }
            const Quad alpha = spec.alpha;
            const Quad beta = spec.mode == Mode::DkdDynamicBeta ? rest_t : Quad(spec.beta);
            loss = alpha * tckd + beta * nckd;
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == target) {
                    g[c] = alpha * tau * (sg - tg);
                } else {
                    const Quad g_tckd = tau * s.probs[c] * (tg - sg) / rest_s;
                    const Quad g_nckd = classes > 2 ? tau * (s.probs[c] / rest_s - t.probs[c] / rest_t) : Quad(0);
                    g[c] = alpha * g_tckd + beta * g_nckd;
                }
            }
        }
        total += loss;
        for (std::size_t c = 0; c < classes; ++c) {
            (*grad)[r * classes + c] = static_cast<double>(g[c] * norm);
        }
    }
    Buffer<double> value{static_cast<double>(total * norm)};
    return make_result<double>("extended_distill_loss", {1}, std::move(value), {student_logits},
                               [grad](detail::TensorNode<double> &self) {
                                   auto dst = self.parents[0]->grad_buffer();
                                   const double upstream = self.grad[0];
                                   for (std::size_t i = 0; i < dst.size(); ++i) {
                                       dst[i] += upstream * (*grad)[i];
                                   }
                               });
}

#else

Tensor<double> extended_distill_loss(const Tensor<double> &, std::span<const float>, std::span<const std::size_t>,
                                     const ExtendedDistillSpec &, Reduction) {
    fail("unsupported", "binary128 arithmetic is not available with this compiler");
}

#endif

} // namespace lstmkd
