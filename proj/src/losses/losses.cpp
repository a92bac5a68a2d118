#include "lstmkd/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lstmkd/error.hpp"
#include "lstmkd/numerics/distribution.hpp"
#include "lstmkd/numerics/ops.hpp"

namespace lstmkd {

namespace {

// Same expression as the log1mexp op so teacher- and student-side values
// computed from identical logits agree bit for bit.
double log1mexp_scalar(double x) {
    return x > -std::numbers::ln2 ? std::log(-std::expm1(x)) : std::log1p(-std::exp(x));
}

void check_pair(std::span<const double> teacher, std::span<const double> student) {
    require(teacher.size() == student.size(), "shape_mismatch",
            "teacher and student logits differ in length (" + std::to_string(teacher.size()) + " vs " +
                std::to_string(student.size()) + ")");
    require(teacher.size() >= 2, "invalid_argument", "at least two classes are required");
}

template <typename S>
Tensor<S> constant(const Shape &shape, const std::vector<double> &values) {
    std::vector<S> converted(values.begin(), values.end());
    return Tensor<S>::from(shape, std::span<const S>(converted), false);
}

template <typename S>
Tensor<S> reduce(const Tensor<S> &total, Reduction reduction, std::size_t count) {
    if (reduction == Reduction::Mean && count > 0) {
        return scale(total, S(1.0 / static_cast<double>(count)));
    }
    return total;
}

template <typename S>
Tensor<double> to_double(const Tensor<S> &t) {
    std::vector<double> values(t.data().begin(), t.data().end());
    return Tensor<double>::from(t.shape(), std::span<const double>(values), false);
}

} // namespace

void DkdWeights::validate() const {
    require(tau > 0.0 && std::isfinite(tau), "invalid_argument", "DKD temperature must be positive");
    require(alpha >= 0.0 && beta >= 0.0, "invalid_argument", "DKD weights must be non-negative");
}

void FrameTargets::validate(std::size_t num_classes) const {
    for (std::size_t z : labels) {
        require(z < num_classes, "label_out_of_range",
                "label " + std::to_string(z) + " is not below C = " + std::to_string(num_classes));
    }
    for (std::size_t i = 0; i < mask_indices.size(); ++i) {
        require(mask_indices[i] < labels.size(), "index_out_of_range", "mask index beyond sequence length");
        require(i == 0 || mask_indices[i] > mask_indices[i - 1], "invalid_argument",
                "mask indices must be sorted and unique");
    }
}

TeacherTargets make_teacher_targets(std::span<const double> teacher_logits, std::size_t rows, std::size_t classes,
                                    double tau, std::span<const std::size_t> targets, DegeneratePolicy policy) {
    require(classes >= 2, "invalid_argument", "at least two classes are required");
    require(teacher_logits.size() == rows * classes, "shape_mismatch", "teacher logits do not match rows x classes");
    require(targets.empty() || targets.size() == rows, "shape_mismatch", "one target per row required");
    TeacherTargets out;
    out.rows = rows;
    out.classes = classes;
    out.tau = tau;
    out.log_probs.resize(rows * classes);
    out.probs.resize(rows * classes);
    for (std::size_t r = 0; r < rows; ++r) {
        auto lp = log_softmax_t(teacher_logits.subspan(r * classes, classes), tau);
        for (std::size_t c = 0; c < classes; ++c) {
            out.log_probs[r * classes + c] = lp[c];
            out.probs[r * classes + c] = std::exp(lp[c]);
        }
    }
    if (targets.empty()) {
        return out;
    }
    out.targets.assign(targets.begin(), targets.end());
    out.target_prob.resize(rows);
    out.log_target.resize(rows);
    out.log_rest.resize(rows);
    out.nontarget_log_probs.assign(rows * classes, 0.0);
    out.nontarget_probs.assign(rows * classes, 0.0);
    const double log_floor = std::log(kProbabilityFloor);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t g = targets[r];
        require(g < classes, "label_out_of_range", "target class " + std::to_string(g) + " out of range");
        const double lt = out.log_probs[r * classes + g];
        double lrest = lt < 0.0 ? log1mexp_scalar(lt) : -INFINITY;
        if (!(lrest >= log_floor)) {
            require(policy == DegeneratePolicy::Floor, "degenerate_target",
                    "teacher assigns (1 - p_target) below the probability floor");
            lrest = log_floor;
        }
        out.target_prob[r] = std::exp(lt);
        out.log_target[r] = lt;
        out.log_rest[r] = lrest;
        for (std::size_t c = 0; c < classes; ++c) {
            if (c == g) {
                continue;
            }
            const double v = out.log_probs[r * classes + c] - lrest;
            out.nontarget_log_probs[r * classes + c] = v;
            out.nontarget_probs[r * classes + c] = std::exp(v);
        }
    }
    return out;
}

template <typename S>
Tensor<S> kd_loss(const Tensor<S> &student_logits, const TeacherTargets &teacher, Reduction reduction) {
    require(student_logits.rows() == teacher.rows && student_logits.cols() == teacher.classes, "shape_mismatch",
            "kd_loss: student logits " + shape_string(student_logits.shape()) + " do not match teacher");
    const Shape shape{teacher.rows, teacher.classes};
    auto log_student = log_softmax_rows(reshape(student_logits, shape), S(teacher.tau));
    auto gap = sub(constant<S>(shape, teacher.log_probs), log_student);
    auto total = scale(sum(mul(constant<S>(shape, teacher.probs), gap)), S(teacher.tau * teacher.tau));
    return reduce(total, reduction, teacher.rows);
}

template <typename S>
DkdTerms<S> dkd_terms(const Tensor<S> &student_logits, const TeacherTargets &teacher, Reduction reduction,
                      DegeneratePolicy policy, std::span<const double> per_row_beta) {
    const std::size_t rows = teacher.rows, classes = teacher.classes;
    require(!teacher.targets.empty(), "invalid_argument", "dkd: teacher targets were built without target classes");
    require(student_logits.rows() == rows && student_logits.cols() == classes, "shape_mismatch",
            "dkd: student logits " + shape_string(student_logits.shape()) + " do not match teacher");
    require(per_row_beta.empty() || per_row_beta.size() == rows, "shape_mismatch", "dkd: one beta per row required");
    const Shape shape{rows, classes};
    const S tau2 = S(teacher.tau * teacher.tau);

    auto log_student = log_softmax_rows(reshape(student_logits, shape), S(teacher.tau));
    auto log_target = gather_columns(log_student, teacher.targets);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!(log_target.data()[r] < S(0))) {
            require(policy == DegeneratePolicy::Floor, "degenerate_target",
                    "student assigns (1 - p_target) below the probability floor");
        }
    }
    // ln p_target <= -floor keeps log1mexp finite when the student saturates.
    auto bounded = scale(clamp_min(scale(log_target, S(-1)), S(kProbabilityFloor)), S(-1));
    auto log_rest = log1mexp(bounded);
    if (policy == DegeneratePolicy::Floor) {
        log_rest = clamp_min(log_rest, S(std::log(kProbabilityFloor)));
    } else {
        for (std::size_t r = 0; r < rows; ++r) {
            require(log_rest.data()[r] >= S(std::log(kProbabilityFloor)), "degenerate_target",
                    "student assigns (1 - p_target) below the probability floor");
        }
    }

    std::vector<double> binary_probs(rows * 2), binary_logs(rows * 2);
    for (std::size_t r = 0; r < rows; ++r) {
        binary_probs[2 * r] = teacher.target_prob[r];
        binary_probs[2 * r + 1] = std::exp(teacher.log_rest[r]);
        binary_logs[2 * r] = teacher.log_target[r];
        binary_logs[2 * r + 1] = teacher.log_rest[r];
    }
    auto binary_student = concat_columns(log_target, log_rest);
    auto tckd_gap = sub(constant<S>({rows, 2}, binary_logs), binary_student);
    auto tckd = scale(sum(mul(constant<S>({rows, 2}, binary_probs), tckd_gap)), tau2);

    Tensor<S> nckd;
    if (classes == 2) {
        // A single non-target class renormalises to [1] on both sides.
        nckd = Tensor<S>::scalar(S(0));
    } else {
        std::vector<double> weights = teacher.nontarget_probs;
        if (!per_row_beta.empty()) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < classes; ++c) {
                    weights[r * classes + c] *= per_row_beta[r];
                }
            }
        }
        auto nontarget_student = sub_column(log_student, log_rest);
        auto gap = sub(constant<S>(shape, teacher.nontarget_log_probs), nontarget_student);
        nckd = scale(sum(mul(constant<S>(shape, weights), gap)), tau2);
    }
    return {reduce(tckd, reduction, rows), reduce(nckd, reduction, rows)};
}

template <typename S>
Tensor<S> dkd_loss(const Tensor<S> &student_logits, const TeacherTargets &teacher, const DkdWeights &weights,
                   Reduction reduction, DegeneratePolicy policy) {
    weights.validate();
    auto terms = dkd_terms(student_logits, teacher, reduction, policy);
    return add(scale(terms.tckd, S(weights.alpha)), scale(terms.nckd, S(weights.beta)));
}

template <typename S>
MaskedLoss<S> masked_cluster_loss(const Tensor<S> &frame_logits, const FrameTargets &targets, Reduction reduction) {
    const std::size_t classes = frame_logits.cols();
    require(classes >= 2, "invalid_argument", "masked_cluster_loss: at least two classes are required");
    require(targets.labels.size() == frame_logits.rows(), "shape_mismatch",
            "masked_cluster_loss: " + std::to_string(targets.labels.size()) + " labels for " +
                std::to_string(frame_logits.rows()) + " frames");
    targets.validate(classes);
    if (targets.mask_indices.empty()) {
        return {Tensor<S>::scalar(S(0)), 0};
    }
    std::vector<std::size_t> picked;
    picked.reserve(targets.mask_indices.size());
    for (std::size_t t : targets.mask_indices) {
        picked.push_back(targets.labels[t]);
    }
    auto log_probs = log_softmax_rows(select_rows(frame_logits, targets.mask_indices), S(1));
    auto total = scale(sum(gather_columns(log_probs, picked)), S(-1));
    return {reduce(total, reduction, picked.size()), picked.size()};
}

double kd_loss(std::span<const double> teacher_logits, std::span<const double> student_logits, double tau) {
    check_pair(teacher_logits, student_logits);
    require(tau > 0.0, "invalid_argument", "kd_loss: temperature must be positive");
    const std::size_t c = teacher_logits.size();
    auto teacher = make_teacher_targets(teacher_logits, 1, c, tau);
    NoGradGuard guard;
    auto student = Tensor<double>::from({1, c}, student_logits);
    return kd_loss(student, teacher, Reduction::Sum).item();
}

DkdComponents dkd_components(std::span<const double> teacher_logits, std::span<const double> student_logits,
                             std::size_t target, double tau) {
    check_pair(teacher_logits, student_logits);
    require(tau > 0.0, "invalid_argument", "dkd_components: temperature must be positive");
    const std::size_t c = teacher_logits.size();
    require(target < c, "label_out_of_range", "dkd_components: target class out of range");
    const std::size_t targets[] = {target};
    auto teacher = make_teacher_targets(teacher_logits, 1, c, tau, targets);
    NoGradGuard guard;
    auto student = Tensor<double>::from({1, c}, student_logits);
    auto terms = dkd_terms(student, teacher, Reduction::Sum);
    return {terms.tckd.item(), terms.nckd.item(), teacher.target_prob[0]};
}

double dkd_loss(std::span<const double> teacher_logits, std::span<const double> student_logits, std::size_t target,
                const DkdWeights &weights) {
    weights.validate();
    auto parts = dkd_components(teacher_logits, student_logits, target, weights.tau);
    return weights.alpha * parts.tckd + weights.beta * parts.nckd;
}

double masked_cluster_loss(std::span<const double> frame_logits, std::size_t num_classes, const FrameTargets &targets,
                           Reduction reduction) {
    require(num_classes >= 2 && frame_logits.size() % num_classes == 0, "shape_mismatch",
            "masked_cluster_loss: logits are not a [T x C] matrix");
    const std::size_t rows = frame_logits.size() / num_classes;
    NoGradGuard guard;
    auto logits = Tensor<double>::from({rows, num_classes}, frame_logits);
    return masked_cluster_loss(logits, targets, reduction).value.item();
}

double combined_objective(double ce, double distill, double ce_weight, double distill_weight) {
    require(std::isfinite(ce) && std::isfinite(distill) && std::isfinite(ce_weight) && std::isfinite(distill_weight),
            "non_finite", "combined_objective: non-finite input");
    require(ce_weight >= 0.0 && distill_weight >= 0.0, "invalid_argument",
            "combined_objective: weights must be non-negative");
    return ce_weight * ce + distill_weight * distill;
}

template Tensor<float> kd_loss(const Tensor<float> &, const TeacherTargets &, Reduction);
template Tensor<double> kd_loss(const Tensor<double> &, const TeacherTargets &, Reduction);
template DkdTerms<float> dkd_terms(const Tensor<float> &, const TeacherTargets &, Reduction, DegeneratePolicy,
                                   std::span<const double>);
template DkdTerms<double> dkd_terms(const Tensor<double> &, const TeacherTargets &, Reduction, DegeneratePolicy,
                                    std::span<const double>);
template Tensor<float> dkd_loss(const Tensor<float> &, const TeacherTargets &, const DkdWeights &, Reduction,
                                DegeneratePolicy);
template Tensor<double> dkd_loss(const Tensor<double> &, const TeacherTargets &, const DkdWeights &, Reduction,
                                 DegeneratePolicy);
template MaskedLoss<float> masked_cluster_loss(const Tensor<float> &, const FrameTargets &, Reduction);
template MaskedLoss<double> masked_cluster_loss(const Tensor<double> &, const FrameTargets &, Reduction);

} // namespace lstmkd
