#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lstmkd/numerics/tensor.hpp"

namespace lstmkd {

/// Weights of the decoupled objective alpha * TCKD + beta * NCKD.
struct DkdWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double tau = 1.0;

    void validate() const;
};

/// Per-frame cluster labels z_t and the masked index set M.
struct FrameTargets {
    std::vector<std::size_t> labels;
    std::vector<std::size_t> mask_indices; // sorted, unique, each < labels.size()

    void validate(std::size_t num_classes) const;
};

enum class Reduction { Sum, Mean };

/// What to do when 1 - p_target falls below the probability floor.
enum class DegeneratePolicy {
    Throw, // Error("degenerate_target")
    Floor, // clamp log(1 - p_target) at log(kProbabilityFloor)
};

struct DkdComponents {
    double tckd = 0.0;
    double nckd = 0.0;
    double teacher_target_prob = 0.0;
};

// ---- single-sample evaluation (float64) ------------------------------------

/// KL(softmax(teacher / tau) || softmax(student / tau)) * tau^2.
double kd_loss(std::span<const double> teacher_logits, std::span<const double> student_logits, double tau);

/// TCKD and NCKD terms (both already multiplied by tau^2) and p^T_target.
DkdComponents dkd_components(std::span<const double> teacher_logits, std::span<const double> student_logits,
                             std::size_t target, double tau);

double dkd_loss(std::span<const double> teacher_logits, std::span<const double> student_logits,
                std::size_t target, const DkdWeights &weights);

/// -sum_{t in M} ln softmax(frame_logits[t])[labels[t]] over a row-major
/// [T x C] matrix. Returns 0 for an empty mask.
double masked_cluster_loss(std::span<const double> frame_logits, std::size_t num_classes,
                           const FrameTargets &targets, Reduction reduction = Reduction::Sum);

/// ce_weight * ce + distill_weight * distill.
double combined_objective(double ce, double distill, double ce_weight = 1.0, double distill_weight = 1.0);

// ---- batched, differentiable evaluation ------------------------------------

/// Teacher-side quantities for a batch of frames, computed once in float64
/// from teacher logits. Rows with a target also carry the binary (target vs.
/// rest) split and the renormalised non-target distribution.
struct TeacherTargets {
    std::size_t rows = 0;
    std::size_t classes = 0;
    double tau = 1.0;
    std::vector<double> log_probs;          // [rows x classes]
    std::vector<double> probs;              // [rows x classes]
    std::vector<std::size_t> targets;       // empty when built without targets
    std::vector<double> target_prob;        // p^T_target per row
    std::vector<double> log_target;         // ln p^T_target
    std::vector<double> log_rest;           // ln (1 - p^T_target)
    std::vector<double> nontarget_log_probs; // ln p-hat^T, target column set to 0
    std::vector<double> nontarget_probs;    // p-hat^T, target column set to 0
};

TeacherTargets make_teacher_targets(std::span<const double> teacher_logits, std::size_t rows, std::size_t classes,
                                    double tau, std::span<const std::size_t> targets = {},
                                    DegeneratePolicy policy = DegeneratePolicy::Throw);

template <typename S>
Tensor<S> kd_loss(const Tensor<S> &student_logits, const TeacherTargets &teacher, Reduction reduction);

template <typename S>
struct DkdTerms {
    Tensor<S> tckd; // scalar, tau^2 included
    Tensor<S> nckd; // scalar, tau^2 included
};

/// When `per_row_beta` is non-empty the NCKD term of row r is weighted by
/// per_row_beta[r] inside the sum (used to reproduce vanilla KD with
/// beta = 1 - p^T_target); the returned nckd then already carries that weight.
template <typename S>
DkdTerms<S> dkd_terms(const Tensor<S> &student_logits, const TeacherTargets &teacher, Reduction reduction,
                      DegeneratePolicy policy = DegeneratePolicy::Throw, std::span<const double> per_row_beta = {});

template <typename S>
Tensor<S> dkd_loss(const Tensor<S> &student_logits, const TeacherTargets &teacher, const DkdWeights &weights,
                   Reduction reduction, DegeneratePolicy policy = DegeneratePolicy::Throw);

template <typename S>
struct MaskedLoss {
    Tensor<S> value;              // scalar
    std::size_t masked_count = 0; // 0 flags an empty mask (value is then 0)
};

template <typename S>
MaskedLoss<S> masked_cluster_loss(const Tensor<S> &frame_logits, const FrameTargets &targets, Reduction reduction);

/// Distillation term evaluated in binary128 and rounded to float64 once per
/// value. Two algebraically equal objectives (vanilla KD, and DKD with
/// beta = 1 - p^T_target) then agree to the last bit with overwhelming
/// probability, which lets whole training trajectories be compared exactly.
struct ExtendedDistillSpec {
    enum class Mode { Kd, Dkd, DkdDynamicBeta } mode = Mode::Kd;
    double tau = 1.0;
    double alpha = 1.0;
    double beta = 1.0;
};

bool extended_precision_available();

Tensor<double> extended_distill_loss(const Tensor<double> &student_logits, std::span<const float> teacher_logits,
                                     std::span<const std::size_t> targets, const ExtendedDistillSpec &spec,
                                     Reduction reduction);

} // namespace lstmkd
