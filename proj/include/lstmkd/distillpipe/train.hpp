#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lstmkd/models/model.hpp"

namespace lstmkd {

enum class DistillMode { Kd, Dkd };

std::string to_string(DistillMode mode);
DistillMode distill_mode_from_string(const std::string &name);

struct TrainConfig {
    std::size_t total_steps = 5000;
    std::size_t warmup_steps = 350;
    double peak_lr = 2e-4;
    std::size_t batch_size = 8;

    double tau = 1.0;
    DistillMode mode = DistillMode::Kd;
    double alpha = 1.0;
    double beta = 1.0;
    bool dynamic_beta = false; // per-frame beta = 1 - p^T_target (reproduces vanilla KD)
    double ce_weight = 1.0;
    double distill_weight = 1.0;

    // span masking: always on for masked cluster prediction (teacher training);
    // for distillation only when mask_student_input is set
    std::size_t mask_span = 10;
    double mask_prob = 0.08;
    bool mask_student_input = false;

    // Adam moments and global-norm gradient clipping (0 disables clipping)
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-6;
    double grad_clip = 0.0;

    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig &config);
/// Missing keys keep their defaults; unknown keys are an "invalid_config" error.
TrainConfig train_config_from_json(const nlohmann::json &j, const TrainConfig &defaults = {});

/// Linear warm-up from 0 to peak_lr over warmup_steps, then linear decay to 0
/// at total_steps. Update k (1-based) uses lr_schedule(k).
double lr_schedule(std::size_t step, const TrainConfig &config);

/// Adam with bias correction. Moments live alongside the model's parameter
/// registry; parameters without a gradient are skipped for that step.
template <typename S>
class Adam {
public:
    Adam(const std::vector<NamedParameter<S>> &params, double beta1, double beta2, double eps);

    /// Applies one update with learning rate lr; when clip > 0 the gradients are
    /// first rescaled so their global L2 norm is at most clip. Returns the
    /// pre-clipping gradient norm.
    double step(std::vector<NamedParameter<S>> &params, double lr, double clip = 0.0);

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct StepMetrics {
    std::size_t step = 0;
    double lr = 0.0;
    double ce = 0.0;
    double kd_or_dkd = 0.0;
    double total = 0.0;
    double agreement = 0.0; // teacher: masked-frame accuracy; student: argmax agreement with the teacher
};

/// Append-only CSV with header `step,lr,ce,kd_or_dkd,total,agreement`; values
/// are written with 17 significant digits so a reread reproduces them exactly.
class MetricsLog {
public:
    MetricsLog() = default;
    explicit MetricsLog(const std::string &path);

    void append(const StepMetrics &m);
    const std::vector<StepMetrics> &rows() const { return rows_; }

private:
    std::string path_;
    std::vector<StepMetrics> rows_;
};

std::vector<StepMetrics> read_metrics_csv(const std::string &path);

/// Exponential moving average with smoothing factor 2 / (window + 1).
std::vector<double> smooth(const std::vector<double> &values, std::size_t window = 100);

} // namespace lstmkd
