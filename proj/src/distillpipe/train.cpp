#include "lstmkd/distillpipe/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lstmkd/error.hpp"

namespace lstmkd {

std::string to_string(DistillMode mode) { return mode == DistillMode::Kd ? "kd" : "dkd"; }

DistillMode distill_mode_from_string(const std::string &name) {
    if (name == "kd") {
        return DistillMode::Kd;
    }
    if (name == "dkd") {
        return DistillMode::Dkd;
    }
    fail("invalid_config", "unknown distillation mode '" + name + "' (expected kd or dkd)");
}

void TrainConfig::validate() const {
    require(warmup_steps <= total_steps, "invalid_config", "warmup_steps must not exceed total_steps");
    require(peak_lr > 0.0 && std::isfinite(peak_lr), "invalid_config", "peak_lr must be positive");
    require(batch_size >= 1, "invalid_config", "batch_size must be at least 1");
    require(tau > 0.0, "invalid_config", "tau must be positive");
    require(alpha >= 0.0 && beta >= 0.0, "invalid_config", "alpha and beta must be non-negative");
    require(ce_weight >= 0.0 && distill_weight >= 0.0, "invalid_config", "loss weights must be non-negative");
    require(mask_span >= 1, "invalid_config", "mask_span must be at least 1");
    require(mask_prob >= 0.0 && mask_prob <= 1.0, "invalid_config", "mask_prob must lie in [0, 1]");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "invalid_config",
            "Adam betas must lie in [0, 1)");
    require(adam_eps > 0.0, "invalid_config", "adam_eps must be positive");
    require(grad_clip >= 0.0, "invalid_config", "grad_clip must be non-negative");
}

nlohmann::json to_json(const TrainConfig &c) {
    return {{"total_steps", c.total_steps},
            {"warmup_steps", c.warmup_steps},
            {"peak_lr", c.peak_lr},
            {"batch_size", c.batch_size},
            {"tau", c.tau},
            {"mode", to_string(c.mode)},
            {"alpha", c.alpha},
            {"beta", c.beta},
            {"dynamic_beta", c.dynamic_beta},
            {"ce_weight", c.ce_weight},
            {"distill_weight", c.distill_weight},
            {"mask_span", c.mask_span},
            {"mask_prob", c.mask_prob},
            {"mask_student_input", c.mask_student_input},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_eps", c.adam_eps},
            {"grad_clip", c.grad_clip},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json &j, const TrainConfig &defaults) {
    require(j.is_object(), "invalid_config", "training config must be a JSON object");
    TrainConfig c = defaults;
    try {
        for (const auto &[key, value] : j.items()) {
            if (key == "total_steps") c.total_steps = value.get<std::size_t>();
            else if (key == "warmup_steps") c.warmup_steps = value.get<std::size_t>();
            else if (key == "peak_lr") c.peak_lr = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
            else if (key == "tau") c.tau = value.get<double>();
            else if (key == "mode") c.mode = distill_mode_from_string(value.get<std::string>());
            else if (key == "alpha") c.alpha = value.get<double>();
            else if (key == "beta") c.beta = value.get<double>();
            else if (key == "dynamic_beta") c.dynamic_beta = value.get<bool>();
            else if (key == "ce_weight") c.ce_weight = value.get<double>();
            else if (key == "distill_weight") c.distill_weight = value.get<double>();
            else if (key == "mask_span") c.mask_span = value.get<std::size_t>();
            else if (key == "mask_prob") c.mask_prob = value.get<double>();
            else if (key == "mask_student_input") c.mask_student_input = value.get<bool>();
            else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
            else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
            else if (key == "adam_eps") c.adam_eps = value.get<double>();
            else if (key == "grad_clip") c.grad_clip = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else fail("invalid_config", "unknown training key '" + key + "'");
        }
    } catch (const nlohmann::json::exception &e) {
        fail("invalid_config", std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

double lr_schedule(std::size_t step, const TrainConfig &config) {
    require(step <= config.total_steps, "invalid_argument",
            "lr_schedule: step " + std::to_string(step) + " is outside [0, " + std::to_string(config.total_steps) +
                "]");
    const std::size_t warm = config.warmup_steps, total = config.total_steps;
    if (warm > 0 && step <= warm) {
        return config.peak_lr * (double(step) / double(warm));
    }
    return config.peak_lr * (double(total - step) / double(total - warm));
}

template <typename S>
Adam<S>::Adam(const std::vector<NamedParameter<S>> &params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto &p : params) {
        m_.emplace_back(p.value.numel(), 0.0);
        v_.emplace_back(p.value.numel(), 0.0);
    }
}

template <typename S>
double Adam<S>::step(std::vector<NamedParameter<S>> &params, double lr, double clip) {
    require(params.size() == m_.size(), "shape_mismatch", "adam: parameter list changed");
    double sq = 0.0;
    for (const auto &p : params) {
        for (S g : p.value.grad()) {
            sq += double(g) * double(g);
        }
    }
    const double norm = std::sqrt(sq);
    require(std::isfinite(norm), "diverged", "adam: non-finite gradient norm");
    const double factor = clip > 0.0 && norm > clip ? clip / norm : 1.0;

    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto &p = params[i].value;
        if (!p.has_grad()) {
            continue;
        }
        auto g = p.grad();
        auto w = p.mutable_data();
        auto &m = m_[i];
        auto &v = v_[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double gj = double(g[j]) * factor;
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
            w[j] = static_cast<S>(double(w[j]) - lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_));
        }
    }
    return norm;
}

template class Adam<float>;
template class Adam<double>;

MetricsLog::MetricsLog(const std::string &path) : path_(path) {
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "io_error", "cannot write metrics log '" + path + "'");
    f << "step,lr,ce,kd_or_dkd,total,agreement\n";
}

void MetricsLog::append(const StepMetrics &m) {
    rows_.push_back(m);
    if (path_.empty()) {
        return;
    }
    char line[256];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.step, m.lr, m.ce, m.kd_or_dkd, m.total,
                  m.agreement);
    std::ofstream f(path_, std::ios::app);
    f << line;
    require(f.good(), "io_error", "failed appending to '" + path_ + "'");
}

std::vector<StepMetrics> read_metrics_csv(const std::string &path) {
    std::ifstream f(path);
    require(f.good(), "missing_input", "no metrics log at '" + path + "'");
    std::string line;
    std::getline(f, line);
    require(line == "step,lr,ce,kd_or_dkd,total,agreement", "malformed_metrics", "unexpected metrics header");
    std::vector<StepMetrics> out;
    while (std::getline(f, line)) {
        StepMetrics m;
        char extra = 0;
        const int n = std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf%c", &m.step, &m.lr, &m.ce, &m.kd_or_dkd,
                                  &m.total, &m.agreement, &extra);
        require(n == 6, "malformed_metrics", "bad metrics row: " + line);
        out.push_back(m);
    }
    return out;
}

std::vector<double> smooth(const std::vector<double> &values, std::size_t window) {
    const double a = 2.0 / (double(window) + 1.0);
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        out[i] = i == 0 ? values[0] : a * values[i] + (1.0 - a) * out[i - 1];
    }
    return out;
}

} // namespace lstmkd
