#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lstmkd/models/model.hpp"

namespace lstmkd {

/// Analytic multiply-accumulate count of one unmasked forward pass over a
/// single utterance of `input_samples` samples. Only multiply-accumulate pairs
/// of affine maps, convolutions, recurrences and attention products count;
/// nonlinearities, softmax and normalisation do not.
///   conv: T_out k C_in C_out          LSTM (per direction): T 4 (in h + h^2)
///   attention: 4 T D^2 + 2 T^2 D      FFN: 2 T D ffn
///   linear head: T W C                cosine head: T W D' + T D' C
/// plus the transformer's input projection (T C_enc D) and positional
/// convolution (T k D^2).
std::uint64_t count_macs(const ModelConfig &config, std::size_t input_samples);

/// The same quantity measured by tallying the kernels during a real forward.
std::uint64_t tally_macs(const Model<float> &model, const std::vector<float> &samples);

/// High-water mark of tracked tensor bytes while `run` executes, relative to
/// the live bytes when it starts. Throws "not_instrumented" if tracking is off.
std::size_t measure_peak_memory(const std::function<void()> &run);

struct TimingStats {
    double mean_s = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
    std::size_t runs = 0;
};

/// One untimed warm-up call, then `repeats` timed calls.
TimingStats measure_time(const std::function<void()> &run, std::size_t repeats = 10);

struct ProfileRecord {
    std::string model;
    double seconds = 0.0;
    std::size_t peak_bytes = 0;
    std::uint64_t macs = 0;
    double mean_time_s = 0.0;
    double min_time_s = 0.0;
    double max_time_s = 0.0;
    std::size_t runs = 0;

    bool operator==(const ProfileRecord &) const = default;
};

/// A deterministic pseudo-random waveform of the given duration at 16 kHz.
std::vector<float> profile_waveform(double seconds, std::uint64_t seed = 0);

/// Cross product of models and lengths, sorted by (model name, seconds). Each
/// record is appended to `csv_path` (if non-empty) as soon as it is measured,
/// so a failure leaves the finished rows on disk. Inference runs without the
/// gradient tape.
std::vector<ProfileRecord> sweep_profile(const std::vector<ModelConfig> &models,
                                         const std::vector<double> &lengths_seconds, std::size_t repeats,
                                         const std::string &csv_path = "");

inline constexpr const char *kProfileCsvHeader = "model,seconds,peak_bytes,macs,mean_time_s,min_time_s,max_time_s,runs";

void write_profile_csv(const std::string &path, const std::vector<ProfileRecord> &records);
std::vector<ProfileRecord> read_profile_csv(const std::string &path);

enum class ProfileMetric { PeakMemory, Macs, Time };

std::string to_string(ProfileMetric metric);

/// Self-contained SVG line chart (viewBox 0 0 800 400): one polyline per model
/// over utterance length, axis labels and legend as text.
std::string render_profile_svg(const std::vector<ProfileRecord> &records, ProfileMetric metric);

/// Writes <prefix>_memory.svg, <prefix>_macs.svg and <prefix>_time.svg.
std::vector<std::string> write_profile_svgs(const std::string &prefix, const std::vector<ProfileRecord> &records);

/// Least-squares line through (x, y) and its coefficient of determination.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

LinearFit fit_line(const std::vector<double> &x, const std::vector<double> &y);

} // namespace lstmkd
