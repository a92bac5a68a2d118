#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lstmkd/distillpipe/train.hpp"
#include "lstmkd/models/model.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

struct Utterance {
    std::string id;
    std::vector<float> samples;
    std::vector<std::size_t> labels; // aligned to encoder frames
};

struct Dataset {
    std::vector<Utterance> items;
    std::size_t num_clusters = 0;
};

/// Pairs waveforms with their label sequences by utterance id and truncates
/// each sequence to the encoder frame count of `config`. Utterances without
/// labels, or too short for the encoder, are an error.
Dataset make_dataset(const std::vector<Waveform> &waves, const std::vector<PseudoLabelSequence> &labels,
                     const ModelConfig &config);

/// The last ceil(fraction * N) utterances form the held-out split.
std::pair<Dataset, Dataset> split_heldout(const Dataset &data, double fraction);

/// Epoch-wise shuffled batches; the order is a pure function of (N, batch, seed).
std::vector<std::vector<std::size_t>> batch_schedule(std::size_t num_items, std::size_t batch_size,
                                                     std::size_t steps, std::uint64_t seed);

/// Per-step callback target; pass nullptr to skip logging.
using MetricsSink = MetricsLog *;

/// Masked cluster prediction: span-masked encoder frames, cross-entropy over the
/// masked frames only. With total_steps = 0 the model is returned as initialised.
Model<float> train_teacher(const Dataset &train, const ModelConfig &config, const TrainConfig &train_config,
                           MetricsSink log = nullptr);

struct MaskedAccuracy {
    std::size_t masked = 0;
    std::size_t correct = 0;
    double accuracy() const { return masked == 0 ? 0.0 : double(correct) / double(masked); }
};

/// Argmax accuracy at masked frames against the pseudo-labels, one utterance
/// per forward pass with masks drawn from `seed`.
MaskedAccuracy masked_accuracy(const Model<float> &model, const Dataset &data, std::size_t mask_span,
                               double mask_prob, std::uint64_t seed);

/// Unmasked per-utterance logits, [T x C] row-major.
std::vector<float> utterance_logits(const Model<float> &model, const std::vector<float> &samples);

/// Teacher logits keyed by utterance id. File layout (little endian):
///   "LKDLOGIT" | u32 version (=1) | u32 num_clusters | u32 hash_length | hash
///   | u32 count | count x { u32 id_length | id | u32 T | T*C x float32 }
struct LogitRecord {
    std::string id;
    std::size_t frames = 0;
    std::vector<float> logits; // [frames x num_clusters]
};

struct LogitCache {
    std::string teacher_hash;
    std::size_t num_clusters = 0;
    std::vector<LogitRecord> records;

    const LogitRecord &find(const std::string &id) const;
};

void write_logit_cache(const std::string &path, const LogitCache &cache);
LogitCache read_logit_cache(const std::string &path);

/// Hex SHA-256 of a file's bytes (checkpoints, caches, manifests).
std::string file_sha256(const std::string &path);
std::string sha256_hex(const std::string &bytes);

LogitCache export_teacher_logits(const Model<float> &teacher, const Dataset &data, const std::string &teacher_hash);

/// CE against pseudo-labels plus KD or DKD against the cached teacher logits,
/// combined with ce_weight / distill_weight. Student input is unmasked
/// unless mask_student_input is set (span masks as in teacher training).
///
/// S = double is the verification mode: the distillation term is evaluated in
/// binary128 (extended_distill_loss), so a KD run and a DKD run with
/// dynamic_beta follow bit-identical trajectories.
template <typename S>
Model<S> distill_student(const Dataset &train, const LogitCache &cache, const ModelConfig &student_config,
                         const TrainConfig &train_config, MetricsSink log = nullptr,
                         const std::string &expected_teacher_hash = "");

/// Fraction of frames where student and cached teacher argmax agree.
double teacher_agreement(const Model<float> &student, const Dataset &data, const LogitCache &cache);

struct ProbeConfig {
    std::size_t steps = 300;
    double lr = 1e-2;
    std::size_t batch_frames = 256;
    std::uint64_t seed = 0;
};

struct ProbeReport {
    std::size_t train_frames = 0;
    std::size_t heldout_frames = 0;
    double heldout_accuracy = 0.0;
    std::vector<double> layer_weights; // softmax-normalised featurizer weights
};

/// Per-utterance frozen features: one [T x width] row-major block per layer.
struct LayerFeatures {
    std::size_t width = 0;
    std::vector<std::vector<float>> layers; // each T*width
    std::vector<std::size_t> labels;        // T
};

/// Trains only the weighted-sum weights and a linear classifier on frozen
/// features. With `direct` the featurizer is bypassed and layer 0 is probed.
ProbeReport probe_features(const std::vector<LayerFeatures> &train, const std::vector<LayerFeatures> &heldout,
                           std::size_t num_clusters, const ProbeConfig &config, bool direct = false);

std::vector<LayerFeatures> extract_features(const Model<float> &model, const Dataset &data);

ProbeReport probe_eval(const Model<float> &model, const Dataset &train, const Dataset &heldout,
                       const ProbeConfig &config);

} // namespace lstmkd
