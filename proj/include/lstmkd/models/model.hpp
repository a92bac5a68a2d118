#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lstmkd/models/config.hpp"
#include "lstmkd/models/layers.hpp"

namespace lstmkd {

class Rng;

template <typename S>
struct NamedParameter {
    std::string name;
    Tensor<S> value;
};

template <typename S>
struct PackedWaveforms {
    Tensor<S> samples; // [sum N x 1]
    Segments segments;
};

template <typename S>
PackedWaveforms<S> pack_waveforms(const std::vector<std::span<const float>> &waveforms);

template <typename S>
struct ModelOutput {
    Tensor<S> logits;              // [sum T x C]
    std::vector<Tensor<S>> layers; // one [sum T x layer_width] entry per sequence layer
    Segments segments;             // frame segments, one per utterance
    std::vector<std::size_t> masked; // global frame rows replaced by the mask embedding
};

/// Encoder + sequence model + prediction head with a flat, ordered parameter
/// registry. Parameters are drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// except conv encoder weights which use the He bound sqrt(6/fan_in)
/// (LayerNorm gains 1, shifts 0) and rounded to float32 before being stored, so
/// float and double instances built from one seed hold identical values.
template <typename S>
class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig &config() const { return config_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<NamedParameter<S>> &parameters() { return params_; }
    const std::vector<NamedParameter<S>> &parameters() const { return params_; }
    std::size_t parameter_count() const;
    const Tensor<S> &parameter(const std::string &name) const;

    /// Full forward pass. With `mask` set, span masking replaces frames at the
    /// input of the first sequence layer.
    ModelOutput<S> forward(const PackedWaveforms<S> &input, const MaskSpec *mask = nullptr) const;

    void zero_grad();

    /// Copies values between precisions (or from a checkpoint) by name order.
    void assign(const std::vector<std::vector<float>> &values);
    std::vector<std::vector<float>> values() const;

private:
    Tensor<S> make(Rng &rng, const std::string &name, const Shape &shape, double bound, double fill = 0.0);

    ModelConfig config_;
    std::uint64_t seed_;
    std::vector<NamedParameter<S>> params_;

    std::vector<ConvLayerParams<S>> conv_;
    Tensor<S> feature_gamma_, feature_beta_;
    Tensor<S> proj_w_, proj_b_;
    Tensor<S> mask_embedding_;
    Tensor<S> pos_w_, pos_b_;
    std::vector<TransformerLayerParams<S>> transformer_;
    Tensor<S> final_gamma_, final_beta_;
    std::vector<BiLstmLayerParams<S>> lstm_;
    CosineHeadParams<S> cosine_;
    LinearHeadParams<S> linear_;
};

/// Checkpoint container: a text header
///
///     LSTMKD-CHECKPOINT 1
///     seed <u64>
///     config <single-line JSON>
///     tensor <name> <dim>x<dim>... (one line per parameter, registry order)
///     end
///
/// followed by every tensor's values as float32 little-endian, in header order.
/// Saving a freshly loaded float checkpoint reproduces the file byte for byte.
template <typename S>
void save_checkpoint(const std::string &path, const Model<S> &model);

template <typename S>
Model<S> load_checkpoint(const std::string &path);

struct CheckpointInfo {
    std::uint64_t seed = 0;
    ModelConfig config;
};

CheckpointInfo read_checkpoint_info(const std::string &path);

} // namespace lstmkd
