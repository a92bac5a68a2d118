#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace lstmkd {

enum class Arch { Transformer, BiLstm };
enum class HeadKind { Cosine, Linear };

struct ModelConfig {
    std::string name = "custom";

    // Convolutional waveform encoder; one entry per layer, GELU after each.
    std::size_t encoder_channels = 512;
    std::vector<std::size_t> encoder_kernels{10, 3, 3, 3, 3, 2, 2};
    std::vector<std::size_t> encoder_strides{5, 2, 2, 2, 2, 2, 2};
    bool feature_norm = true; // LayerNorm over encoder channels

    Arch arch = Arch::BiLstm;
    std::size_t num_layers = 4;
    std::size_t hidden = 384; // LSTM cell size, or transformer model width
    std::size_t ffn = 0;      // transformer only
    std::size_t heads = 0;    // transformer only
    std::size_t pos_conv_kernel = 0; // transformer only; 0 disables, otherwise odd

    std::size_t num_clusters = 500;
    HeadKind head = HeadKind::Linear;
    std::size_t head_projection = 0; // cosine head only: D'
    double head_temperature = 0.1;   // cosine head only: tau'

    /// Per-frame width produced by every sequence layer (2h for a BiLSTM).
    std::size_t layer_width() const;
    /// Width of the features entering the first sequence layer.
    std::size_t sequence_input_width() const;
    /// Total samples-per-frame hop of the encoder stack.
    std::size_t total_stride() const;
    /// Samples needed for a single output frame.
    std::size_t receptive_field() const;
    /// Encoder frames produced from `samples` waveform samples (0 if too short).
    std::size_t frames_for(std::size_t samples) const;

    void validate() const;
};

/// One labelled line of the closed-form parameter itemisation.
struct ParameterGroup {
    std::string name;
    std::size_t count = 0;
};

std::vector<ParameterGroup> itemize_parameters(const ModelConfig &config);
std::size_t count_parameters(const ModelConfig &config);

/// Named presets: "lstm-fullsize", "transformer-fullsize", "toy-teacher",
/// "toy-lstm", "toy-transformer".
ModelConfig model_preset(const std::string &name);
std::vector<std::string> model_preset_names();

nlohmann::json to_json(const ModelConfig &config);
ModelConfig model_config_from_json(const nlohmann::json &j);

std::string to_string(Arch arch);
std::string to_string(HeadKind head);

} // namespace lstmkd
