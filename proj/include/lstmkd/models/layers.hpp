#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lstmkd/models/config.hpp"
#include "lstmkd/numerics/ops.hpp"
#include "lstmkd/numerics/tensor.hpp"

namespace lstmkd {

template <typename S>
struct ConvLayerParams {
    Tensor<S> weight; // [C_out x (k * C_in)]
    Tensor<S> bias;   // [C_out]
};

template <typename S>
struct LstmDirectionParams {
    Tensor<S> weight_ih; // [4h x in]
    Tensor<S> weight_hh; // [4h x h]
    Tensor<S> bias;      // [4h]
};

template <typename S>
struct BiLstmLayerParams {
    LstmDirectionParams<S> forward;
    LstmDirectionParams<S> backward;
};

template <typename S>
struct TransformerLayerParams {
    Tensor<S> norm1_gamma, norm1_beta;
    Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<S> norm2_gamma, norm2_beta;
    Tensor<S> w1, b1, w2, b2;
};

template <typename S>
struct CosineHeadParams {
    Tensor<S> projection;      // [D' x D]
    Tensor<S> projection_bias; // [D']
    Tensor<S> embeddings;      // [C x D']
};

template <typename S>
struct LinearHeadParams {
    Tensor<S> weight; // [C x D]
    Tensor<S> bias;   // [C]
};

template <typename S>
struct EncoderOutput {
    Tensor<S> frames; // [sum T x channels]
    Segments segments;
};

/// Strided convolution stack over packed waveforms ([sum N x 1]), GELU after
/// every layer. Throws "input_too_short" when an utterance cannot produce a frame.
template <typename S>
EncoderOutput<S> conv_encoder_forward(const Tensor<S> &waveform, const Segments &segments,
                                      const std::vector<ConvLayerParams<S>> &layers, const ModelConfig &config);

/// Forward and backward LSTM passes over each segment, concatenated per frame.
template <typename S>
Tensor<S> bilstm_layer_forward(const Tensor<S> &frames, const BiLstmLayerParams<S> &params,
                               const Segments &segments);

/// Pre-norm transformer layer: x + Attn(LN(x)), then y + FFN(LN(y)) with GELU.
template <typename S>
Tensor<S> transformer_layer_forward(const Tensor<S> &frames, const TransformerLayerParams<S> &params,
                                    std::size_t heads, const Segments &segments);

/// logits[t][c] = cos(A o_t + a, e_c) / tau'. Throws "zero_norm_embedding".
template <typename S>
Tensor<S> cosine_head(const Tensor<S> &outputs, const CosineHeadParams<S> &params, double head_temperature);

template <typename S>
Tensor<S> linear_head(const Tensor<S> &outputs, const LinearHeadParams<S> &params);

struct MaskSpec {
    std::size_t span_length = 10;
    double start_probability = 0.08;
    std::uint64_t seed = 0;
};

/// Span-mask selection over packed segments. Every frame of every segment is
/// a span start with `start_probability`; spans are clipped at the segment
/// end. Returns sorted, unique global row indices.
std::vector<std::size_t> sample_span_mask(const Segments &segments, const MaskSpec &spec);

template <typename S>
struct MaskedFrames {
    Tensor<S> frames;
    std::vector<std::size_t> indices;
};

template <typename S>
MaskedFrames<S> apply_span_mask(const Tensor<S> &frames, const Segments &segments, const MaskSpec &spec,
                                const Tensor<S> &mask_embedding);

/// Softmax-normalised weights over L layer outputs of identical shape.
template <typename S>
Tensor<S> weighted_sum_features(const std::vector<Tensor<S>> &layer_outputs, const Tensor<S> &weights);

} // namespace lstmkd
