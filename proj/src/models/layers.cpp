#include "lstmkd/models/layers.hpp"

#include <cmath>

#include "lstmkd/error.hpp"
#include "lstmkd/numerics/rng.hpp"

namespace lstmkd {

template <typename S>
EncoderOutput<S> conv_encoder_forward(const Tensor<S> &waveform, const Segments &segments,
                                      const std::vector<ConvLayerParams<S>> &layers, const ModelConfig &config) {
    require(layers.size() == config.encoder_kernels.size(), "shape_mismatch",
            "conv encoder: parameter list does not match the configured stack");
    require(waveform.cols() == 1 && waveform.rows() == total_rows(segments), "shape_mismatch",
            "conv encoder: waveform must be a packed [sum N x 1] column");
    for (const auto &seg : segments) {
        require(seg.length >= config.receptive_field(), "input_too_short",
                "waveform of " + std::to_string(seg.length) + " samples is shorter than the receptive field (" +
                    std::to_string(config.receptive_field()) + ")");
    }
    Tensor<S> x = waveform;
    Segments seg = segments;
    std::size_t in = 1;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto geom = conv1d_geometry(seg, in, config.encoder_channels, config.encoder_kernels[i],
                                    config.encoder_strides[i]);
        x = gelu(conv1d(x, layers[i].weight, layers[i].bias, geom));
        seg = geom.output;
        in = config.encoder_channels;
    }
    return {x, seg};
}

template <typename S>
Tensor<S> bilstm_layer_forward(const Tensor<S> &frames, const BiLstmLayerParams<S> &p, const Segments &segments) {
    for (const auto &seg : segments) {
        require(seg.length > 0, "invalid_argument", "bilstm: empty sequence");
    }
    auto fwd = lstm_direction(frames, p.forward.weight_ih, p.forward.weight_hh, p.forward.bias, segments, false);
    auto bwd = lstm_direction(frames, p.backward.weight_ih, p.backward.weight_hh, p.backward.bias, segments, true);
    return concat_columns(fwd, bwd);
}

template <typename S>
Tensor<S> transformer_layer_forward(const Tensor<S> &frames, const TransformerLayerParams<S> &p, std::size_t heads,
                                    const Segments &segments) {
    auto h = layer_norm(frames, p.norm1_gamma, p.norm1_beta);
    auto q = linear(h, p.wq, p.bq);
    auto k = linear(h, p.wk, p.bk);
    auto v = linear(h, p.wv, p.bv);
    auto y = add(frames, linear(attention(q, k, v, heads, segments), p.wo, p.bo));
    auto f = linear(gelu(linear(layer_norm(y, p.norm2_gamma, p.norm2_beta), p.w1, p.b1)), p.w2, p.b2);
    return add(y, f);
}

template <typename S>
Tensor<S> cosine_head(const Tensor<S> &outputs, const CosineHeadParams<S> &p, double head_temperature) {
    require(head_temperature > 0.0, "invalid_config", "cosine head: temperature must be positive");
    const auto e = p.embeddings.data();
    const std::size_t dim = p.embeddings.cols();
    for (std::size_t c = 0; c < p.embeddings.rows(); ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            norm += double(e[c * dim + j]) * double(e[c * dim + j]);
        }
        require(std::sqrt(norm) > 1e-8, "zero_norm_embedding",
                "cosine head: embedding of cluster " + std::to_string(c) + " has zero norm");
    }
    auto projected = normalize_rows(linear(outputs, p.projection, p.projection_bias));
    auto sims = matmul_transposed(projected, normalize_rows(p.embeddings));
    return scale(sims, S(1.0 / head_temperature));
}

template <typename S>
Tensor<S> linear_head(const Tensor<S> &outputs, const LinearHeadParams<S> &p) {
    return linear(outputs, p.weight, p.bias);
}

std::vector<std::size_t> sample_span_mask(const Segments &segments, const MaskSpec &spec) {
    require(spec.span_length >= 1, "invalid_config", "mask span_length must be at least 1");
    require(spec.start_probability >= 0.0 && spec.start_probability <= 1.0, "invalid_config",
            "mask start_probability must lie in [0, 1]");
    Rng rng(spec.seed);
    std::vector<std::size_t> out;
    for (const auto &seg : segments) {
        std::size_t covered_until = 0; // first position not yet covered, relative to the segment
        for (std::size_t t = 0; t < seg.length; ++t) {
            // One draw per frame regardless of coverage keeps the stream layout fixed.
            if (rng.bernoulli(spec.start_probability)) {
                covered_until = std::max(covered_until, std::min(seg.length, t + spec.span_length));
            }
            if (t < covered_until) {
                out.push_back(seg.offset + t);
            }
        }
    }
    return out;
}

template <typename S>
MaskedFrames<S> apply_span_mask(const Tensor<S> &frames, const Segments &segments, const MaskSpec &spec,
                                const Tensor<S> &mask_embedding) {
    require(frames.rows() == total_rows(segments), "shape_mismatch", "span mask: segments do not cover the frames");
    auto indices = sample_span_mask(segments, spec);
    if (indices.empty()) {
        return {frames, {}};
    }
    return {replace_rows(frames, indices, mask_embedding), std::move(indices)};
}

template <typename S>
Tensor<S> weighted_sum_features(const std::vector<Tensor<S>> &layer_outputs, const Tensor<S> &weights) {
    require(!layer_outputs.empty(), "invalid_argument", "weighted sum: no layers");
    for (const auto &l : layer_outputs) {
        require(l.shape() == layer_outputs.front().shape(), "shape_mismatch",
                "weighted sum: layer shapes differ (" + shape_string(l.shape()) + " vs " +
                    shape_string(layer_outputs.front().shape()) + ")");
    }
    return weighted_sum(layer_outputs, weights);
}

#define LSTMKD_INSTANTIATE_LAYERS(S)                                                                               \
    template EncoderOutput<S> conv_encoder_forward(const Tensor<S> &, const Segments &,                            \
                                                   const std::vector<ConvLayerParams<S>> &, const ModelConfig &);  \
    template Tensor<S> bilstm_layer_forward(const Tensor<S> &, const BiLstmLayerParams<S> &, const Segments &);    \
    template Tensor<S> transformer_layer_forward(const Tensor<S> &, const TransformerLayerParams<S> &, std::size_t, \
                                                 const Segments &);                                                \
    template Tensor<S> cosine_head(const Tensor<S> &, const CosineHeadParams<S> &, double);                        \
    template Tensor<S> linear_head(const Tensor<S> &, const LinearHeadParams<S> &);                                \
    template MaskedFrames<S> apply_span_mask(const Tensor<S> &, const Segments &, const MaskSpec &,                \
                                             const Tensor<S> &);                                                   \
    template Tensor<S> weighted_sum_features(const std::vector<Tensor<S>> &, const Tensor<S> &);

LSTMKD_INSTANTIATE_LAYERS(float)
LSTMKD_INSTANTIATE_LAYERS(double)

} // namespace lstmkd
