#include "lstmkd/models/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lstmkd/error.hpp"
#include "lstmkd/numerics/rng.hpp"

namespace lstmkd {

namespace {

constexpr const char *kMagic = "LSTMKD-CHECKPOINT 1";

double bound_for(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

} // namespace

template <typename S>
PackedWaveforms<S> pack_waveforms(const std::vector<std::span<const float>> &waveforms) {
    std::vector<std::size_t> lengths;
    std::vector<S> values;
    for (const auto &w : waveforms) {
        lengths.push_back(w.size());
        values.insert(values.end(), w.begin(), w.end());
    }
    return {Tensor<S>::from({values.size(), 1}, std::span<const S>(values)), pack_segments(lengths)};
}

template <typename S>
Tensor<S> Model<S>::make(Rng &rng, const std::string &name, const Shape &shape, double bound, double fill) {
    std::vector<S> values(shape_numel(shape));
    // Draw in a fixed order so the registry layout alone determines the stream.
    for (auto &v : values) {
        v = bound > 0.0 ? static_cast<S>(static_cast<float>(rng.uniform(-bound, bound))) : static_cast<S>(fill);
    }
    auto t = Tensor<S>::from(shape, std::span<const S>(values), true);
    params_.push_back({name, t});
    return t;
}

template <typename S>
Model<S>::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)), seed_(seed) {
    config_.validate();
    Rng rng(seed);
    const auto &c = config_;
    const std::size_t ch = c.encoder_channels, d = c.hidden;

    std::size_t in = 1;
    for (std::size_t i = 0; i < c.encoder_kernels.size(); ++i) {
        const std::size_t fan = c.encoder_kernels[i] * in;
        const std::string p = "encoder.conv" + std::to_string(i);
        // He-uniform weights: the stack has no internal normalisation, and with the
        // 1/sqrt(fan_in) bound the signal shrinks ~6x per GELU layer. Biases start
        // at zero so quiet inputs are not swamped by a constant offset.
        conv_.push_back({make(rng, p + ".weight", {ch, fan}, std::sqrt(6.0 / double(fan))),
                         make(rng, p + ".bias", {ch}, 0.0, 0.0)});
        in = ch;
    }
    if (c.feature_norm) {
        feature_gamma_ = make(rng, "encoder.norm.gamma", {ch}, 0.0, 1.0);
        feature_beta_ = make(rng, "encoder.norm.beta", {ch}, 0.0, 0.0);
    }
    if (c.arch == Arch::Transformer) {
        proj_w_ = make(rng, "input_projection.weight", {d, ch}, bound_for(ch));
        proj_b_ = make(rng, "input_projection.bias", {d}, bound_for(ch));
    }
    const std::size_t seq_in = c.sequence_input_width();
    mask_embedding_ = make(rng, "mask_embedding", {seq_in}, bound_for(seq_in));

    if (c.arch == Arch::Transformer) {
        if (c.pos_conv_kernel > 0) {
            const std::size_t fan = c.pos_conv_kernel * d;
            pos_w_ = make(rng, "pos_conv.weight", {d, fan}, bound_for(fan));
            pos_b_ = make(rng, "pos_conv.bias", {d}, bound_for(fan));
        }
        for (std::size_t l = 0; l < c.num_layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            TransformerLayerParams<S> t;
            t.norm1_gamma = make(rng, p + "norm1.gamma", {d}, 0.0, 1.0);
            t.norm1_beta = make(rng, p + "norm1.beta", {d}, 0.0, 0.0);
            t.wq = make(rng, p + "q.weight", {d, d}, bound_for(d));
            t.bq = make(rng, p + "q.bias", {d}, bound_for(d));
            t.wk = make(rng, p + "k.weight", {d, d}, bound_for(d));
            t.bk = make(rng, p + "k.bias", {d}, bound_for(d));
            t.wv = make(rng, p + "v.weight", {d, d}, bound_for(d));
            t.bv = make(rng, p + "v.bias", {d}, bound_for(d));
            t.wo = make(rng, p + "out.weight", {d, d}, bound_for(d));
            t.bo = make(rng, p + "out.bias", {d}, bound_for(d));
            t.norm2_gamma = make(rng, p + "norm2.gamma", {d}, 0.0, 1.0);
            t.norm2_beta = make(rng, p + "norm2.beta", {d}, 0.0, 0.0);
            t.w1 = make(rng, p + "ffn1.weight", {c.ffn, d}, bound_for(d));
            t.b1 = make(rng, p + "ffn1.bias", {c.ffn}, bound_for(d));
            t.w2 = make(rng, p + "ffn2.weight", {d, c.ffn}, bound_for(c.ffn));
            t.b2 = make(rng, p + "ffn2.bias", {d}, bound_for(c.ffn));
            transformer_.push_back(std::move(t));
        }
        final_gamma_ = make(rng, "final_norm.gamma", {d}, 0.0, 1.0);
        final_beta_ = make(rng, "final_norm.beta", {d}, 0.0, 0.0);
    } else {
        std::size_t layer_in = ch;
        for (std::size_t l = 0; l < c.num_layers; ++l) {
            BiLstmLayerParams<S> layer;
            for (int dir = 0; dir < 2; ++dir) {
                const std::string p = "layer" + std::to_string(l) + (dir == 0 ? ".fwd." : ".bwd.");
                LstmDirectionParams<S> q;
                q.weight_ih = make(rng, p + "weight_ih", {4 * d, layer_in}, bound_for(layer_in));
                q.weight_hh = make(rng, p + "weight_hh", {4 * d, d}, bound_for(d));
                q.bias = make(rng, p + "bias", {4 * d}, bound_for(d));
                (dir == 0 ? layer.forward : layer.backward) = std::move(q);
            }
            lstm_.push_back(std::move(layer));
            layer_in = 2 * d;
        }
    }

    const std::size_t w = c.layer_width();
    if (c.head == HeadKind::Linear) {
        linear_.weight = make(rng, "head.weight", {c.num_clusters, w}, bound_for(w));
        linear_.bias = make(rng, "head.bias", {c.num_clusters}, bound_for(w));
    } else {
        cosine_.projection = make(rng, "head.projection.weight", {c.head_projection, w}, bound_for(w));
        cosine_.projection_bias = make(rng, "head.projection.bias", {c.head_projection}, bound_for(w));
        cosine_.embeddings = make(rng, "head.embeddings", {c.num_clusters, c.head_projection}, bound_for(c.head_projection));
    }
}

template <typename S>
std::size_t Model<S>::parameter_count() const {
    std::size_t n = 0;
    for (const auto &p : params_) {
        n += p.value.numel();
    }
    return n;
}

template <typename S>
const Tensor<S> &Model<S>::parameter(const std::string &name) const {
    for (const auto &p : params_) {
        if (p.name == name) {
            return p.value;
        }
    }
    fail("unknown_parameter", "model has no parameter named '" + name + "'");
}

template <typename S>
ModelOutput<S> Model<S>::forward(const PackedWaveforms<S> &input, const MaskSpec *mask) const {
    const auto &c = config_;
    auto enc = conv_encoder_forward(input.samples, input.segments, conv_, c);
    Tensor<S> x = enc.frames;
    if (c.feature_norm) {
        x = layer_norm(x, feature_gamma_, feature_beta_);
    }
    if (c.arch == Arch::Transformer) {
        x = linear(x, proj_w_, proj_b_);
    }
    ModelOutput<S> out;
    out.segments = enc.segments;
    if (mask != nullptr) {
        auto masked = apply_span_mask(x, enc.segments, *mask, mask_embedding_);
        x = masked.frames;
        out.masked = std::move(masked.indices);
    }
    if (c.arch == Arch::Transformer) {
        if (c.pos_conv_kernel > 0) {
            auto geom = conv1d_geometry(enc.segments, c.hidden, c.hidden, c.pos_conv_kernel, 1, c.pos_conv_kernel / 2);
            x = add(x, gelu(conv1d(x, pos_w_, pos_b_, geom)));
        }
        for (const auto &layer : transformer_) {
            x = transformer_layer_forward(x, layer, c.heads, enc.segments);
            out.layers.push_back(x);
        }
        x = layer_norm(x, final_gamma_, final_beta_);
    } else {
        for (const auto &layer : lstm_) {
            x = bilstm_layer_forward(x, layer, enc.segments);
            out.layers.push_back(x);
        }
    }
    out.logits = c.head == HeadKind::Linear ? linear_head(x, linear_) : cosine_head(x, cosine_, c.head_temperature);
    return out;
}

template <typename S>
void Model<S>::zero_grad() {
    for (auto &p : params_) {
        p.value.zero_grad();
    }
}

template <typename S>
void Model<S>::assign(const std::vector<std::vector<float>> &values) {
    require(values.size() == params_.size(), "checkpoint_mismatch",
            "expected " + std::to_string(params_.size()) + " tensors, got " + std::to_string(values.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto dst = params_[i].value.mutable_data();
        require(values[i].size() == dst.size(), "checkpoint_mismatch",
                "tensor '" + params_[i].name + "' has the wrong number of elements");
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] = static_cast<S>(values[i][j]);
        }
    }
}

template <typename S>
std::vector<std::vector<float>> Model<S>::values() const {
    std::vector<std::vector<float>> out;
    for (const auto &p : params_) {
        out.emplace_back(p.value.data().begin(), p.value.data().end());
    }
    return out;
}

template <typename S>
void save_checkpoint(const std::string &path, const Model<S> &model) {
    std::ostringstream header;
    header << kMagic << '\n' << "seed " << model.seed() << '\n' << "config " << to_json(model.config()).dump() << '\n';
    for (const auto &p : model.parameters()) {
        header << "tensor " << p.name << ' ';
        const auto &shape = p.value.shape();
        for (std::size_t i = 0; i < shape.size(); ++i) {
            header << (i ? "x" : "") << shape[i];
        }
        header << '\n';
    }
    header << "end\n";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "io_error", "cannot open '" + path + "' for writing");
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");
    for (const auto &p : model.parameters()) {
        std::vector<float> v(p.value.data().begin(), p.value.data().end());
        out.write(reinterpret_cast<const char *>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    }
    require(out.good(), "io_error", "failed writing '" + path + "'");
}

namespace {

struct ParsedCheckpoint {
    CheckpointInfo info;
    std::vector<std::pair<std::string, Shape>> tensors;
    std::vector<std::vector<float>> values;
};

ParsedCheckpoint parse_checkpoint(const std::string &path, bool with_payload) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "io_error", "cannot open checkpoint '" + path + "'");
    ParsedCheckpoint out;
    std::string line;
    require(std::getline(in, line) && line == kMagic, "malformed_checkpoint", "'" + path + "' is not a checkpoint");
    bool have_seed = false, have_config = false, ended = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        const auto space = line.find(' ');
        const std::string key = line.substr(0, space), rest = space == std::string::npos ? "" : line.substr(space + 1);
        if (key == "seed") {
            out.info.seed = std::stoull(rest);
            have_seed = true;
        } else if (key == "config") {
            try {
                out.info.config = model_config_from_json(nlohmann::json::parse(rest));
            } catch (const nlohmann::json::exception &e) {
                fail("malformed_checkpoint", std::string("checkpoint config: ") + e.what());
            }
            have_config = true;
        } else if (key == "tensor") {
            const auto sp = rest.find(' ');
            require(sp != std::string::npos, "malformed_checkpoint", "bad tensor line: " + line);
            Shape shape;
            std::stringstream dims(rest.substr(sp + 1));
            std::string dim;
            while (std::getline(dims, dim, 'x')) {
                shape.push_back(std::stoull(dim));
            }
            out.tensors.emplace_back(rest.substr(0, sp), shape);
        } else {
            fail("malformed_checkpoint", "unexpected header line: " + line);
        }
    }
    require(ended && have_seed && have_config, "malformed_checkpoint", "incomplete checkpoint header in '" + path + "'");
    if (with_payload) {
        for (const auto &[name, shape] : out.tensors) {
            std::vector<float> v(shape_numel(shape));
            in.read(reinterpret_cast<char *>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
            require(in.gcount() == static_cast<std::streamsize>(v.size() * sizeof(float)), "malformed_checkpoint",
                    "truncated payload for tensor '" + name + "'");
            out.values.push_back(std::move(v));
        }
        in.peek();
        require(in.eof(), "malformed_checkpoint", "trailing bytes after checkpoint payload");
    }
    return out;
}

} // namespace

CheckpointInfo read_checkpoint_info(const std::string &path) { return parse_checkpoint(path, false).info; }

template <typename S>
Model<S> load_checkpoint(const std::string &path) {
    auto parsed = parse_checkpoint(path, true);
    Model<S> model(parsed.info.config, parsed.info.seed);
    const auto &params = model.parameters();
    require(params.size() == parsed.tensors.size(), "checkpoint_mismatch",
            "checkpoint tensor list does not match its config");
    for (std::size_t i = 0; i < params.size(); ++i) {
        require(params[i].name == parsed.tensors[i].first && params[i].value.shape() == parsed.tensors[i].second,
                "checkpoint_mismatch", "checkpoint tensor '" + parsed.tensors[i].first + "' does not match the model");
    }
    model.assign(parsed.values);
    return model;
}

template class Model<float>;
template class Model<double>;
template PackedWaveforms<float> pack_waveforms(const std::vector<std::span<const float>> &);
template PackedWaveforms<double> pack_waveforms(const std::vector<std::span<const float>> &);
template void save_checkpoint(const std::string &, const Model<float> &);
template void save_checkpoint(const std::string &, const Model<double> &);
template Model<float> load_checkpoint(const std::string &);
template Model<double> load_checkpoint(const std::string &);

} // namespace lstmkd
