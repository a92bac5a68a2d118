#include "lstmkd/models/config.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "lstmkd/error.hpp"

namespace lstmkd {

namespace {

std::size_t affine(std::size_t in, std::size_t out) { return in * out + out; }

} // namespace

std::size_t ModelConfig::layer_width() const { return arch == Arch::BiLstm ? 2 * hidden : hidden; }

std::size_t ModelConfig::sequence_input_width() const {
    return arch == Arch::BiLstm ? encoder_channels : hidden;
}

std::size_t ModelConfig::total_stride() const {
    return std::accumulate(encoder_strides.begin(), encoder_strides.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t ModelConfig::receptive_field() const {
    std::size_t r = 1;
    for (std::size_t i = encoder_kernels.size(); i-- > 0;) {
        r = (r - 1) * encoder_strides[i] + encoder_kernels[i];
    }
    return r;
}

std::size_t ModelConfig::frames_for(std::size_t samples) const {
    std::size_t t = samples;
    for (std::size_t i = 0; i < encoder_kernels.size(); ++i) {
        if (t < encoder_kernels[i]) {
            return 0;
        }
        t = (t - encoder_kernels[i]) / encoder_strides[i] + 1;
    }
    return t;
}

void ModelConfig::validate() const {
    require(!encoder_kernels.empty() && encoder_kernels.size() == encoder_strides.size(), "invalid_config",
            "encoder kernels and strides must be non-empty lists of equal length");
    for (std::size_t i = 0; i < encoder_kernels.size(); ++i) {
        require(encoder_kernels[i] > 0 && encoder_strides[i] > 0, "invalid_config",
                "encoder kernels and strides must be positive");
    }
    require(encoder_channels > 0, "invalid_config", "encoder_channels must be positive");
    require(hidden > 0, "invalid_config", "hidden must be positive");
    require(num_layers > 0, "invalid_config", "num_layers must be positive");
    require(num_clusters >= 2, "invalid_config", "num_clusters must be at least 2");
    if (arch == Arch::Transformer) {
        require(heads > 0 && hidden % heads == 0, "invalid_config",
                "transformer width " + std::to_string(hidden) + " is not divisible by " + std::to_string(heads) +
                    " heads");
        require(ffn > 0, "invalid_config", "transformer ffn width must be positive");
        require(pos_conv_kernel == 0 || pos_conv_kernel % 2 == 1, "invalid_config",
                "pos_conv_kernel must be odd so that the frame count is preserved");
    }
    if (head == HeadKind::Cosine) {
        require(head_projection > 0, "invalid_config", "cosine head needs head_projection > 0");
        require(head_temperature > 0.0, "invalid_config", "head_temperature must be positive");
    }
}

std::vector<ParameterGroup> itemize_parameters(const ModelConfig &config) {
    config.validate();
    std::vector<ParameterGroup> out;
    const std::size_t c = config.encoder_channels;
    for (std::size_t i = 0; i < config.encoder_kernels.size(); ++i) {
        const std::size_t in = i == 0 ? 1 : c;
        out.push_back({"encoder.conv" + std::to_string(i), config.encoder_kernels[i] * in * c + c});
    }
    if (config.feature_norm) {
        out.push_back({"encoder.norm", 2 * c});
    }
    const std::size_t d = config.hidden;
    if (config.arch == Arch::Transformer) {
        out.push_back({"input_projection", affine(c, d)});
    }
    out.push_back({"mask_embedding", config.sequence_input_width()});
    if (config.arch == Arch::Transformer) {
        if (config.pos_conv_kernel > 0) {
            out.push_back({"pos_conv", config.pos_conv_kernel * d * d + d});
        }
        const std::size_t per_layer = 4 * affine(d, d) + affine(d, config.ffn) + affine(config.ffn, d) + 4 * d;
        for (std::size_t l = 0; l < config.num_layers; ++l) {
            out.push_back({"layer" + std::to_string(l), per_layer});
        }
        out.push_back({"final_norm", 2 * d});
    } else {
        std::size_t in = c;
        for (std::size_t l = 0; l < config.num_layers; ++l) {
            out.push_back({"layer" + std::to_string(l), 2 * 4 * (in * d + d * d + d)});
            in = 2 * d;
        }
    }
    const std::size_t w = config.layer_width();
    if (config.head == HeadKind::Linear) {
        out.push_back({"head", affine(w, config.num_clusters)});
    } else {
        out.push_back({"head", affine(w, config.head_projection) + config.num_clusters * config.head_projection});
    }
    return out;
}

std::size_t count_parameters(const ModelConfig &config) {
    std::size_t total = 0;
    for (const auto &g : itemize_parameters(config)) {
        total += g.count;
    }
    return total;
}

ModelConfig model_preset(const std::string &name) {
    ModelConfig m;
    m.name = name;
    if (name == "lstm-fullsize") {
        return m;
    }
    if (name == "transformer-fullsize") {
        m.arch = Arch::Transformer;
        m.num_layers = 2;
        m.hidden = 768;
        m.ffn = 3072;
        m.heads = 12;
        return m;
    }
    // Toy presets keep the HuBERT stride stack (20 ms frames) with narrow channels.
    m.encoder_channels = 64;
    m.num_clusters = 32;
    if (name == "toy-teacher") {
        m.arch = Arch::Transformer;
        m.num_layers = 4;
        m.hidden = 192;
        m.ffn = 768;
        m.heads = 4;
        m.pos_conv_kernel = 17;
        m.head = HeadKind::Cosine;
        m.head_projection = 64;
        return m;
    }
    if (name == "toy-lstm") {
        m.num_layers = 2;
        m.hidden = 96;
        return m;
    }
    if (name == "toy-transformer") {
        m.arch = Arch::Transformer;
        m.num_layers = 2;
        m.hidden = 128;
        m.ffn = 512;
        m.heads = 4;
        return m;
    }
    fail("unknown_preset", "unknown model preset '" + name + "'");
}

std::vector<std::string> model_preset_names() {
    return {"lstm-fullsize", "transformer-fullsize", "toy-teacher", "toy-lstm", "toy-transformer"};
}

std::string to_string(Arch arch) { return arch == Arch::BiLstm ? "bilstm" : "transformer"; }
std::string to_string(HeadKind head) { return head == HeadKind::Linear ? "linear" : "cosine"; }

nlohmann::json to_json(const ModelConfig &m) {
    return {
        {"name", m.name},
        {"encoder_channels", m.encoder_channels},
        {"encoder_kernels", m.encoder_kernels},
        {"encoder_strides", m.encoder_strides},
        {"feature_norm", m.feature_norm},
        {"arch", to_string(m.arch)},
        {"num_layers", m.num_layers},
        {"hidden", m.hidden},
        {"ffn", m.ffn},
        {"heads", m.heads},
        {"pos_conv_kernel", m.pos_conv_kernel},
        {"num_clusters", m.num_clusters},
        {"head", to_string(m.head)},
        {"head_projection", m.head_projection},
        {"head_temperature", m.head_temperature},
    };
}

ModelConfig model_config_from_json(const nlohmann::json &j) {
    require(j.is_object(), "invalid_config", "model config must be a JSON object");
    ModelConfig m = j.contains("preset") ? model_preset(j.at("preset").get<std::string>()) : ModelConfig{};
    static const std::set<std::string> known{"preset", "name", "encoder_channels", "encoder_kernels",
                                             "encoder_strides", "feature_norm", "arch", "num_layers", "hidden",
                                             "ffn", "heads", "pos_conv_kernel", "num_clusters", "head",
                                             "head_projection", "head_temperature"};
    try {
        for (const auto &[key, value] : j.items()) {
            require(known.count(key) > 0, "invalid_config", "unknown model config key '" + key + "'");
            if (key == "name") m.name = value.get<std::string>();
            else if (key == "encoder_channels") m.encoder_channels = value.get<std::size_t>();
            else if (key == "encoder_kernels") m.encoder_kernels = value.get<std::vector<std::size_t>>();
            else if (key == "encoder_strides") m.encoder_strides = value.get<std::vector<std::size_t>>();
            else if (key == "feature_norm") m.feature_norm = value.get<bool>();
            else if (key == "num_layers") m.num_layers = value.get<std::size_t>();
            else if (key == "hidden") m.hidden = value.get<std::size_t>();
            else if (key == "ffn") m.ffn = value.get<std::size_t>();
            else if (key == "heads") m.heads = value.get<std::size_t>();
            else if (key == "pos_conv_kernel") m.pos_conv_kernel = value.get<std::size_t>();
            else if (key == "num_clusters") m.num_clusters = value.get<std::size_t>();
            else if (key == "head_projection") m.head_projection = value.get<std::size_t>();
            else if (key == "head_temperature") m.head_temperature = value.get<double>();
            else if (key == "arch") {
                const auto s = value.get<std::string>();
                require(s == "bilstm" || s == "transformer", "invalid_config", "arch must be bilstm or transformer");
                m.arch = s == "bilstm" ? Arch::BiLstm : Arch::Transformer;
            } else if (key == "head") {
                const auto s = value.get<std::string>();
                require(s == "linear" || s == "cosine", "invalid_config", "head must be linear or cosine");
                m.head = s == "linear" ? HeadKind::Linear : HeadKind::Cosine;
            }
        }
    } catch (const nlohmann::json::exception &e) {
        fail("invalid_config", std::string("model config: ") + e.what());
    }
    m.validate();
    return m;
}

} // namespace lstmkd
