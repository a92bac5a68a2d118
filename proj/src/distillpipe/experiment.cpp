#include "lstmkd/distillpipe/experiment.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>

#include "lstmkd/error.hpp"

namespace lstmkd {

namespace {

using Setter = std::function<void(const nlohmann::json &)>;

// Applies every key of `section` through its setter; anything else is rejected
// so a typo never silently falls back to a default.
void apply_section(const nlohmann::json &section, const std::string &where, const std::map<std::string, Setter> &setters) {
    require(section.is_object(), "invalid_config", "'" + where + "' must be a JSON object");
    try {
        for (const auto &[key, value] : section.items()) {
            const auto it = setters.find(key);
            require(it != setters.end(), "invalid_config", "unknown key '" + key + "' in '" + where + "'");
            it->second(value);
        }
    } catch (const nlohmann::json::exception &e) {
        fail("invalid_config", where + ": " + e.what());
    }
}

template <typename T>
Setter set(T &field) {
    return [&field](const nlohmann::json &v) { field = v.get<T>(); };
}

nlohmann::json synth_json(const SynthConfig &s) {
    return {{"num_utterances", s.num_utterances},         {"min_seconds", s.min_seconds},
            {"max_seconds", s.max_seconds},               {"num_latent_classes", s.num_latent_classes},
            {"min_segment_frames", s.min_segment_frames}, {"max_segment_frames", s.max_segment_frames},
            {"frame_hop", s.frame_hop},                   {"noise_level", s.noise_level},
            {"sample_rate", s.sample_rate}};
}

void read_synth(const nlohmann::json &j, SynthConfig &s) {
    apply_section(j, "synth",
                  {{"num_utterances", set(s.num_utterances)},
                   {"min_seconds", set(s.min_seconds)},
                   {"max_seconds", set(s.max_seconds)},
                   {"num_latent_classes", set(s.num_latent_classes)},
                   {"min_segment_frames", set(s.min_segment_frames)},
                   {"max_segment_frames", set(s.max_segment_frames)},
                   {"frame_hop", set(s.frame_hop)},
                   {"noise_level", set(s.noise_level)},
                   {"sample_rate", set(s.sample_rate)}});
}

nlohmann::json mfcc_json(const MfccConfig &m) {
    return {{"frame_ms", m.frame_ms},     {"hop_ms", m.hop_ms}, {"num_mel", m.num_mel},
            {"num_ceps", m.num_ceps},     {"preemphasis", m.preemphasis},
            {"low_hz", m.low_hz},         {"high_hz", m.high_hz}, {"log_floor", m.log_floor}};
}

void read_labels(const nlohmann::json &j, PseudoLabelConfig &p) {
    apply_section(j, "pseudo_labels",
                  {{"num_clusters", set(p.num_clusters)},
                   {"max_iters", set(p.max_iters)},
                   {"restarts", set(p.restarts)},
                   {"mfcc", [&p](const nlohmann::json &m) {
                        apply_section(m, "pseudo_labels.mfcc",
                                      {{"frame_ms", set(p.mfcc.frame_ms)},
                                       {"hop_ms", set(p.mfcc.hop_ms)},
                                       {"num_mel", set(p.mfcc.num_mel)},
                                       {"num_ceps", set(p.mfcc.num_ceps)},
                                       {"preemphasis", set(p.mfcc.preemphasis)},
                                       {"low_hz", set(p.mfcc.low_hz)},
                                       {"high_hz", set(p.mfcc.high_hz)},
                                       {"log_floor", set(p.mfcc.log_floor)}});
                    }}});
}

void reject_stage_seed(const nlohmann::json &doc, const char *section) {
    if (doc.contains(section) && doc.at(section).is_object()) {
        require(!doc.at(section).contains("seed"), "invalid_config",
                std::string("'seed' is set once at the top level, not in '") + section + "'");
    }
}

} // namespace

void ExperimentConfig::apply_seed(std::uint64_t value) {
    seed = value;
    synth.seed = value;
    teacher_train.seed = value;
    distill.seed = value;
    probe.seed = value;
}

void ExperimentConfig::validate() const {
    require(version == 1, "unsupported_version", "experiment config version " + std::to_string(version));
    teacher_model.validate();
    student_model.validate();
    teacher_train.validate();
    distill.validate();
    require(pseudo_labels.num_clusters == teacher_model.num_clusters &&
                pseudo_labels.num_clusters == student_model.num_clusters,
            "invalid_config", "pseudo_labels.num_clusters must match both model heads");
    require(heldout_fraction > 0.0 && heldout_fraction < 1.0, "invalid_config", "heldout_fraction must lie in (0, 1)");
    require(probe.steps >= 1 && probe.batch_frames >= 1 && probe.lr > 0.0, "invalid_config",
            "probe needs steps >= 1, batch_frames >= 1 and lr > 0");
}

ExperimentConfig experiment_preset(const std::string &name) {
    ExperimentConfig e;
    e.preset = name;
    if (name == "toy") {
        e.synth.num_utterances = 600;
        e.synth.min_seconds = 0.6;
        e.synth.max_seconds = 1.2;
        e.synth.min_segment_frames = 40;
        e.synth.max_segment_frames = 80;
        e.teacher_model = model_preset("toy-teacher");
        e.student_model = model_preset("toy-lstm");

        e.teacher_train.total_steps = 3000;
        e.teacher_train.warmup_steps = 210;
        e.teacher_train.peak_lr = 1e-3;
        e.teacher_train.batch_size = 4;
        e.teacher_train.mask_span = 3;
        e.teacher_train.mask_prob = 0.08;

        e.distill.total_steps = 5000;
        e.distill.warmup_steps = 350;
        e.distill.peak_lr = 1e-3;
        e.distill.batch_size = 4;
    } else if (name == "paper-shape") {
        e.synth.num_utterances = 1000;
        e.synth.min_seconds = 2.0;
        e.synth.max_seconds = 15.0;
        e.synth.num_latent_classes = 80;

        // HuBERT LARGE shape as the teacher, the full-size 4-layer BiLSTM as the student
        e.teacher_model = model_preset("transformer-fullsize");
        e.teacher_model.name = "hubert-large-shape";
        e.teacher_model.num_layers = 24;
        e.teacher_model.hidden = 1024;
        e.teacher_model.ffn = 4096;
        e.teacher_model.heads = 16;
        e.teacher_model.pos_conv_kernel = 129;
        e.teacher_model.head = HeadKind::Cosine;
        e.teacher_model.head_projection = 768;
        e.student_model = model_preset("lstm-fullsize");

        for (auto *t : {&e.teacher_train, &e.distill}) {
            t->total_steps = 200000;
            t->warmup_steps = 14000;
            t->peak_lr = 2e-4;
            t->batch_size = 32;
        }
    } else {
        fail("unknown_preset", "unknown experiment preset '" + name + "' (expected toy or paper-shape)");
    }
    e.pseudo_labels.num_clusters = e.teacher_model.num_clusters;
    e.apply_seed(0);
    e.validate();
    return e;
}

std::vector<std::string> experiment_preset_names() { return {"toy", "paper-shape"}; }

nlohmann::json to_json(const ExperimentConfig &e) {
    auto teacher_train = to_json(e.teacher_train);
    auto distill = to_json(e.distill);
    teacher_train.erase("seed");
    distill.erase("seed");
    return {{"version", e.version},
            {"preset", e.preset},
            {"seed", e.seed},
            {"synth", synth_json(e.synth)},
            {"pseudo_labels",
             {{"num_clusters", e.pseudo_labels.num_clusters},
              {"max_iters", e.pseudo_labels.max_iters},
              {"restarts", e.pseudo_labels.restarts},
              {"mfcc", mfcc_json(e.pseudo_labels.mfcc)}}},
            {"teacher_model", to_json(e.teacher_model)},
            {"student_model", to_json(e.student_model)},
            {"teacher_train", teacher_train},
            {"distill", distill},
            {"probe", {{"steps", e.probe.steps}, {"lr", e.probe.lr}, {"batch_frames", e.probe.batch_frames}}},
            {"heldout_fraction", e.heldout_fraction}};
}

ExperimentConfig experiment_from_json(const nlohmann::json &document) {
    require(document.is_object(), "invalid_config", "experiment config must be a JSON object");
    std::string preset = "toy";
    if (document.contains("preset")) {
        require(document.at("preset").is_string(), "invalid_config", "'preset' must be a string");
        preset = document.at("preset").get<std::string>();
    }
    for (const char *section : {"teacher_train", "distill", "synth", "probe"}) {
        reject_stage_seed(document, section);
    }

    nlohmann::json merged = to_json(experiment_preset(preset));
    for (const char *model : {"teacher_model", "student_model"}) {
        if (document.contains(model) && document.at(model).is_object() && document.at(model).contains("preset")) {
            merged[model] = nlohmann::json::object();
        }
    }
    merged.merge_patch(document);

    ExperimentConfig e = experiment_preset(preset);
    static const std::set<std::string> known{"version",       "preset",        "seed",          "synth",
                                             "pseudo_labels", "teacher_model", "student_model", "teacher_train",
                                             "distill",       "probe",         "heldout_fraction"};
    try {
        for (const auto &[key, value] : merged.items()) {
            require(known.count(key) > 0, "invalid_config", "unknown experiment key '" + key + "'");
        }
        e.version = merged.at("version").get<int>();
        const auto seed = merged.at("seed").get<std::uint64_t>();
        read_synth(merged.at("synth"), e.synth);
        read_labels(merged.at("pseudo_labels"), e.pseudo_labels);
        e.teacher_model = model_config_from_json(merged.at("teacher_model"));
        e.student_model = model_config_from_json(merged.at("student_model"));
        e.teacher_train = train_config_from_json(merged.at("teacher_train"));
        e.distill = train_config_from_json(merged.at("distill"));
        apply_section(merged.at("probe"), "probe",
                      {{"steps", set(e.probe.steps)}, {"lr", set(e.probe.lr)}, {"batch_frames", set(e.probe.batch_frames)}});
        e.heldout_fraction = merged.at("heldout_fraction").get<double>();
        e.apply_seed(seed);
    } catch (const nlohmann::json::exception &ex) {
        fail("invalid_config", std::string("experiment config: ") + ex.what());
    }
    e.validate();
    return e;
}

ExperimentConfig load_experiment_config(const std::string &path) {
    if (path.empty()) {
        return experiment_preset("toy");
    }
    std::ifstream in(path);
    require(in.good(), "missing_input", "cannot read config file '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        fail("invalid_config", "'" + path + "' is not valid JSON: " + e.what());
    }
    return experiment_from_json(doc);
}

} // namespace lstmkd
