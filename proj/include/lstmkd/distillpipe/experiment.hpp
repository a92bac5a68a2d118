#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lstmkd/distillpipe/pipeline.hpp"
#include "lstmkd/distillpipe/train.hpp"
#include "lstmkd/models/config.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

/// Everything one experiment needs, resolved to concrete values. A single
/// top-level seed drives every stage (synthesis, clustering, masking, batch
/// order, probing); the stage configs carry a copy of it.
struct ExperimentConfig {
    int version = 1;
    std::string preset = "toy";
    std::uint64_t seed = 0;

    SynthConfig synth;
    PseudoLabelConfig pseudo_labels;
    ModelConfig teacher_model;
    ModelConfig student_model;
    TrainConfig teacher_train;
    TrainConfig distill;
    ProbeConfig probe;
    double heldout_fraction = 0.1;

    /// Copies `seed` into every stage config.
    void apply_seed(std::uint64_t value);
    void validate() const;
};

/// "toy" (CPU-trainable in minutes) or "paper-shape" (the paper's model sizes
/// and schedule; shapes only, not meant to be trained here).
ExperimentConfig experiment_preset(const std::string &name);
std::vector<std::string> experiment_preset_names();

nlohmann::json to_json(const ExperimentConfig &config);

/// Resolves a config document: the preset named by "preset" (default "toy") is
/// expanded, then the document is deep-merged over it. A model section that
/// names its own "preset" replaces the inherited model section instead of
/// merging into it. Unknown keys, and "seed" inside a stage section, are
/// "invalid_config" errors.
ExperimentConfig experiment_from_json(const nlohmann::json &document);

/// Reads a JSON config file; an empty path yields the "toy" preset.
ExperimentConfig load_experiment_config(const std::string &path);

} // namespace lstmkd
