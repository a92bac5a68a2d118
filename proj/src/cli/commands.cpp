#include "lstmkd/cli/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "lstmkd/cli/verify.hpp"
#include "lstmkd/distillpipe/experiment.hpp"
#include "lstmkd/error.hpp"
#include "lstmkd/numerics/rng.hpp"
#include "lstmkd/profiler/profiler.hpp"

namespace fs = std::filesystem;

namespace lstmkd {

// ---- run directory -----------------------------------------------------------

namespace {

void write_json(const std::string &path, const nlohmann::json &j) {
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "io_error", "cannot write '" + path + "'");
    f << j.dump(2) << '\n';
    require(f.good(), "io_error", "failed writing '" + path + "'");
}

// Files hash directly; a directory hashes the sorted list of (name, file hash).
std::string path_digest(const std::string &path) {
    require(fs::exists(path), "missing_input", "no such file or directory '" + path + "'");
    if (!fs::is_directory(path)) {
        return file_sha256(path);
    }
    std::vector<std::string> names;
    for (const auto &entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file()) {
            names.push_back(entry.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    std::string listing;
    for (const auto &n : names) {
        listing += n + ' ' + file_sha256((fs::path(path) / n).string()) + '\n';
    }
    return sha256_hex(listing);
}

} // namespace

RunDirectory::RunDirectory(std::string path, std::string command) : path_(std::move(path)), command_(std::move(command)) {
    require(!path_.empty(), "missing_argument", command_ + " needs --out <dir>");
    std::error_code ec;
    fs::create_directories(path_, ec);
    require(!ec && fs::is_directory(path_), "io_error", "cannot create output directory '" + path_ + "'");
}

std::string RunDirectory::file(const std::string &name) const { return (fs::path(path_) / name).string(); }

void RunDirectory::write_config(const nlohmann::json &config) const { write_json(file("config.json"), config); }

void RunDirectory::add_input(const std::string &role, const std::string &path) { inputs_[role] = path; }

void RunDirectory::add_output(const std::string &name) { outputs_.push_back(name); }

void RunDirectory::write_manifest() const {
    nlohmann::json inputs = nlohmann::json::object(), outputs = nlohmann::json::object();
    for (const auto &[role, path] : inputs_) {
        inputs[role] = {{"path", path}, {"sha256", path_digest(path)}};
    }
    for (const auto &name : outputs_) {
        outputs[name] = path_digest(file(name));
    }
    outputs["config.json"] = file_sha256(file("config.json"));
    write_json(file("manifest.json"), {{"command", command_}, {"inputs", inputs}, {"outputs", outputs}});
}

// ---- subcommands ---------------------------------------------------------------

namespace {

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out;
    std::string preset;
};

void add_common(CLI::App *sub, CommonOptions &c) {
    sub->add_option("--seed", c.seed, "Seed for every random stage (overrides the config)");
    sub->add_option("--config", c.config, "Experiment config JSON (a preset plus overrides)");
    sub->add_option("--out", c.out, "Output directory");
}

ExperimentConfig resolve_experiment(const CommonOptions &c) {
    nlohmann::json doc = nlohmann::json::object();
    if (!c.config.empty()) {
        std::ifstream in(c.config);
        require(in.good(), "missing_input", "cannot read config file '" + c.config + "'");
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception &e) {
            fail("invalid_config", "'" + c.config + "' is not valid JSON: " + e.what());
        }
        require(doc.is_object(), "invalid_config", "'" + c.config + "' must hold a JSON object");
    }
    if (!c.preset.empty()) {
        require(!doc.contains("preset") || doc.at("preset") == c.preset, "invalid_config",
                "--preset " + c.preset + " conflicts with the preset named in " + c.config);
        doc["preset"] = c.preset;
    }
    auto e = experiment_from_json(doc);
    if (c.seed) {
        e.apply_seed(*c.seed);
    }
    return e;
}

nlohmann::json snapshot(const std::string &command, const ExperimentConfig &e, nlohmann::json options) {
    return {{"command", command}, {"experiment", to_json(e)}, {"options", std::move(options)}};
}

// A synth run directory keeps its audio in corpus/; either form is accepted.
std::string corpus_dir(const std::string &path) {
    require(!path.empty(), "missing_argument", "--corpus <dir> is required");
    if (fs::exists(fs::path(path) / "corpus" / "index.json")) {
        return (fs::path(path) / "corpus").string();
    }
    return path;
}

std::vector<Waveform> load_waves(const std::string &dir) {
    std::vector<Waveform> waves;
    for (auto &u : read_corpus(dir)) {
        waves.push_back(std::move(u.wave));
    }
    return waves;
}

struct Splits {
    Dataset train, heldout;
};

Splits load_splits(const std::string &corpus, const std::string &labels, const ModelConfig &model, double fraction) {
    require(!labels.empty(), "missing_argument", "--labels <file> is required");
    auto data = make_dataset(load_waves(corpus), read_label_cache(labels), model);
    auto [train, heldout] = split_heldout(data, fraction);
    return {std::move(train), std::move(heldout)};
}

// Masks for evaluation come from their own stream so they never coincide with
// the masks seen in training.
std::uint64_t eval_mask_seed(std::uint64_t seed) { return Rng(seed).fork(7).next_u64(); }

double smoothed_at(const std::vector<StepMetrics> &rows, std::size_t step) {
    std::vector<double> totals;
    for (const auto &r : rows) {
        totals.push_back(r.total);
    }
    const auto s = smooth(totals, 100);
    require(step >= 1 && step <= s.size(), "invalid_argument", "no metrics row for step " + std::to_string(step));
    return s[step - 1];
}

int cmd_synth(const CommonOptions &c, std::ostream &out) {
    const auto e = resolve_experiment(c);
    RunDirectory run(c.out, "synth");
    run.write_config(snapshot("synth", e, nlohmann::json::object()));
    const auto corpus = synth_corpus(e.synth);
    write_corpus(run.file("corpus"), corpus);
    run.add_output("corpus");
    run.write_manifest();
    out << "synth: " << corpus.size() << " utterances -> " << run.file("corpus") << '\n';
    return 0;
}

int cmd_pseudo_labels(const CommonOptions &c, const std::string &corpus, std::ostream &out) {
    const auto e = resolve_experiment(c);
    const auto dir = corpus_dir(corpus);
    RunDirectory run(c.out, "pseudo-labels");
    run.add_input("corpus", dir);
    run.write_config(snapshot("pseudo-labels", e, {{"corpus", dir}}));
    const auto labels = make_pseudo_labels(load_waves(dir), e.pseudo_labels, e.seed);
    write_label_cache(run.file("labels.bin"), labels);
    run.add_output("labels.bin");
    run.write_manifest();
    std::size_t frames = 0;
    for (const auto &l : labels) {
        frames += l.labels.size();
    }
    out << "pseudo-labels: " << labels.size() << " utterances, " << frames << " frames, "
        << e.pseudo_labels.num_clusters << " clusters\n";
    return 0;
}

int cmd_train_teacher(const CommonOptions &c, const std::string &corpus, const std::string &labels,
                      std::ostream &out) {
    const auto e = resolve_experiment(c);
    const auto dir = corpus_dir(corpus);
    RunDirectory run(c.out, "train-teacher");
    run.add_input("corpus", dir);
    run.add_input("labels", labels);
    run.write_config(snapshot("train-teacher", e, {{"corpus", dir}, {"labels", labels}}));
    const auto split = load_splits(dir, labels, e.teacher_model, e.heldout_fraction);

    MetricsLog log(run.file("metrics.csv"));
    const auto teacher = train_teacher(split.train, e.teacher_model, e.teacher_train, &log);
    save_checkpoint(run.file("teacher.ckpt"), teacher);
    const auto &tt = e.teacher_train;
    const auto train_acc = masked_accuracy(teacher, split.train, tt.mask_span, tt.mask_prob, eval_mask_seed(e.seed));
    const auto held_acc = masked_accuracy(teacher, split.heldout, tt.mask_span, tt.mask_prob, eval_mask_seed(e.seed));
    write_json(run.file("summary.json"), {{"steps", tt.total_steps},
                                          {"train_masked_accuracy", train_acc.accuracy()},
                                          {"train_masked_frames", train_acc.masked},
                                          {"heldout_masked_accuracy", held_acc.accuracy()},
                                          {"heldout_masked_frames", held_acc.masked}});
    for (const char *name : {"metrics.csv", "teacher.ckpt", "summary.json"}) {
        run.add_output(name);
    }
    run.write_manifest();
    out << std::setprecision(4) << "train-teacher: " << tt.total_steps
        << " steps, masked accuracy train " << train_acc.accuracy() << " held-out " << held_acc.accuracy() << '\n';
    return 0;
}

int cmd_export_logits(const CommonOptions &c, const std::string &corpus, const std::string &teacher_path,
                      std::ostream &out) {
    const auto e = resolve_experiment(c);
    const auto dir = corpus_dir(corpus);
    require(!teacher_path.empty(), "missing_argument", "--teacher <checkpoint> is required");
    RunDirectory run(c.out, "export-logits");
    run.add_input("corpus", dir);
    run.add_input("teacher", teacher_path);
    run.write_config(snapshot("export-logits", e, {{"corpus", dir}, {"teacher", teacher_path}}));
    const auto teacher = load_checkpoint<float>(teacher_path);
    Dataset data;
    data.num_clusters = teacher.config().num_clusters;
    for (auto &w : load_waves(dir)) {
        data.items.push_back({w.id, std::move(w.samples), {}});
    }
    const auto cache = export_teacher_logits(teacher, data, file_sha256(teacher_path));
    write_logit_cache(run.file("logits.bin"), cache);
    run.add_output("logits.bin");
    run.write_manifest();
    out << "export-logits: " << cache.records.size() << " utterances, teacher " << cache.teacher_hash.substr(0, 12)
        << '\n';
    return 0;
}

struct DistillOptions {
    std::string corpus, labels, logits, teacher;
    std::optional<std::string> mode;
    std::optional<double> alpha, beta, tau;
    bool dynamic_beta = false;
    bool mask_input = false;
};

int cmd_distill(const CommonOptions &c, const DistillOptions &d, std::ostream &out) {
    auto e = resolve_experiment(c);
    if (d.mode) e.distill.mode = distill_mode_from_string(*d.mode);
    if (d.alpha) e.distill.alpha = *d.alpha;
    if (d.beta) e.distill.beta = *d.beta;
    if (d.tau) e.distill.tau = *d.tau;
    if (d.dynamic_beta) e.distill.dynamic_beta = true;
    if (d.mask_input) e.distill.mask_student_input = true;
    e.validate();
    require(!d.logits.empty(), "missing_argument", "--logits <cache> is required");

    const auto dir = corpus_dir(d.corpus);
    RunDirectory run(c.out, "distill");
    run.add_input("corpus", dir);
    run.add_input("labels", d.labels);
    run.add_input("logits", d.logits);
    if (!d.teacher.empty()) {
        run.add_input("teacher", d.teacher);
    }
    run.write_config(snapshot("distill", e,
                              {{"corpus", dir}, {"labels", d.labels}, {"logits", d.logits}, {"teacher", d.teacher}}));
    const auto split = load_splits(dir, d.labels, e.student_model, e.heldout_fraction);
    const auto cache = read_logit_cache(d.logits);
    const std::string expected = d.teacher.empty() ? "" : file_sha256(d.teacher);

    MetricsLog log(run.file("metrics.csv"));
    const auto student = distill_student<float>(split.train, cache, e.student_model, e.distill, &log, expected);
    save_checkpoint(run.file("student.ckpt"), student);
    const double held = teacher_agreement(student, split.heldout, cache);
    const double train = teacher_agreement(student, split.train, cache);
    const std::size_t n = e.distill.total_steps;
    nlohmann::json summary{{"mode", to_string(e.distill.mode)},
                           {"alpha", e.distill.alpha},
                           {"beta", e.distill.beta},
                           {"dynamic_beta", e.distill.dynamic_beta},
                           {"steps", n},
                           {"heldout_agreement", held},
                           {"train_agreement", train}};
    if (n >= 10) {
        summary["smoothed_total_first_tenth"] = smoothed_at(log.rows(), n / 10);
        summary["smoothed_total_final"] = smoothed_at(log.rows(), n);
    }
    write_json(run.file("summary.json"), summary);
    for (const char *name : {"metrics.csv", "student.ckpt", "summary.json"}) {
        run.add_output(name);
    }
    run.write_manifest();
    out << std::setprecision(4) << "distill (" << to_string(e.distill.mode) << "): " << n
        << " steps, held-out agreement " << held << '\n';
    return 0;
}

int cmd_probe(const CommonOptions &c, const std::string &checkpoint, const std::string &corpus,
              const std::string &labels, std::ostream &out) {
    const auto e = resolve_experiment(c);
    require(!checkpoint.empty(), "missing_argument", "--checkpoint <file> is required");
    const auto dir = corpus_dir(corpus);
    RunDirectory run(c.out, "probe");
    run.add_input("checkpoint", checkpoint);
    run.add_input("corpus", dir);
    run.add_input("labels", labels);
    run.write_config(snapshot("probe", e, {{"checkpoint", checkpoint}, {"corpus", dir}, {"labels", labels}}));
    const auto model = load_checkpoint<float>(checkpoint);
    const auto split = load_splits(dir, labels, model.config(), e.heldout_fraction);
    const auto report = probe_eval(model, split.train, split.heldout, e.probe);
    write_json(run.file("probe.json"), {{"model", model.config().name},
                                        {"train_frames", report.train_frames},
                                        {"heldout_frames", report.heldout_frames},
                                        {"heldout_accuracy", report.heldout_accuracy},
                                        {"layer_weights", report.layer_weights}});
    run.add_output("probe.json");
    run.write_manifest();
    out << std::setprecision(4) << "probe: held-out frame accuracy " << report.heldout_accuracy << '\n';
    return 0;
}

struct ProfileOptions {
    std::vector<std::string> models{"toy-lstm", "toy-transformer"};
    std::vector<double> lengths{1, 2, 4, 8, 16, 30};
    std::size_t repeats = 10;
};

int cmd_profile(const CommonOptions &c, const ProfileOptions &p, std::ostream &out) {
    RunDirectory run(c.out, "profile");
    std::vector<ModelConfig> models;
    for (const auto &name : p.models) {
        models.push_back(model_preset(name));
    }
    run.write_config({{"command", "profile"},
                      {"options", {{"models", p.models}, {"lengths", p.lengths}, {"repeats", p.repeats}}}});
    const auto records = sweep_profile(models, p.lengths, p.repeats, run.file("profile.csv"));
    run.add_output("profile.csv");
    for (const auto &svg : write_profile_svgs(run.file("profile"), records)) {
        run.add_output(fs::path(svg).filename().string());
    }
    run.write_manifest();
    for (const auto &r : records) {
        out << std::setprecision(4) << r.model << " " << r.seconds << " s: " << double(r.macs) / 1e9 << " GMACs, "
            << double(r.peak_bytes) / 1e6 << " MB peak, " << r.mean_time_s << " s mean\n";
    }
    return 0;
}

int cmd_param_count(const CommonOptions &c, const std::string &model_name, std::ostream &out) {
    const auto cfg = model_preset(model_name.empty() ? "lstm-fullsize" : model_name);
    const auto groups = itemize_parameters(cfg);
    for (const auto &g : groups) {
        out << std::left << std::setw(40) << g.name << ' ' << g.count << '\n';
    }
    const auto total = count_parameters(cfg);
    out << std::left << std::setw(40) << "total" << ' ' << total << '\n';
    if (!c.out.empty()) {
        RunDirectory run(c.out, "param-count");
        nlohmann::json items = nlohmann::json::array();
        for (const auto &g : groups) {
            items.push_back({{"name", g.name}, {"count", g.count}});
        }
        run.write_config({{"command", "param-count"}, {"model", to_json(cfg)}});
        write_json(run.file("param_count.json"), {{"model", cfg.name}, {"total", total}, {"groups", items}});
        run.add_output("param_count.json");
        run.write_manifest();
    }
    return 0;
}

int cmd_verify(const CommonOptions &c, std::ostream &out, std::ostream &err) {
    const auto results = run_verify_suites(c.seed.value_or(0));
    std::size_t ok = 0;
    nlohmann::json report = nlohmann::json::array();
    for (const auto &r : results) {
        ok += r.ok() ? 1 : 0;
        out << (r.ok() ? "PASS " : "FAIL ") << r.name << ": " << r.passed << "/" << r.cases << " within "
            << std::setprecision(3) << r.tolerance << " (worst " << r.worst << ")\n";
        report.push_back({{"name", r.name},
                          {"cases", r.cases},
                          {"passed", r.passed},
                          {"worst", r.worst},
                          {"tolerance", r.tolerance}});
    }
    out << "verify: " << ok << "/" << results.size() << " suites passed\n";
    if (!c.out.empty()) {
        RunDirectory run(c.out, "verify");
        run.write_config({{"command", "verify"}, {"seed", c.seed.value_or(0)}});
        write_json(run.file("verify.json"), report);
        run.add_output("verify.json");
        run.write_manifest();
    }
    if (ok != results.size()) {
        err << "error: verification_failed: " << results.size() - ok << " suite(s) failed\n";
        return 1;
    }
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"lstmkd: knowledge distillation (KD / DKD) toolkit for speech representation students"};
    app.name("lstmkd");
    app.require_subcommand(1, 1);

    CommonOptions common;
    std::string corpus, labels, logits, teacher, checkpoint, model_name;
    DistillOptions dist;
    ProfileOptions prof;

    auto *synth = app.add_subcommand("synth", "Generate the seeded synthetic corpus");
    add_common(synth, common);
    synth->add_option("--preset", common.preset, "Experiment preset (toy, paper-shape)");

    auto *pseudo = app.add_subcommand("pseudo-labels", "MFCC + k-means frame pseudo-labels");
    add_common(pseudo, common);
    pseudo->add_option("--preset", common.preset, "Experiment preset");
    pseudo->add_option("--corpus", corpus, "Corpus directory")->required();

    auto *train = app.add_subcommand("train-teacher", "Masked cluster prediction training of the teacher");
    add_common(train, common);
    train->add_option("--preset", common.preset, "Experiment preset");
    train->add_option("--corpus", corpus, "Corpus directory")->required();
    train->add_option("--labels", labels, "Label cache")->required();

    auto *exp = app.add_subcommand("export-logits", "Cache unmasked teacher logits for every utterance");
    add_common(exp, common);
    exp->add_option("--preset", common.preset, "Experiment preset");
    exp->add_option("--corpus", corpus, "Corpus directory")->required();
    exp->add_option("--teacher", teacher, "Teacher checkpoint")->required();

    auto *distill = app.add_subcommand("distill", "Train a student with CE + KD or CE + DKD");
    add_common(distill, common);
    distill->add_option("--preset", common.preset, "Experiment preset");
    distill->add_option("--corpus", dist.corpus, "Corpus directory")->required();
    distill->add_option("--labels", dist.labels, "Label cache")->required();
    distill->add_option("--logits", dist.logits, "Teacher logit cache")->required();
    distill->add_option("--teacher", dist.teacher, "Teacher checkpoint; its hash must match the cache");
    distill->add_option("--mode", dist.mode, "kd or dkd")->check(CLI::IsMember({"kd", "dkd"}));
    distill->add_option("--alpha", dist.alpha, "DKD target-class weight");
    distill->add_option("--beta", dist.beta, "DKD non-target weight");
    distill->add_option("--tau", dist.tau, "Softmax temperature");
    distill->add_flag("--dynamic-beta", dist.dynamic_beta, "DKD with beta = 1 - p_target per frame");
    distill->add_flag("--mask-input", dist.mask_input, "Span-mask the student input (loss still on all frames)");

    auto *probe = app.add_subcommand("probe", "Weighted-sum linear probe on a frozen checkpoint");
    add_common(probe, common);
    probe->add_option("--preset", common.preset, "Experiment preset");
    probe->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    probe->add_option("--corpus", corpus, "Corpus directory")->required();
    probe->add_option("--labels", labels, "Label cache")->required();

    auto *profile = app.add_subcommand("profile", "Memory / MAC / latency sweep over utterance length");
    add_common(profile, common);
    profile->add_option("--models", prof.models, "Model presets")->delimiter(',');
    profile->add_option("--lengths", prof.lengths, "Utterance lengths in seconds")->delimiter(',');
    profile->add_option("--repeats", prof.repeats, "Timed runs per point")->check(CLI::PositiveNumber);

    auto *params = app.add_subcommand("param-count", "Closed-form parameter count with itemisation");
    add_common(params, common);
    params->add_option("--preset", model_name, "Model preset (default lstm-fullsize)");

    auto *verify = app.add_subcommand("verify", "Run the identity and gradient-check suites");
    add_common(verify, common);

    std::vector<const char *> argv{"lstmkd"};
    for (const auto &a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError &e) {
        err << "error: usage: " << e.what() << '\n' << app.help();
        return 2;
    }

    try {
        if (*synth) return cmd_synth(common, out);
        if (*pseudo) return cmd_pseudo_labels(common, corpus, out);
        if (*train) return cmd_train_teacher(common, corpus, labels, out);
        if (*exp) return cmd_export_logits(common, corpus, teacher, out);
        if (*distill) return cmd_distill(common, dist, out);
        if (*probe) return cmd_probe(common, checkpoint, corpus, labels, out);
        if (*profile) return cmd_profile(common, prof, out);
        if (*params) return cmd_param_count(common, model_name, out);
        if (*verify) return cmd_verify(common, out, err);
    } catch (const Error &e) {
        err << "error: " << e.code() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception &e) {
        err << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

} // namespace lstmkd
