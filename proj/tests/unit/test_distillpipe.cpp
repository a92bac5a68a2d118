#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>

#include "doctest.h"
#include "lstmkd/distillpipe/experiment.hpp"
#include "lstmkd/error.hpp"
#include "lstmkd/losses/losses.hpp"
#include "lstmkd/numerics/rng.hpp"

using namespace lstmkd;

namespace {

std::string error_code(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const Error &e) {
        return e.code();
    }
    return "";
}

std::filesystem::path scratch(const std::string &name) {
    auto dir = std::filesystem::temp_directory_path() / "lstmkd_test_distillpipe";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path &p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

ModelConfig tiny_teacher() {
    auto m = model_preset("toy-transformer");
    m.name = "tiny-teacher";
    m.encoder_channels = 16;
    m.num_layers = 2;
    m.hidden = 32;
    m.ffn = 64;
    m.heads = 2;
    m.pos_conv_kernel = 5;
    m.num_clusters = 8;
    return m;
}

ModelConfig tiny_student() {
    auto m = model_preset("toy-lstm");
    m.name = "tiny-student";
    m.encoder_channels = 16;
    m.hidden = 12;
    m.num_clusters = 8;
    return m;
}

TrainConfig short_run(std::size_t steps) {
    TrainConfig t;
    t.total_steps = steps;
    t.warmup_steps = steps / 5;
    t.peak_lr = 1e-3;
    t.batch_size = 3;
    t.mask_span = 3;
    t.seed = 11;
    return t;
}

// Small corpus with k-means labels, built once for the whole file.
struct Fixture {
    Dataset data;
    Dataset train, heldout;
    Model<float> teacher{tiny_teacher(), 3};
    LogitCache cache;
    std::filesystem::path ckpt;

    Fixture() {
        SynthConfig s;
        s.num_utterances = 12;
        s.min_seconds = 0.4;
        s.max_seconds = 0.6;
        s.num_latent_classes = 8;
        s.seed = 5;
        std::vector<Waveform> waves;
        for (auto &u : synth_corpus(s)) {
            waves.push_back(std::move(u.wave));
        }
        PseudoLabelConfig pl;
        pl.num_clusters = 8;
        pl.restarts = 1;
        data = make_dataset(waves, make_pseudo_labels(waves, pl, 5), tiny_teacher());
        std::tie(train, heldout) = split_heldout(data, 0.25);
        teacher = train_teacher(train, tiny_teacher(), short_run(6));
        ckpt = scratch("teacher.ckpt");
        save_checkpoint(ckpt.string(), teacher);
        cache = export_teacher_logits(teacher, data, file_sha256(ckpt.string()));
    }
};

const Fixture &fixture() {
    static const Fixture f;
    return f;
}

template <typename S>
bool same_parameters(const Model<S> &a, const Model<S> &b) {
    const auto &pa = a.parameters(), &pb = b.parameters();
    if (pa.size() != pb.size()) {
        return false;
    }
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const auto x = pa[i].value.data(), y = pb[i].value.data();
        if (pa[i].name != pb[i].name || !std::equal(x.begin(), x.end(), y.begin(), y.end())) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("lr_schedule: warm-up ramp, peak at the end of warm-up, decay to zero") {
    TrainConfig t;
    t.total_steps = 1000;
    t.warmup_steps = 100;
    t.peak_lr = 1e-3;
    CHECK(lr_schedule(0, t) == 0.0);
    CHECK(lr_schedule(50, t) == doctest::Approx(5e-4).epsilon(1e-15));
    CHECK(lr_schedule(100, t) == 1e-3);
    CHECK(lr_schedule(550, t) == doctest::Approx(5e-4).epsilon(1e-15));
    CHECK(lr_schedule(1000, t) == 0.0);
    CHECK(error_code([&] { lr_schedule(1001, t); }) == "invalid_argument");

    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t k = 0; k <= t.total_steps; ++k) {
        const double lr = lr_schedule(k, t);
        if (lr > best) {
            best = lr;
            arg = k;
        }
        if (k > 0) {
            // continuous and piecewise linear: no jump larger than one slope step
            CHECK(std::abs(lr - lr_schedule(k - 1, t)) <= 1e-5 + 1e-18);
        }
    }
    CHECK(best == t.peak_lr);
    CHECK(arg == t.warmup_steps);

    // the full-shape schedule: 14k warm-up updates to 2e-4 over 200k
    const auto full = experiment_preset("paper-shape").distill;
    CHECK(lr_schedule(14000, full) == 2e-4);
    CHECK(lr_schedule(7000, full) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(lr_schedule(200000, full) == 0.0);

    t.warmup_steps = 0;
    CHECK(lr_schedule(0, t) == 1e-3);
}

TEST_CASE("smooth is an exponential moving average with factor 2/(window+1)") {
    const auto s = smooth({1.0, 2.0, 4.0}, 3);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == 1.0);
    CHECK(s[1] == doctest::Approx(1.5));
    CHECK(s[2] == doctest::Approx(2.75));
    CHECK(smooth({}, 100).empty());
}

TEST_CASE("metrics CSV rereads to the same doubles") {
    const auto path = scratch("metrics.csv").string();
    {
        MetricsLog log(path);
        log.append({1, 1.0 / 3.0, std::nextafter(2.0, 3.0), 0.1, 2.1000000000000001, 0.25});
        log.append({2, 1e-300, 5e-324, 123456789.125, -0.0, 1.0});
    }
    MetricsLog in_memory;
    in_memory.append({1, 1.0 / 3.0, std::nextafter(2.0, 3.0), 0.1, 2.1000000000000001, 0.25});
    const auto rows = read_metrics_csv(path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].lr == 1.0 / 3.0);
    CHECK(rows[0].ce == std::nextafter(2.0, 3.0));
    CHECK(rows[0].total == in_memory.rows()[0].total);
    CHECK(rows[1].ce == 5e-324);
    CHECK(rows[1].kd_or_dkd == 123456789.125);
    CHECK(slurp(path).rfind("step,lr,ce,kd_or_dkd,total,agreement\n", 0) == 0);

    std::ofstream(scratch("bad.csv")) << "step,lr\n1,2\n";
    CHECK(error_code([&] { read_metrics_csv(scratch("bad.csv").string()); }) == "malformed_metrics");
}

TEST_CASE("datasets: label pairing, held-out split and batch order") {
    const auto &f = fixture();
    CHECK(f.data.items.size() == 12);
    CHECK(f.train.items.size() == 9);
    CHECK(f.heldout.items.size() == 3);
    CHECK(f.heldout.items.front().id == f.data.items[9].id);
    for (const auto &u : f.data.items) {
        CHECK(u.labels.size() == tiny_teacher().frames_for(u.samples.size()));
    }

    Waveform orphan{std::vector<float>(8000, 0.0f), 16000, "orphan"};
    CHECK(error_code([&] {
              make_dataset({orphan}, {{"someone-else", {0, 1}, 8}}, tiny_teacher());
          }) == "missing_labels");
    CHECK(error_code([&] { split_heldout(f.data, 1.0); }) == "invalid_argument");

    const auto a = batch_schedule(10, 4, 5, 7), b = batch_schedule(10, 4, 5, 7), c = batch_schedule(10, 4, 5, 8);
    CHECK(a == b);
    CHECK(a != c);
    // the first ten draws are one epoch: a permutation of all items
    std::multiset<std::size_t> first;
    for (std::size_t i = 0; i < 10; ++i) {
        first.insert(a[i / 4][i % 4]);
    }
    CHECK(first == std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("train_teacher: zero steps is the initialisation; reruns are identical") {
    const auto &f = fixture();
    const auto init = train_teacher(f.train, tiny_teacher(), short_run(0));
    CHECK(same_parameters(init, Model<float>(tiny_teacher(), short_run(0).seed)));

    MetricsLog la, lb;
    const auto a = train_teacher(f.train, tiny_teacher(), short_run(4), &la);
    const auto b = train_teacher(f.train, tiny_teacher(), short_run(4), &lb);
    CHECK(same_parameters(a, b));
    CHECK_FALSE(same_parameters(a, init));
    REQUIRE(la.rows().size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(la.rows()[i].total == lb.rows()[i].total);
        CHECK(la.rows()[i].step == i + 1);
        CHECK(la.rows()[i].lr == lr_schedule(i + 1, short_run(4)));
    }

    auto wrong = tiny_teacher();
    wrong.num_clusters = 9;
    CHECK(error_code([&] { train_teacher(f.train, wrong, short_run(1)); }) == "checkpoint_mismatch");
}

TEST_CASE("logit cache: live argmax, one record per utterance, byte-identical re-export") {
    const auto &f = fixture();
    const auto C = f.cache.num_clusters;
    CHECK(C == 8);
    REQUIRE(f.cache.records.size() == f.data.items.size());
    for (const auto &u : f.data.items) {
        const auto &rec = f.cache.find(u.id);
        const auto live = utterance_logits(f.teacher, u.samples);
        REQUIRE(live.size() == rec.frames * C);
        for (std::size_t t = 0; t < rec.frames; ++t) {
            const auto row = rec.logits.begin() + std::ptrdiff_t(t * C);
            const auto live_row = live.begin() + std::ptrdiff_t(t * C);
            CHECK(std::max_element(row, row + std::ptrdiff_t(C)) - row ==
                  std::max_element(live_row, live_row + std::ptrdiff_t(C)) - live_row);
        }
    }

    const auto p1 = scratch("logits1.bin"), p2 = scratch("logits2.bin");
    write_logit_cache(p1.string(), f.cache);
    const auto reloaded_teacher = load_checkpoint<float>(f.ckpt.string());
    write_logit_cache(p2.string(),
                      export_teacher_logits(reloaded_teacher, f.data, file_sha256(f.ckpt.string())));
    CHECK(slurp(p1) == slurp(p2));

    const auto back = read_logit_cache(p1.string());
    CHECK(back.teacher_hash == f.cache.teacher_hash);
    CHECK(back.records.size() == f.cache.records.size());
    CHECK(back.records.front().logits == f.cache.records.front().logits);
    CHECK(error_code([&] { back.find("nope"); }) != "");

    std::ofstream(scratch("garbage.bin")) << "LKDLABEL";
    CHECK(error_code([&] { read_logit_cache(scratch("garbage.bin").string()); }) != "");
}

TEST_CASE("distill_student rejects a cache from a different teacher") {
    const auto &f = fixture();
    CHECK(error_code([&] {
              distill_student<float>(f.train, f.cache, tiny_student(), short_run(1), nullptr, std::string(64, '0'));
          }) == "cache_mismatch");
    auto wrong = tiny_student();
    wrong.num_clusters = 7;
    CHECK(error_code([&] { distill_student<float>(f.train, f.cache, wrong, short_run(1)); }) == "cache_mismatch");
    // the matching hash is accepted
    CHECK_NOTHROW(distill_student<float>(f.train, f.cache, tiny_student(), short_run(1), nullptr,
                                         file_sha256(f.ckpt.string())));
}

TEST_CASE("distill_weight = 0 is plain CE training: the teacher logits do not matter") {
    const auto &f = fixture();
    auto tc = short_run(4);
    tc.distill_weight = 0.0;
    auto scrambled = f.cache;
    Rng rng(1);
    for (auto &r : scrambled.records) {
        for (auto &v : r.logits) {
            v = static_cast<float>(rng.normal(0.0, 3.0));
        }
    }
    MetricsLog la, lb;
    const auto a = distill_student<float>(f.train, f.cache, tiny_student(), tc, &la);
    const auto b = distill_student<float>(f.train, scrambled, tiny_student(), tc, &lb);
    CHECK(same_parameters(a, b));
    for (std::size_t i = 0; i < la.rows().size(); ++i) {
        CHECK(la.rows()[i].total == lb.rows()[i].total);
        CHECK(la.rows()[i].total == la.rows()[i].ce);
    }
}

TEST_CASE("distill_student is deterministic and the loss terms are logged") {
    const auto &f = fixture();
    for (const auto mode : {DistillMode::Kd, DistillMode::Dkd}) {
        auto tc = short_run(3);
        tc.mode = mode;
        tc.beta = 4.0;
        MetricsLog la, lb;
        const auto a = distill_student<float>(f.train, f.cache, tiny_student(), tc, &la);
        const auto b = distill_student<float>(f.train, f.cache, tiny_student(), tc, &lb);
        CHECK(same_parameters(a, b));
        REQUIRE(la.rows().size() == 3);
        for (const auto &r : la.rows()) {
            CHECK(r.total == doctest::Approx(r.ce + r.kd_or_dkd).epsilon(1e-5));
            CHECK(r.kd_or_dkd >= 0.0);
            CHECK(r.agreement >= 0.0);
            CHECK(r.agreement <= 1.0);
        }
    }
    auto masked = short_run(3);
    masked.mask_student_input = true;
    masked.mask_prob = 0.3;
    const auto m1 = distill_student<float>(f.train, f.cache, tiny_student(), masked);
    const auto m2 = distill_student<float>(f.train, f.cache, tiny_student(), masked);
    CHECK(same_parameters(m1, m2));
    CHECK_FALSE(same_parameters(m1, distill_student<float>(f.train, f.cache, tiny_student(), short_run(3))));

    const double agree = teacher_agreement(Model<float>(tiny_student(), 0), f.heldout, f.cache);
    CHECK(agree >= 0.0);
    CHECK(agree <= 1.0);
}

TEST_CASE("float64 verification: KD and DKD with beta = 1 - p_target follow the same trajectory") {
    if (!extended_precision_available()) {
        MESSAGE("binary128 unavailable; skipped");
        return;
    }
    const auto &f = fixture();
    auto kd = short_run(8);
    kd.tau = 2.0;
    auto dkd = kd;
    dkd.mode = DistillMode::Dkd;
    dkd.alpha = 1.0;
    dkd.dynamic_beta = true;
    MetricsLog la, lb;
    const auto a = distill_student<double>(f.train, f.cache, tiny_student(), kd, &la);
    const auto b = distill_student<double>(f.train, f.cache, tiny_student(), dkd, &lb);
    CHECK(same_parameters(a, b));
    for (std::size_t i = 0; i < la.rows().size(); ++i) {
        CHECK(la.rows()[i].total == lb.rows()[i].total);
        CHECK(la.rows()[i].kd_or_dkd == lb.rows()[i].kd_or_dkd);
    }

    // a fixed beta is a different objective
    auto fixed = dkd;
    fixed.dynamic_beta = false;
    fixed.beta = 4.0;
    MetricsLog lc;
    distill_student<double>(f.train, f.cache, tiny_student(), fixed, &lc);
    CHECK(lc.rows().front().kd_or_dkd != la.rows().front().kd_or_dkd);
}

TEST_CASE("probe: a single layer collapses the featurizer; fixed seed gives an identical report") {
    Rng rng(3);
    auto make = [&](std::size_t n) {
        std::vector<LayerFeatures> out(n);
        for (auto &f : out) {
            f.width = 4;
            std::vector<float> x;
            for (std::size_t t = 0; t < 10; ++t) {
                const auto label = rng.below(3);
                f.labels.push_back(label);
                for (std::size_t d = 0; d < 4; ++d) {
                    x.push_back(static_cast<float>((d == label ? 2.0 : 0.0) + rng.normal(0.0, 0.3)));
                }
            }
            f.layers.push_back(x);
        }
        return out;
    };
    const auto train = make(8), heldout = make(3);
    ProbeConfig pc;
    pc.steps = 100;
    pc.batch_frames = 32;
    const auto weighted = probe_features(train, heldout, 3, pc);
    const auto direct = probe_features(train, heldout, 3, pc, true);
    CHECK(weighted.heldout_accuracy == direct.heldout_accuracy);
    CHECK(weighted.layer_weights == std::vector<double>{1.0});
    CHECK(weighted.heldout_frames == 30);
    CHECK(weighted.train_frames == 80);
    CHECK(weighted.heldout_accuracy > 0.9); // separable classes

    const auto again = probe_features(train, heldout, 3, pc);
    CHECK(again.heldout_accuracy == weighted.heldout_accuracy);
    CHECK(again.layer_weights == weighted.layer_weights);

    const auto &f = fixture();
    ProbeConfig small;
    small.steps = 20;
    const auto r1 = probe_eval(f.teacher, f.train, f.heldout, small);
    const auto r2 = probe_eval(f.teacher, f.train, f.heldout, small);
    CHECK(r1.heldout_accuracy == r2.heldout_accuracy);
    CHECK(r1.layer_weights == r2.layer_weights);
    CHECK(r1.layer_weights.size() == tiny_teacher().num_layers);
    double sum = 0.0;
    for (const auto w : r1.layer_weights) {
        sum += w;
    }
    CHECK(sum == doctest::Approx(1.0));
}

TEST_CASE("experiment configs: presets, merging and rejection of bad documents") {
    for (const auto &name : experiment_preset_names()) {
        CHECK_NOTHROW(experiment_preset(name).validate());
    }
    CHECK(error_code([] { experiment_preset("huge"); }) == "unknown_preset");

    const auto toy = experiment_from_json(nlohmann::json::object());
    CHECK(to_json(toy) == to_json(experiment_preset("toy")));
    CHECK(toy.teacher_model.name == "toy-teacher");
    CHECK(toy.student_model.name == "toy-lstm");

    auto patched = experiment_from_json({{"seed", 9}, {"distill", {{"beta", 4.0}, {"mode", "dkd"}}}});
    CHECK(patched.seed == 9);
    CHECK(patched.distill.seed == 9);
    CHECK(patched.teacher_train.seed == 9);
    CHECK(patched.synth.seed == 9);
    CHECK(patched.distill.beta == 4.0);
    CHECK(patched.distill.mode == DistillMode::Dkd);
    CHECK(patched.distill.total_steps == toy.distill.total_steps);

    // a model section naming its own preset replaces the inherited one
    const auto swapped = experiment_from_json({{"student_model", {{"preset", "toy-transformer"}}}});
    CHECK(swapped.student_model.arch == Arch::Transformer);
    const auto tweaked = experiment_from_json({{"student_model", {{"hidden", 48}}}});
    CHECK(tweaked.student_model.hidden == 48);
    CHECK(tweaked.student_model.arch == Arch::BiLstm);

    // to_json round-trips
    CHECK(to_json(experiment_from_json(to_json(patched))) == to_json(patched));

    CHECK(error_code([] { experiment_from_json({{"distill", {{"seed", 3}}}}); }) == "invalid_config");
    CHECK(error_code([] { experiment_from_json({{"bogus", 1}}); }) == "invalid_config");
    CHECK(error_code([] { experiment_from_json({{"distill", {{"warmpu_steps", 1}}}}); }) == "invalid_config");
    CHECK(error_code([] { experiment_from_json({{"version", 2}}); }) == "unsupported_version");
    CHECK(error_code([] { experiment_from_json({{"heldout_fraction", 1.5}}); }) == "invalid_config");
    CHECK(error_code([] { experiment_from_json({{"student_model", {{"num_clusters", 7}}}}); }) ==
          "invalid_config");

    const auto path = scratch("experiment.json");
    std::ofstream(path) << R"({"preset": "paper-shape", "distill": {"total_steps": 10, "warmup_steps": 1}})";
    const auto loaded = load_experiment_config(path.string());
    CHECK(loaded.preset == "paper-shape");
    CHECK(loaded.teacher_model.num_layers == 24);
    CHECK(loaded.distill.total_steps == 10);
    CHECK(to_json(load_experiment_config("")) == to_json(toy));
}
