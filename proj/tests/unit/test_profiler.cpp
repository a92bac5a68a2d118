#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <regex>

#include "doctest.h"
#include "lstmkd/error.hpp"
#include "lstmkd/numerics/memory.hpp"
#include "lstmkd/numerics/ops.hpp"
#include "lstmkd/numerics/tensor.hpp"
#include "lstmkd/profiler/profiler.hpp"

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
    auto dir = std::filesystem::temp_directory_path() / "lstmkd_test_profiler";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path &p) {
    std::ifstream f(p);
    return {std::istreambuf_iterator<char>(f), {}};
}

ModelConfig small(const std::string &preset) {
    auto m = model_preset(preset);
    m.encoder_channels = 8;
    m.hidden = preset == "toy-lstm" ? 6 : 8;
    if (m.arch == Arch::Transformer) {
        m.ffn = 16;
        m.heads = 2;
        m.pos_conv_kernel = 3;
    }
    m.num_clusters = 5;
    return m;
}

} // namespace

TEST_CASE("count_macs equals the per-kernel tally of a real forward pass") {
    auto cosine = small("toy-teacher");
    cosine.head_projection = 4;
    auto no_norm = small("toy-lstm");
    no_norm.feature_norm = false;
    no_norm.num_layers = 3;
    for (const auto &config : {small("toy-lstm"), small("toy-transformer"), cosine, no_norm}) {
        const Model<float> model(config, 1);
        for (const double seconds : {0.05, 0.3, 0.71}) {
            const auto wave = profile_waveform(seconds, 2);
            CAPTURE(config.name);
            CAPTURE(seconds);
            CHECK(count_macs(config, wave.size()) == tally_macs(model, wave));
        }
    }
}

TEST_CASE("count_macs is a shape-only function with the documented closed form") {
    // one linear layer on T frames: head-only difference between two class counts
    auto a = small("toy-lstm"), b = a;
    b.num_clusters = a.num_clusters + 1;
    const std::size_t samples = 16000;
    const auto frames = a.frames_for(samples);
    CHECK(count_macs(b, samples) - count_macs(a, samples) == frames * a.layer_width());

    // the full-size LSTM student on one second of audio, by hand:
    const auto full = model_preset("lstm-fullsize");
    std::uint64_t expect = 0, len = 16000, in = 1;
    for (std::size_t i = 0; i < 7; ++i) {
        len = (len - full.encoder_kernels[i]) / full.encoder_strides[i] + 1;
        expect += len * full.encoder_kernels[i] * in * 512;
        in = 512;
    }
    CHECK(len == 49);
    expect += 2 * 49 * 4 * (512 * 384 + 384 * 384);
    expect += 3 * 2 * 49 * 4 * (768 * 384 + 384 * 384);
    expect += 49 * 768 * 500;
    CHECK(count_macs(full, 16000) == expect);

    CHECK(error_code([&] { count_macs(full, 399); }) == "input_too_short");
    auto broken = full;
    broken.hidden = 0;
    CHECK(error_code([&] { count_macs(broken, 16000); }) == "invalid_config");
}

TEST_CASE("MAC growth: BiLSTM exactly linear in T, transformer strictly convex") {
    const auto lstm = model_preset("toy-lstm"), tf = model_preset("toy-transformer");
    // uniform frame grid: n frames need 320 (n - 1) + 400 samples
    auto at = [](const ModelConfig &c, std::size_t frames) { return count_macs(c, 320 * (frames - 1) + 400); };
    for (std::size_t t = 50; t <= 1500; t += 50) {
        const auto l0 = at(lstm, t), l1 = at(lstm, t + 50), l2 = at(lstm, t + 100);
        CHECK(l2 - l1 == l1 - l0);
        const auto t0 = at(tf, t), t1 = at(tf, t + 50), t2 = at(tf, t + 100);
        CHECK(t2 - t1 > t1 - t0);
    }
    CHECK(double(at(tf, 1000)) / double(at(tf, 500)) > 2.0);
}

TEST_CASE("measure_peak_memory reports high-water bytes above the starting level") {
    REQUIRE(MemoryTracker::enabled());
    CHECK(MemoryTracker::kAllocationOverhead == 0);
    const auto held = Tensor<float>::zeros({500}); // live before the measurement starts
    CHECK(measure_peak_memory([] { auto t = Tensor<float>::zeros({1000}); }) == 4000);
    CHECK(measure_peak_memory([] {
              { auto a = Tensor<float>::zeros({1000}); }
              { auto b = Tensor<float>::zeros({1000}); }
          }) == 4000);
    CHECK(measure_peak_memory([] {
              auto a = Tensor<float>::zeros({1000});
              auto b = Tensor<float>::zeros({1000});
          }) == 8000);
    CHECK(measure_peak_memory([] { auto t = Tensor<double>::zeros({10, 10}); }) == 800);
    CHECK(held.numel() == 500);

    const Model<float> model(small("toy-lstm"), 0);
    const auto wave = profile_waveform(0.5);
    auto forward = [&] {
        NoGradGuard no_grad;
        model.forward(pack_waveforms<float>({std::span<const float>(wave)}));
    };
    const auto first = measure_peak_memory(forward);
    CHECK(first > 0);
    CHECK(measure_peak_memory(forward) == first);

    MemoryTracker::set_enabled(false);
    CHECK(error_code([&] { measure_peak_memory(forward); }) == "not_instrumented");
    MemoryTracker::set_enabled(true);
}

TEST_CASE("measure_time: warm-up plus repeats, mean inside [min, max]") {
    int calls = 0;
    const auto s = measure_time([&] { ++calls; }, 10);
    CHECK(calls == 11);
    CHECK(s.runs == 10);
    CHECK(s.mean_s >= 0.0);
    CHECK(s.mean_s < 1e-3);
    CHECK(s.min_s <= s.mean_s);
    CHECK(s.mean_s <= s.max_s);
    CHECK(error_code([] { measure_time([] {}, 0); }) == "invalid_argument");
    CHECK_THROWS_AS(measure_time([] { throw std::runtime_error("boom"); }), std::runtime_error);
}

TEST_CASE("BiLSTM peak memory is linear in utterance length") {
    const std::vector<double> lengths{1, 4, 8, 12, 16, 20, 25, 30};
    std::vector<double> x, y;
    for (const auto &r : sweep_profile({model_preset("toy-lstm")}, lengths, 1)) {
        x.push_back(r.seconds);
        y.push_back(double(r.peak_bytes));
    }
    const auto fit = fit_line(x, y);
    CHECK(fit.slope > 0.0);
    CHECK(fit.r_squared >= 0.99);
}

TEST_CASE("doubling the BiLSTM input roughly doubles its forward time") {
    const Model<float> model(model_preset("toy-lstm"), 0);
    auto timed = [&](double seconds) {
        const auto wave = profile_waveform(seconds);
        return measure_time(
                   [&] {
                       NoGradGuard no_grad;
                       model.forward(pack_waveforms<float>({std::span<const float>(wave)}));
                   },
                   5)
            .mean_s;
    };
    const double ratio = timed(8.0) / timed(4.0);
    MESSAGE("time(8 s) / time(4 s) = " << ratio);
    CHECK(ratio >= 1.6);
    CHECK(ratio <= 2.6);
}

TEST_CASE("fit_line recovers exact lines and reports R^2") {
    const auto exact = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
    CHECK(exact.slope == doctest::Approx(2.0));
    CHECK(exact.intercept == doctest::Approx(1.0));
    CHECK(exact.r_squared == doctest::Approx(1.0));
    const auto curved = fit_line({0, 1, 2, 3, 4}, {0, 1, 4, 9, 16});
    CHECK(curved.r_squared < 1.0);
    CHECK(curved.r_squared > 0.8);
    CHECK(error_code([] { fit_line({1}, {2}); }) == "invalid_argument");
}

TEST_CASE("sweep_profile: cross product, ordering, CSV round trip and SVG charts") {
    const auto csv = scratch("sweep.csv");
    std::filesystem::remove(csv);
    const auto records =
        sweep_profile({small("toy-transformer"), small("toy-lstm")}, {0.5, 0.1, 0.3, 0.2, 0.4}, 2, csv.string());
    REQUIRE(records.size() == 10);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto &r = records[i];
        CHECK(r.model == (i < 5 ? "toy-lstm" : "toy-transformer"));
        CHECK(r.runs == 2);
        CHECK(r.peak_bytes > 0);
        CHECK(r.min_time_s <= r.mean_time_s);
        CHECK(r.mean_time_s <= r.max_time_s);
        if (i % 5 != 0) {
            CHECK(r.seconds > records[i - 1].seconds);
        }
    }
    CHECK(records[0].macs == count_macs(small("toy-lstm"), profile_waveform(0.1).size()));

    // rows were flushed while sweeping, in the same order
    CHECK(read_profile_csv(csv.string()) == records);
    const auto text = slurp(csv);
    CHECK(text.rfind(std::string(kProfileCsvHeader) + "\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 11);

    const auto again = scratch("again.csv");
    write_profile_csv(again.string(), records);
    CHECK(read_profile_csv(again.string()) == records);
    std::ofstream(scratch("bad.csv")) << "model,seconds\nx,1\n";
    CHECK(error_code([&] { read_profile_csv(scratch("bad.csv").string()); }) != "");

    const auto files = write_profile_svgs(scratch("chart").string(), records);
    REQUIRE(files.size() == 3);
    for (const auto &f : files) {
        const auto svg = slurp(f);
        CHECK(svg.find("viewBox=\"0 0 800 400\"") != std::string::npos);
        CHECK(svg.find("</svg>") != std::string::npos);
        const std::regex polyline("<polyline");
        CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), polyline), std::sregex_iterator()) == 2);
        CHECK(svg.find("toy-lstm") != std::string::npos);
        CHECK(svg.find("toy-transformer") != std::string::npos);
        CHECK(svg.find("Utterance length (s)") != std::string::npos);
    }
    CHECK(render_profile_svg(records, ProfileMetric::Macs).find("GMAC") != std::string::npos);

    CHECK(error_code([] { sweep_profile({}, {1.0}, 1); }) == "invalid_argument");
    CHECK(error_code([] { sweep_profile({model_preset("toy-lstm")}, {}, 1); }) == "invalid_argument");
}
