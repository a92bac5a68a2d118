#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include "doctest.h"
#include "lstmkd/error.hpp"
#include "lstmkd/models/config.hpp"
#include "lstmkd/numerics/rng.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

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
    auto dir = std::filesystem::temp_directory_path() / "lstmkd_test_speechdata";
    std::filesystem::create_directories(dir);
    return dir / name;
}

// Minimal hand-rolled PCM WAV so the reader is not only tested against its own writer.
void write_raw_wav(const std::filesystem::path &path, std::uint16_t channels, std::uint32_t rate,
                   std::uint16_t bits, const std::vector<std::int16_t> &samples, std::uint16_t format = 1) {
    std::string b;
    auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            b.push_back(char((v >> (8 * i)) & 0xff));
        }
    };
    auto u16 = [&](std::uint16_t v) {
        b.push_back(char(v & 0xff));
        b.push_back(char(v >> 8));
    };
    const auto data_bytes = std::uint32_t(samples.size() * 2);
    b += "RIFF";
    u32(36 + data_bytes + 10);
    b += "WAVE";
    b += "LIST"; // an unrelated chunk the reader has to skip
    u32(2);
    b += "ab";
    b += "fmt ";
    u32(16);
    u16(format);
    u16(channels);
    u32(rate);
    u32(rate * channels * bits / 8);
    u16(std::uint16_t(channels * bits / 8));
    u16(bits);
    b += "data";
    u32(data_bytes);
    for (auto s : samples) {
        u16(std::uint16_t(s));
    }
    std::ofstream(path, std::ios::binary).write(b.data(), std::streamsize(b.size()));
}

Waveform tone(double hz, std::size_t n, double amp = 0.5, double phase = 0.0) {
    Waveform w;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        w.samples[i] = float(amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / 16000.0 + phase));
    }
    return w;
}

// Best agreement between two labelings over all permutations of k labels (k small).
double permuted_agreement(const std::vector<std::size_t> &a, const std::vector<std::size_t> &b, std::size_t k) {
    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) {
        perm[i] = i;
    }
    double best = 0.0;
    do {
        std::size_t hit = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            hit += perm[a[i]] == b[i];
        }
        best = std::max(best, double(hit) / double(a.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

FeatureMatrix random_matrix(Rng &rng, std::size_t rows, std::size_t cols) {
    FeatureMatrix m{rows, cols, std::vector<double>(rows * cols)};
    for (auto &v : m.values) {
        v = rng.normal();
    }
    return m;
}

} // namespace

TEST_CASE("read_wav scaling and contract") {
    const auto path = scratch("a.wav");
    write_raw_wav(path, 1, 16000, 16, std::vector<std::int16_t>(7, 0));
    auto w = read_wav(path.string());
    CHECK(w.samples == std::vector<float>(7, 0.0f));
    CHECK(w.sample_rate == 16000);

    write_raw_wav(path, 1, 16000, 16, {-32768, 16384, 32767, -1});
    w = read_wav(path.string(), 16000);
    REQUIRE(w.samples.size() == 4);
    CHECK(w.samples[0] == -1.0f);
    CHECK(w.samples[1] == 0.5f);
    CHECK(w.samples[2] < 1.0f);
    CHECK(w.samples[3] == -1.0f / 32768.0f);

    write_raw_wav(path, 2, 16000, 16, {1, 2, 3, 4});
    CHECK(error_code([&] { read_wav(path.string()); }) == "unsupported_format");
    write_raw_wav(path, 1, 16000, 8, {1, 2});
    CHECK(error_code([&] { read_wav(path.string()); }) == "unsupported_format");
    write_raw_wav(path, 1, 16000, 16, {1, 2}, 3);
    CHECK(error_code([&] { read_wav(path.string()); }) == "unsupported_format");
    write_raw_wav(path, 1, 8000, 16, {1, 2});
    CHECK(error_code([&] { read_wav(path.string(), 16000); }) == "sample_rate_mismatch");
    CHECK(read_wav(path.string()).sample_rate == 8000);

    std::ofstream(path, std::ios::binary) << "RIFFxxxxWAVE";
    CHECK(error_code([&] { read_wav(path.string()); }) == "malformed_wav");
    std::ofstream(path, std::ios::binary) << "not a wav at all";
    CHECK(error_code([&] { read_wav(path.string()); }) == "malformed_wav");
    CHECK(error_code([&] { read_wav(scratch("missing.wav").string()); }) == "io_error");
}

TEST_CASE("write_wav round trip is exact on the PCM16 grid") {
    Waveform w;
    w.sample_rate = 16000;
    for (int v : {-32768, -12345, -1, 0, 1, 777, 32767}) {
        w.samples.push_back(float(v) / 32768.0f);
    }
    const auto path = scratch("rt.wav");
    write_wav(path.string(), w);
    CHECK(read_wav(path.string()).samples == w.samples);

    w.samples = {2.0f, -3.0f};
    write_wav(path.string(), w);
    const auto clamped = read_wav(path.string()).samples;
    CHECK(clamped[0] == 32767.0f / 32768.0f);
    CHECK(clamped[1] == -1.0f);
}

TEST_CASE("synth_corpus is deterministic and recorded per frame") {
    SynthConfig cfg;
    cfg.num_utterances = 4;
    cfg.seed = 11;
    const auto a = synth_corpus(cfg);
    const auto b = synth_corpus(cfg);
    REQUIRE(a.size() == 4);
    for (std::size_t u = 0; u < a.size(); ++u) {
        CHECK(a[u].wave.samples == b[u].wave.samples);
        CHECK(a[u].latent == b[u].latent);
        CHECK(a[u].wave.samples.size() == a[u].latent.size() * cfg.frame_hop);
        CHECK(a[u].wave.samples.size() >= std::size_t(cfg.min_seconds * 16000) - cfg.frame_hop);
        CHECK(a[u].wave.samples.size() <= std::size_t(cfg.max_seconds * 16000));
        for (float s : a[u].wave.samples) {
            REQUIRE((s >= -1.0f && s < 1.0f));
        }
        for (auto c : a[u].latent) {
            REQUIRE(c < cfg.num_latent_classes);
        }
    }
    cfg.seed = 12;
    CHECK(synth_corpus(cfg)[0].wave.samples != a[0].wave.samples);

    const auto dir = scratch("corpus");
    std::filesystem::remove_all(dir);
    cfg.seed = 11;
    write_corpus(dir.string(), a);
    const auto back = read_corpus(dir.string());
    REQUIRE(back.size() == a.size());
    for (std::size_t u = 0; u < a.size(); ++u) {
        CHECK(back[u].wave.id == a[u].wave.id);
        CHECK(back[u].wave.samples == a[u].wave.samples);
        CHECK(back[u].latent == a[u].latent);
    }
    const auto dir2 = scratch("corpus2");
    std::filesystem::remove_all(dir2);
    write_corpus(dir2.string(), synth_corpus(cfg));
    for (const auto &entry : std::filesystem::directory_iterator(dir)) {
        std::ifstream x(entry.path(), std::ios::binary), y(dir2 / entry.path().filename(), std::ios::binary);
        const std::string sx{std::istreambuf_iterator<char>(x), {}}, sy{std::istreambuf_iterator<char>(y), {}};
        CHECK(sx == sy);
    }

    CHECK(error_code([&] { read_corpus(dir.string(), 8000); }) == "sample_rate_mismatch");
    CHECK(error_code([&] { read_corpus(scratch("nowhere").string()); }) == "missing_input");
    SynthConfig bad;
    bad.num_utterances = 0;
    CHECK(error_code([&] { synth_corpus(bad); }) == "invalid_config");
}

TEST_CASE("one latent class gives one cluster") {
    SynthConfig cfg;
    cfg.num_utterances = 3;
    cfg.num_latent_classes = 1;
    cfg.seed = 5;
    FeatureMatrix all{0, 13, {}};
    for (const auto &u : synth_corpus(cfg)) {
        const auto f = mfcc(u.wave);
        all.values.insert(all.values.end(), f.values.begin(), f.values.end());
        all.rows += f.rows;
    }
    const auto fit = kmeans_fit(all, 1, 50, 1);
    const auto labels = kmeans_assign(all, fit.centroids);
    CHECK(std::all_of(labels.begin(), labels.end(), [](std::size_t z) { return z == 0; }));
    CHECK(fit.converged);
}

TEST_CASE("two disjoint classes are recovered by mfcc k-means") {
    SynthConfig cfg;
    cfg.num_utterances = 8;
    cfg.num_latent_classes = 2;
    cfg.seed = 21;
    const auto corpus = synth_corpus(cfg);
    FeatureMatrix all{0, 13, {}};
    std::vector<std::size_t> truth;
    for (const auto &u : corpus) {
        const auto f = mfcc(u.wave);
        all.values.insert(all.values.end(), f.values.begin(), f.values.end());
        all.rows += f.rows;
        // MFCC frame t starts at sample 320 t, inside latent block t.
        truth.insert(truth.end(), u.latent.begin(), u.latent.begin() + std::ptrdiff_t(f.rows));
    }
    const auto fit = kmeans_fit(all, 2, 100, 3);
    const double agreement = permuted_agreement(kmeans_assign(all, fit.centroids), truth, 2);
    CHECK(agreement >= 0.90);
}

TEST_CASE("mfcc examples") {
    Waveform silence;
    silence.samples.assign(16000, 0.0f);
    const auto s = mfcc(silence);
    CHECK(s.cols == 13);
    for (std::size_t t = 1; t < s.rows; ++t) {
        for (std::size_t c = 0; c < s.cols; ++c) {
            REQUIRE(s.at(t, c) == s.at(0, c));
        }
    }
    // floor -> every log-mel is log(floor); only c0 is non-zero
    CHECK(s.at(0, 0) == doctest::Approx(std::log(1e-10) * std::sqrt(26.0)).epsilon(1e-12));
    CHECK(std::abs(s.at(0, 1)) < 1e-9);

    for (std::size_t n : {400u, 401u, 719u, 720u, 16000u, 23456u}) {
        Waveform w;
        w.samples.assign(n, 0.0f);
        CHECK(mfcc(w).rows == (n - 400) / 320 + 1);
    }
    Waveform tiny;
    tiny.samples.assign(399, 0.0f);
    CHECK(error_code([&] { mfcc(tiny); }) == "input_too_short");
    CHECK(error_code([&] { mfcc(silence, MfccConfig{.num_mel = 10, .num_ceps = 13}); }) == "invalid_config");

    // Within-tone spread (different phases) vs the distance between the two tones.
    auto mean_row = [](const FeatureMatrix &f) {
        std::vector<double> m(f.cols, 0.0);
        for (std::size_t t = 0; t < f.rows; ++t) {
            for (std::size_t c = 0; c < f.cols; ++c) {
                m[c] += f.at(t, c) / double(f.rows);
            }
        }
        return m;
    };
    double spread = 0.0;
    std::vector<std::vector<double>> low, high;
    for (double phase : {0.0, 0.7, 1.9, 3.1}) {
        const auto a = mfcc(tone(440.0, 8000, 0.5, phase));
        const auto b = mfcc(tone(3000.0, 8000, 0.5, phase));
        low.push_back(mean_row(a));
        high.push_back(mean_row(b));
        for (const auto *f : {&a, &b}) {
            for (std::size_t t = 0; t < f->rows; ++t) {
                const auto m = mean_row(*f);
                spread = std::max(spread, std::sqrt(squared_distance(f->values.data() + t * f->cols, m.data(), 13)));
            }
        }
    }
    for (const auto &l : low) {
        for (const auto &l2 : low) {
            spread = std::max(spread, std::sqrt(squared_distance(l.data(), l2.data(), 13)));
        }
    }
    const double between = std::sqrt(squared_distance(low[0].data(), high[0].data(), 13));
    CHECK(between > 5.0 * spread);
}

TEST_CASE("kmeans_fit examples") {
    FeatureMatrix one{1, 3, {1.5, -2.0, 4.0}};
    const auto fit = kmeans_fit(one, 1, 10, 0);
    CHECK(fit.centroids.values == one.values);
    CHECK(fit.inertia_history.front() == 0.0);

    CHECK(error_code([&] { kmeans_fit(one, 2, 10, 0); }) == "invalid_argument");
    CHECK(error_code([&] { kmeans_fit(one, 0, 10, 0); }) == "invalid_argument");

    // Two blobs, sigma 1, 200 points each.
    const std::size_t half = 200;
    const double sigma = 1.0, tol = 3.0 * sigma / std::sqrt(double(half));
    const double mu[2][2] = {{0.0, 0.0}, {10.0, -6.0}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        FeatureMatrix x{2 * half, 2, std::vector<double>(4 * half)};
        for (std::size_t i = 0; i < 2 * half; ++i) {
            const std::size_t b = i % 2;
            x.values[2 * i] = mu[b][0] + sigma * rng.normal();
            x.values[2 * i + 1] = mu[b][1] + sigma * rng.normal();
        }
        const auto r = kmeans_fit(x, 2, 100, seed);
        CHECK(r.converged);
        for (const auto &m : mu) {
            const std::size_t j = std::abs(r.centroids.at(0, 0) - m[0]) < std::abs(r.centroids.at(1, 0) - m[0]) ? 0 : 1;
            CHECK(std::abs(r.centroids.at(j, 0) - m[0]) <= tol);
            CHECK(std::abs(r.centroids.at(j, 1) - m[1]) <= tol);
        }
    }
}

TEST_CASE("kmeans inertia is non-increasing on 100 random datasets") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 20 + rng.below(200), d = 1 + rng.below(6), k = 1 + rng.below(10);
        auto x = random_matrix(rng, n, d);
        const auto r = kmeans_fit(x, k, 100, std::uint64_t(trial));
        REQUIRE(!r.inertia_history.empty());
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            REQUIRE(r.inertia_history[i] <= r.inertia_history[i - 1]);
        }
    }
}

TEST_CASE("empty clusters are reseeded") {
    // Duplicate points make k-means++ pick coincident seeds; every cluster must end up used.
    FeatureMatrix x{6, 1, {0.0, 0.0, 0.0, 0.0, 5.0, 9.0}};
    const auto r = kmeans_fit(x, 3, 50, 4);
    auto labels = kmeans_assign(x, r.centroids);
    std::sort(labels.begin(), labels.end());
    CHECK(std::unique(labels.begin(), labels.end()) - labels.begin() == 3);
}

TEST_CASE("kmeans_assign examples and brute-force agreement") {
    FeatureMatrix c{6, 2, {0, 0, 1, 1, -1, 0, 2, 2, 5, 5, -1, 2}};
    FeatureMatrix at_j{1, 2, {2, 2}};
    CHECK(kmeans_assign(at_j, c) == std::vector<std::size_t>{3});
    // (-1, 1) is at squared distance 1 from centroid 2 (-1,0) and centroid 5 (-1,2).
    FeatureMatrix tie{1, 2, {-1, 1}};
    CHECK(kmeans_assign(tie, c) == std::vector<std::size_t>{2});
    FeatureMatrix wrong{1, 3, {0, 0, 0}};
    CHECK(error_code([&] { kmeans_assign(wrong, c); }) == "shape_mismatch");

    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng.below(5), k = 1 + rng.below(12);
        const auto cent = random_matrix(rng, k, d);
        auto x = random_matrix(rng, 300, d);
        // plant exact copies of centroids so ties and zero distances occur
        for (std::size_t i = 0; i < k; ++i) {
            std::copy_n(cent.values.begin() + std::ptrdiff_t(i * d), d, x.values.begin() + std::ptrdiff_t(i * d));
        }
        const auto labels = kmeans_assign(x, cent);
        for (std::size_t i = 0; i < x.rows; ++i) {
            std::size_t best = 0;
            double best_d = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t e = 0; e < d; ++e) {
                    const double diff = x.at(i, e) - cent.at(j, e);
                    s += diff * diff;
                }
                if (j == 0 || s < best_d) {
                    best_d = s;
                    best = j;
                }
            }
            REQUIRE(labels[i] == best);
        }
    }
}

TEST_CASE("pseudo-label pipeline is deterministic and the cache round-trips") {
    auto run = [] {
        SynthConfig cfg;
        cfg.num_utterances = 3;
        cfg.num_latent_classes = 4;
        cfg.seed = 8;
        std::vector<FeatureMatrix> feats;
        FeatureMatrix all{0, 13, {}};
        std::vector<std::string> ids;
        for (const auto &u : synth_corpus(cfg)) {
            feats.push_back(mfcc(u.wave));
            all.values.insert(all.values.end(), feats.back().values.begin(), feats.back().values.end());
            all.rows += feats.back().rows;
            ids.push_back(u.wave.id);
        }
        const auto fit = kmeans_fit(all, 4, 100, 2);
        std::vector<PseudoLabelSequence> out;
        for (std::size_t i = 0; i < feats.size(); ++i) {
            out.push_back({ids[i], kmeans_assign(feats[i], fit.centroids), 4});
        }
        return out;
    };
    const auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].labels == b[i].labels);
    }

    const auto path = scratch("labels.bin");
    write_label_cache(path.string(), a);
    const auto back = read_label_cache(path.string());
    REQUIRE(back.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(back[i].utterance_id == a[i].utterance_id);
        CHECK(back[i].labels == a[i].labels);
        CHECK(back[i].num_clusters == 4);
    }

    std::ifstream in(path, std::ios::binary);
    std::string bytes{std::istreambuf_iterator<char>(in), {}};
    in.close();
    CHECK(bytes.substr(0, 8) == "LKDLABEL");
    CHECK(bytes[8] == 1);
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 1);
    CHECK(error_code([&] { read_label_cache(path.string()); }) == "malformed_labels");
    bytes[8] = 9;
    std::ofstream(path, std::ios::binary) << bytes;
    CHECK(error_code([&] { read_label_cache(path.string()); }) == "unsupported_version");

    auto bad = a;
    bad[0].labels[0] = 4;
    CHECK(error_code([&] { write_label_cache(path.string(), bad); }) == "label_out_of_range");
}

TEST_CASE("label length matches encoder frames after alignment") {
    const auto cfg = model_preset("lstm-fullsize");
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 400 + rng.below(64000);
        Waveform w;
        w.samples.assign(n, 0.0f);
        const auto labels = std::vector<std::size_t>(mfcc(w).rows, 0);
        const std::size_t frames = cfg.frames_for(n);
        const auto aligned = align_labels(labels, frames);
        REQUIRE(aligned.size() == std::min(labels.size(), frames));
        REQUIRE(labels.size() + 1 >= frames);
        REQUIRE(frames + 1 >= labels.size());
    }
    CHECK(align_labels({1, 2, 3}, 2) == std::vector<std::size_t>{1, 2});
    CHECK(align_labels({1, 2}, 5) == std::vector<std::size_t>{1, 2});
}
