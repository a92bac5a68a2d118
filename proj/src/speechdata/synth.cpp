#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "lstmkd/error.hpp"
#include "lstmkd/numerics/rng.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

namespace {

// Five broad bands, each rendered as three nearby partials. A class is a code
// word of band levels (0, 1 or 2); the last digit is a mod-3 parity check, so
// two classes always differ in at least two bands.
constexpr std::array<double, 5> band_centres_hz{350.0, 900.0, 1900.0, 3600.0, 6000.0};
constexpr std::array<double, 3> level_amp{0.0, 0.07, 0.2};

struct ClassVoice {
    std::array<double, 5> amp;
    double noise_pole; // one-pole low-pass coefficient applied to the noise
};

std::vector<ClassVoice> class_voices(std::size_t k) {
    require(k <= 80, "invalid_config", "synth: at most 80 latent classes are supported");
    const std::size_t stride = 80 / k;
    std::vector<ClassVoice> voices;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t code = 1 + c * stride, parity = 0;
        ClassVoice v{};
        for (std::size_t b = 0; b < 4; ++b, code /= 3) {
            v.amp[b] = level_amp[code % 3];
            parity += code % 3;
        }
        v.amp[4] = level_amp[parity % 3];
        v.noise_pole = 0.2 + 0.15 * double(c % 5);
        voices.push_back(v);
    }
    return voices;
}

float quantize(double x) {
    const double q = std::clamp(std::nearbyint(x * 32768.0), -32768.0, 32767.0);
    return static_cast<float>(q / 32768.0);
}

} // namespace

std::vector<SynthUtterance> synth_corpus(const SynthConfig &cfg) {
    require(cfg.num_utterances > 0 && cfg.num_latent_classes > 0, "invalid_config",
            "synth: utterance and class counts must be positive");
    require(cfg.min_seconds > 0.0 && cfg.max_seconds >= cfg.min_seconds, "invalid_config",
            "synth: duration range must satisfy 0 < min <= max");
    require(cfg.min_segment_frames > 0 && cfg.max_segment_frames >= cfg.min_segment_frames, "invalid_config",
            "synth: segment range must satisfy 0 < min <= max");
    require(cfg.frame_hop > 0 && cfg.sample_rate > 0, "invalid_config", "synth: frame_hop and sample_rate > 0");
    const auto voices = class_voices(cfg.num_latent_classes);
    const Rng root(cfg.seed);
    std::vector<SynthUtterance> out;
    out.reserve(cfg.num_utterances);
    for (std::size_t u = 0; u < cfg.num_utterances; ++u) {
        Rng rng = root.fork(u);
        const double seconds = rng.uniform(cfg.min_seconds, cfg.max_seconds);
        const std::size_t blocks =
            std::max<std::size_t>(1, static_cast<std::size_t>(seconds * cfg.sample_rate) / cfg.frame_hop);
        SynthUtterance utt;
        utt.wave.sample_rate = cfg.sample_rate;
        char id[32];
        std::snprintf(id, sizeof id, "utt%05zu", u);
        utt.wave.id = id;
        utt.wave.samples.reserve(blocks * cfg.frame_hop);
        while (utt.latent.size() < blocks) {
            const std::size_t cls = rng.below(cfg.num_latent_classes);
            const std::size_t span = cfg.min_segment_frames + rng.below(cfg.max_segment_frames - cfg.min_segment_frames + 1);
            const std::size_t len = std::min(span, blocks - utt.latent.size());
            const auto &v = voices[cls];
            std::array<double, 15> phase{}, omega{};
            for (std::size_t p = 0; p < 15; ++p) {
                phase[p] = rng.uniform(0.0, 2.0 * std::numbers::pi);
                omega[p] = 2.0 * std::numbers::pi * band_centres_hz[p / 3] * (0.92 + 0.08 * double(p % 3)) /
                           cfg.sample_rate;
            }
            double noise = 0.0;
            for (std::size_t n = 0; n < len * cfg.frame_hop; ++n) {
                const double t = double(n);
                noise = v.noise_pole * noise + (1.0 - v.noise_pole) * rng.normal();
                double x = cfg.noise_level * noise;
                for (std::size_t p = 0; p < 15; ++p) {
                    if (v.amp[p / 3] > 0.0) {
                        x += v.amp[p / 3] / 3.0 * std::sin(omega[p] * t + phase[p]);
                    }
                }
                utt.wave.samples.push_back(quantize(x));
            }
            utt.latent.insert(utt.latent.end(), len, cls);
        }
        out.push_back(std::move(utt));
    }
    return out;
}

void write_corpus(const std::string &dir, const std::vector<SynthUtterance> &corpus) {
    std::filesystem::create_directories(dir);
    nlohmann::json index;
    index["version"] = 1;
    index["utterances"] = nlohmann::json::array();
    for (const auto &utt : corpus) {
        const std::string file = utt.wave.id + ".wav";
        write_wav((std::filesystem::path(dir) / file).string(), utt.wave);
        index["utterances"].push_back({{"id", utt.wave.id},
                                       {"file", file},
                                       {"sample_rate", utt.wave.sample_rate},
                                       {"num_samples", utt.wave.samples.size()},
                                       {"latent", utt.latent}});
    }
    std::ofstream f(std::filesystem::path(dir) / "index.json", std::ios::trunc);
    require(f.good(), "io_error", "cannot write corpus index in '" + dir + "'");
    f << index.dump(1) << '\n';
}

std::vector<SynthUtterance> read_corpus(const std::string &dir, std::uint32_t expected_rate) {
    const auto index_path = std::filesystem::path(dir) / "index.json";
    std::ifstream f(index_path);
    require(f.good(), "missing_input", "no corpus index at '" + index_path.string() + "'");
    std::vector<SynthUtterance> out;
    try {
        const auto index = nlohmann::json::parse(f);
        for (const auto &entry : index.at("utterances")) {
            SynthUtterance utt;
            utt.wave = read_wav((std::filesystem::path(dir) / entry.at("file").get<std::string>()).string(),
                                expected_rate);
            utt.wave.id = entry.at("id").get<std::string>();
            if (entry.contains("latent")) {
                utt.latent = entry.at("latent").get<std::vector<std::size_t>>();
            }
            out.push_back(std::move(utt));
        }
    } catch (const nlohmann::json::exception &e) {
        fail("malformed_corpus", "corpus index '" + index_path.string() + "': " + e.what());
    }
    return out;
}

} // namespace lstmkd
