#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace lstmkd {

struct Waveform {
    std::vector<float> samples; // in [-1, 1)
    std::uint32_t sample_rate = 16000;
    std::string id;
};

// ---- WAV (RIFF, PCM16, mono) ------------------------------------------------

/// Samples are scaled by 1/32768. When expected_rate is non-zero a differing
/// header rate is an error ("sample_rate_mismatch"); nothing is resampled.
Waveform read_wav(const std::string &path, std::uint32_t expected_rate = 0);

/// Writes PCM16 mono; samples are rounded to the nearest step of 1/32768 and
/// clamped to [-32768, 32767].
void write_wav(const std::string &path, const Waveform &wave);

// ---- synthetic corpus -------------------------------------------------------

struct SynthConfig {
    std::size_t num_utterances = 64;
    double min_seconds = 1.0;
    double max_seconds = 2.0;
    std::size_t num_latent_classes = 32;
    std::size_t min_segment_frames = 20;
    std::size_t max_segment_frames = 40;
    std::size_t frame_hop = 320; // segment lengths are multiples of this many samples
    double noise_level = 0.01;
    std::uint32_t sample_rate = 16000;
    std::uint64_t seed = 0;
};

struct SynthUtterance {
    Waveform wave;
    std::vector<std::size_t> latent; // one latent class per frame_hop samples
};

/// Each latent class owns a spectral code: a level (off / low / high) in each of
/// five fixed frequency bands, the fifth being a parity digit of the other four,
/// plus a noise colour. Every band is a cluster of three close partials with
/// random phases per segment. An utterance concatenates segments of random
/// classes over low-level low-pass filtered noise. At most 80 classes. Samples
/// are quantised to the PCM16 grid so a WAV round trip is exact.
std::vector<SynthUtterance> synth_corpus(const SynthConfig &config);

/// Corpus directory: `index.json` plus one WAV file per utterance.
void write_corpus(const std::string &dir, const std::vector<SynthUtterance> &corpus);
std::vector<SynthUtterance> read_corpus(const std::string &dir, std::uint32_t expected_rate = 16000);

// ---- MFCC --------------------------------------------------------------------

struct MfccConfig {
    double frame_ms = 25.0;
    double hop_ms = 20.0;
    std::size_t num_mel = 26;
    std::size_t num_ceps = 13;
    double preemphasis = 0.97;
    double low_hz = 0.0;
    double high_hz = 0.0; // 0 means Nyquist
    double log_floor = 1e-10;
};

struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // row-major

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Frames: floor((N - frame) / hop) + 1. Per frame: pre-emphasis, Hann window,
/// magnitude spectrum, triangular mel filterbank, natural log, orthonormal DCT-II.
FeatureMatrix mfcc(const Waveform &wave, const MfccConfig &config = {});

// ---- k-means -----------------------------------------------------------------

struct KMeansResult {
    FeatureMatrix centroids;             // k x d
    std::vector<double> inertia_history; // sum of squared distances after each assignment step
    std::size_t iterations = 0;
    bool converged = false;
};

/// Greedy k-means++ seeding followed by Lloyd iterations; stops when
/// assignments no longer change or after max_iters. Empty clusters are re-seeded with the
/// point farthest from its current centroid.
KMeansResult kmeans_fit(const FeatureMatrix &features, std::size_t k, std::size_t max_iters, std::uint64_t seed);

/// Nearest centroid by squared euclidean distance; ties go to the lower index.
std::vector<std::size_t> kmeans_assign(const FeatureMatrix &features, const FeatureMatrix &centroids);

double squared_distance(const double *a, const double *b, std::size_t d);

// ---- pseudo-labels -----------------------------------------------------------

struct PseudoLabelSequence {
    std::string utterance_id;
    std::vector<std::size_t> labels;
    std::size_t num_clusters = 0;
};

/// Label cache layout (little endian):
///   "LKDLABEL" | u32 version (=1) | u32 num_clusters | u32 count
///   count x { u32 id_length | id bytes | u32 T | T x u16 label }
void write_label_cache(const std::string &path, const std::vector<PseudoLabelSequence> &labels);
std::vector<PseudoLabelSequence> read_label_cache(const std::string &path);

struct PseudoLabelConfig {
    std::size_t num_clusters = 32;
    std::size_t max_iters = 100;
    std::size_t restarts = 4; // independent seedings; the lowest final inertia wins
    MfccConfig mfcc;
};

/// MFCC features of every utterance are pooled to fit one k-means model, whose
/// nearest-centroid assignments become the per-frame labels (one MFCC frame per
/// 20 ms hop, i.e. per encoder frame).
std::vector<PseudoLabelSequence> make_pseudo_labels(const std::vector<Waveform> &waves,
                                                    const PseudoLabelConfig &config, std::uint64_t seed);

/// Truncates each label sequence to `frames` when longer (frame-rate alignment).
std::vector<std::size_t> align_labels(const std::vector<std::size_t> &labels, std::size_t frames);

} // namespace lstmkd
