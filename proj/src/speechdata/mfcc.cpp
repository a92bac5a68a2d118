#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "lstmkd/error.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// [num_mel x (fft/2 + 1)] triangular weights with peaks equally spaced in mel.
std::vector<double> mel_filterbank(std::size_t num_mel, std::size_t fft_size, double rate, double lo, double hi) {
    const std::size_t bins = fft_size / 2 + 1;
    std::vector<double> edges(num_mel + 2);
    const double mlo = hz_to_mel(lo), mhi = hz_to_mel(hi);
    for (std::size_t i = 0; i < edges.size(); ++i) {
        edges[i] = mel_to_hz(mlo + (mhi - mlo) * double(i) / double(num_mel + 1));
    }
    std::vector<double> bank(num_mel * bins, 0.0);
    for (std::size_t m = 0; m < num_mel; ++m) {
        const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
        for (std::size_t b = 0; b < bins; ++b) {
            const double f = double(b) * rate / double(fft_size);
            double w = 0.0;
            if (f > left && f <= centre) {
                w = (f - left) / (centre - left);
            } else if (f > centre && f < right) {
                w = (right - f) / (right - centre);
            }
            bank[m * bins + b] = w;
        }
    }
    return bank;
}

} // namespace

FeatureMatrix mfcc(const Waveform &wave, const MfccConfig &cfg) {
    require(cfg.num_ceps >= 1 && cfg.num_ceps <= cfg.num_mel, "invalid_config", "mfcc: need 1 <= num_ceps <= num_mel");
    const double rate = wave.sample_rate;
    const auto frame = static_cast<std::size_t>(std::lround(cfg.frame_ms * rate / 1000.0));
    const auto hop = static_cast<std::size_t>(std::lround(cfg.hop_ms * rate / 1000.0));
    require(frame > 0 && hop > 0, "invalid_config", "mfcc: frame and hop must be positive");
    require(wave.samples.size() >= frame, "input_too_short",
            "mfcc: " + std::to_string(wave.samples.size()) + " samples is shorter than one frame (" +
                std::to_string(frame) + ")");
    std::size_t fft_size = 1;
    while (fft_size < frame) {
        fft_size *= 2;
    }
    const double hi = cfg.high_hz > 0.0 ? cfg.high_hz : rate / 2.0;
    const auto bank = mel_filterbank(cfg.num_mel, fft_size, rate, cfg.low_hz, hi);
    const std::size_t bins = fft_size / 2 + 1;

    std::vector<double> window(frame);
    for (std::size_t i = 0; i < frame; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(frame - 1));
    }

    FeatureMatrix out;
    out.rows = (wave.samples.size() - frame) / hop + 1;
    out.cols = cfg.num_ceps;
    out.values.resize(out.rows * out.cols);

    Eigen::FFT<double> fft;
    std::vector<double> buffer(fft_size);
    std::vector<std::complex<double>> spectrum;
    std::vector<double> log_mel(cfg.num_mel);
    const double m = double(cfg.num_mel);
    for (std::size_t t = 0; t < out.rows; ++t) {
        const float *x = wave.samples.data() + t * hop;
        std::fill(buffer.begin(), buffer.end(), 0.0);
        for (std::size_t i = 0; i < frame; ++i) {
            const double prev = i == 0 ? double(x[0]) : double(x[i - 1]);
            buffer[i] = (double(x[i]) - cfg.preemphasis * prev) * window[i];
        }
        fft.fwd(spectrum, buffer);
        for (std::size_t f = 0; f < cfg.num_mel; ++f) {
            double e = 0.0;
            for (std::size_t b = 0; b < bins; ++b) {
                e += bank[f * bins + b] * std::abs(spectrum[b]);
            }
            log_mel[f] = std::log(std::max(e, cfg.log_floor));
        }
        for (std::size_t k = 0; k < cfg.num_ceps; ++k) {
            double c = 0.0;
            for (std::size_t f = 0; f < cfg.num_mel; ++f) {
                c += log_mel[f] * std::cos(std::numbers::pi * double(k) * (double(f) + 0.5) / m);
            }
            out.values[t * out.cols + k] = c * (k == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m));
        }
    }
    return out;
}

} // namespace lstmkd
