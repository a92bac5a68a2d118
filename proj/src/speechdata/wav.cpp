#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lstmkd/error.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint32_t read_u32(const unsigned char *p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

std::uint16_t read_u16(const unsigned char *p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

void put_u32(std::string &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u16(std::string &out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

} // namespace

Waveform read_wav(const std::string &path, std::uint32_t expected_rate) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "io_error", "cannot open '" + path + "'");
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), {}};
    require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
                std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
            "malformed_wav", "'" + path + "' is not a RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char *data = nullptr;
    std::size_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char *chunk = bytes.data() + pos;
        const std::uint32_t size = read_u32(chunk + 4);
        require(pos + 8 + size <= bytes.size(), "malformed_wav", "'" + path + "': chunk runs past end of file");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            require(size >= 16, "malformed_wav", "'" + path + "': fmt chunk too small");
            const std::uint16_t format = read_u16(chunk + 8);
            channels = read_u16(chunk + 10);
            rate = read_u32(chunk + 12);
            bits = read_u16(chunk + 22);
            require(format == kFormatPcm, "unsupported_format",
                    "'" + path + "': only integer PCM is supported (format tag " + std::to_string(format) + ")");
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = size;
        }
        pos += 8 + size + (size & 1); // chunks are word aligned
    }
    require(have_fmt && data != nullptr, "malformed_wav", "'" + path + "': missing fmt or data chunk");
    require(channels == 1, "unsupported_format",
            "'" + path + "': " + std::to_string(channels) + " channels, only mono is supported");
    require(bits == 16, "unsupported_format",
            "'" + path + "': " + std::to_string(bits) + "-bit samples, only 16-bit PCM is supported");
    require(rate > 0, "malformed_wav", "'" + path + "': zero sample rate");
    require(expected_rate == 0 || rate == expected_rate, "sample_rate_mismatch",
            "'" + path + "' is " + std::to_string(rate) + " Hz, expected " + std::to_string(expected_rate) + " Hz");

    Waveform wave;
    wave.sample_rate = rate;
    wave.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < wave.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
        wave.samples[i] = static_cast<float>(v) / 32768.0f;
    }
    return wave;
}

void write_wav(const std::string &path, const Waveform &wave) {
    require(wave.sample_rate > 0, "invalid_argument", "write_wav: sample rate must be positive");
    const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, kFormatPcm);
    put_u16(out, 1);
    put_u32(out, wave.sample_rate);
    put_u32(out, wave.sample_rate * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_bytes);
    for (float s : wave.samples) {
        require(std::isfinite(s), "non_finite", "write_wav: non-finite sample");
        const double q = std::clamp(std::nearbyint(double(s) * 32768.0), -32768.0, 32767.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "io_error", "cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "io_error", "failed writing '" + path + "'");
}

} // namespace lstmkd
