#include <cstring>
#include <fstream>
#include <iterator>

#include "lstmkd/error.hpp"
#include "lstmkd/numerics/rng.hpp"
#include "lstmkd/speechdata/speechdata.hpp"

namespace lstmkd {

namespace {

constexpr char kMagic[8] = {'L', 'K', 'D', 'L', 'A', 'B', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

class Reader {
public:
    Reader(std::vector<unsigned char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

    const unsigned char *take(std::size_t n) {
        require(pos_ + n <= bytes_.size(), "malformed_labels", "label cache '" + path_ + "' is truncated");
        const unsigned char *p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint32_t u32() {
        const auto *p = take(4);
        return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    }
    std::uint16_t u16() {
        const auto *p = take(2);
        return static_cast<std::uint16_t>(p[0] | p[1] << 8);
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::vector<unsigned char> bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

} // namespace

void write_label_cache(const std::string &path, const std::vector<PseudoLabelSequence> &labels) {
    const std::size_t c = labels.empty() ? 0 : labels.front().num_clusters;
    require(c <= 65536, "invalid_argument", "label cache: at most 65536 clusters");
    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(c));
    put_u32(out, static_cast<std::uint32_t>(labels.size()));
    for (const auto &seq : labels) {
        require(seq.num_clusters == c, "invalid_argument", "label cache: mixed cluster counts");
        put_u32(out, static_cast<std::uint32_t>(seq.utterance_id.size()));
        out += seq.utterance_id;
        put_u32(out, static_cast<std::uint32_t>(seq.labels.size()));
        for (std::size_t z : seq.labels) {
            require(z < c, "label_out_of_range", "label cache: label " + std::to_string(z) + " >= C");
            out.push_back(static_cast<char>(z & 0xff));
            out.push_back(static_cast<char>(z >> 8));
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "io_error", "cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "io_error", "failed writing '" + path + "'");
}

std::vector<PseudoLabelSequence> read_label_cache(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "missing_input", "no label cache at '" + path + "'");
    Reader r(std::vector<unsigned char>{std::istreambuf_iterator<char>(f), {}}, path);
    require(std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) == 0, "malformed_labels",
            "'" + path + "' is not a label cache");
    const std::uint32_t version = r.u32();
    require(version == kVersion, "unsupported_version", "label cache version " + std::to_string(version));
    const std::uint32_t c = r.u32(), count = r.u32();
    std::vector<PseudoLabelSequence> out(count);
    for (auto &seq : out) {
        const std::uint32_t id_len = r.u32();
        const auto *id = r.take(id_len);
        seq.utterance_id.assign(reinterpret_cast<const char *>(id), id_len);
        seq.num_clusters = c;
        seq.labels.resize(r.u32());
        for (auto &z : seq.labels) {
            z = r.u16();
            require(z < c, "malformed_labels", "label cache: label out of range");
        }
    }
    require(r.done(), "malformed_labels", "label cache '" + path + "' has trailing bytes");
    return out;
}

std::vector<PseudoLabelSequence> make_pseudo_labels(const std::vector<Waveform> &waves,
                                                    const PseudoLabelConfig &config, std::uint64_t seed) {
    require(!waves.empty(), "invalid_argument", "pseudo-labels: empty corpus");
    require(config.restarts >= 1, "invalid_config", "pseudo-labels: restarts must be positive");
    std::vector<FeatureMatrix> features;
    FeatureMatrix pooled{0, config.mfcc.num_ceps, {}};
    for (const auto &w : waves) {
        features.push_back(mfcc(w, config.mfcc));
        pooled.values.insert(pooled.values.end(), features.back().values.begin(), features.back().values.end());
        pooled.rows += features.back().rows;
    }
    const Rng root(seed);
    KMeansResult best;
    for (std::size_t r = 0; r < config.restarts; ++r) {
        auto fit = kmeans_fit(pooled, config.num_clusters, config.max_iters, root.fork(r).next_u64());
        if (r == 0 || fit.inertia_history.back() < best.inertia_history.back()) {
            best = std::move(fit);
        }
    }
    std::vector<PseudoLabelSequence> out;
    for (std::size_t i = 0; i < waves.size(); ++i) {
        out.push_back({waves[i].id, kmeans_assign(features[i], best.centroids), config.num_clusters});
    }
    return out;
}

std::vector<std::size_t> align_labels(const std::vector<std::size_t> &labels, std::size_t frames) {
    if (labels.size() <= frames) {
        return labels;
    }
    return {labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(frames)};
}

} // namespace lstmkd
