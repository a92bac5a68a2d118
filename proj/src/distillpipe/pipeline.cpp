#include "lstmkd/distillpipe/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <openssl/evp.h>

#include "lstmkd/error.hpp"
#include "lstmkd/losses/losses.hpp"
#include "lstmkd/numerics/ops.hpp"
#include "lstmkd/numerics/rng.hpp"

namespace lstmkd {

namespace {

// Independent streams derived from a run seed.
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kMaskStream = 2;

std::size_t argmax_row(const float *row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c) {
        if (row[c] > row[best]) {
            best = c;
        }
    }
    return best;
}

template <typename S>
std::size_t argmax_row(const Tensor<S> &logits, std::size_t r) {
    const std::size_t n = logits.cols();
    const S *row = logits.data().data() + r * n;
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c) {
        if (row[c] > row[best]) {
            best = c;
        }
    }
    return best;
}

// One packed batch with its labelled rows. An utterance whose label sequence is
// shorter than its frame count contributes only its first labels.size() rows.
struct Batch {
    std::vector<std::span<const float>> waves;
    std::vector<const Utterance *> items;
};

Batch gather(const Dataset &data, const std::vector<std::size_t> &indices) {
    Batch b;
    for (std::size_t i : indices) {
        b.items.push_back(&data.items[i]);
        b.waves.emplace_back(data.items[i].samples);
    }
    return b;
}

struct LabelledRows {
    std::vector<std::size_t> rows;   // global frame rows that carry a label
    std::vector<std::size_t> labels; // one per frame row (0 for unlabelled rows)
    bool complete = true;            // every frame row is labelled
};

LabelledRows labelled_rows(const Batch &b, const Segments &frames) {
    LabelledRows out;
    out.labels.assign(total_rows(frames), 0);
    for (std::size_t u = 0; u < frames.size(); ++u) {
        const auto &labels = b.items[u]->labels;
        const std::size_t n = std::min(frames[u].length, labels.size());
        out.complete = out.complete && n == frames[u].length;
        for (std::size_t t = 0; t < n; ++t) {
            out.rows.push_back(frames[u].offset + t);
            out.labels[frames[u].offset + t] = labels[t];
        }
    }
    return out;
}

template <typename S>
Tensor<S> weighted(const Tensor<S> &x, double w) {
    return w == 1.0 ? x : scale(x, S(w));
}

void guard_finite(double value, const char *what) {
    require(std::isfinite(value), "diverged", std::string(what) + ": loss became non-finite");
}

} // namespace

// ---- data ---------------------------------------------------------------------

Dataset make_dataset(const std::vector<Waveform> &waves, const std::vector<PseudoLabelSequence> &labels,
                     const ModelConfig &config) {
    require(!labels.empty(), "invalid_argument", "dataset: no label sequences");
    std::map<std::string, const PseudoLabelSequence *> by_id;
    for (const auto &l : labels) {
        by_id[l.utterance_id] = &l;
    }
    Dataset out;
    out.num_clusters = labels.front().num_clusters;
    for (const auto &w : waves) {
        const auto it = by_id.find(w.id);
        require(it != by_id.end(), "missing_labels", "no pseudo-labels for utterance '" + w.id + "'");
        require(it->second->num_clusters == out.num_clusters, "invalid_argument", "dataset: mixed cluster counts");
        const std::size_t frames = config.frames_for(w.samples.size());
        require(frames > 0 && w.samples.size() >= config.receptive_field(), "input_too_short",
                "utterance '" + w.id + "' is shorter than the encoder receptive field");
        out.items.push_back({w.id, w.samples, align_labels(it->second->labels, frames)});
    }
    return out;
}

std::pair<Dataset, Dataset> split_heldout(const Dataset &data, double fraction) {
    require(fraction >= 0.0 && fraction < 1.0, "invalid_argument", "held-out fraction must lie in [0, 1)");
    const auto n = data.items.size();
    const auto held = static_cast<std::size_t>(std::ceil(fraction * double(n)));
    require(held < n, "invalid_argument", "held-out split leaves no training data");
    Dataset train{{data.items.begin(), data.items.end() - std::ptrdiff_t(held)}, data.num_clusters};
    Dataset heldout{{data.items.end() - std::ptrdiff_t(held), data.items.end()}, data.num_clusters};
    return {train, heldout};
}

std::vector<std::vector<std::size_t>> batch_schedule(std::size_t num_items, std::size_t batch_size,
                                                     std::size_t steps, std::uint64_t seed) {
    require(num_items > 0 && batch_size > 0, "invalid_argument", "batch_schedule: empty dataset or batch");
    const Rng root = Rng(seed).fork(kBatchStream);
    std::vector<std::vector<std::size_t>> out(steps);
    std::vector<std::size_t> order;
    std::size_t epoch = 0, pos = 0;
    for (auto &batch : out) {
        while (batch.size() < batch_size) {
            if (pos == order.size()) {
                order.resize(num_items);
                for (std::size_t i = 0; i < num_items; ++i) {
                    order[i] = i;
                }
                Rng rng = root.fork(epoch++);
                rng.shuffle(order);
                pos = 0;
            }
            batch.push_back(order[pos++]);
        }
    }
    return out;
}

// ---- teacher ------------------------------------------------------------------

Model<float> train_teacher(const Dataset &train, const ModelConfig &config, const TrainConfig &tc, MetricsSink log) {
    tc.validate();
    config.validate();
    require(config.num_clusters == train.num_clusters, "checkpoint_mismatch",
            "teacher head has " + std::to_string(config.num_clusters) + " classes, labels have " +
                std::to_string(train.num_clusters));
    Model<float> model(config, tc.seed);
    Adam<float> adam(model.parameters(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
    const auto schedule = batch_schedule(train.items.size(), tc.batch_size, tc.total_steps, tc.seed);
    const Rng mask_root = Rng(tc.seed).fork(kMaskStream);

    for (std::size_t k = 1; k <= tc.total_steps; ++k) {
        const Batch b = gather(train, schedule[k - 1]);
        const auto packed = pack_waveforms<float>(b.waves);
        const MaskSpec mask{tc.mask_span, tc.mask_prob, mask_root.fork(k).next_u64()};
        auto out = model.forward(packed, &mask);
        const auto rows = labelled_rows(b, out.segments);

        FrameTargets targets{rows.labels, {}};
        for (std::size_t r : out.masked) {
            if (rows.complete || std::binary_search(rows.rows.begin(), rows.rows.end(), r)) {
                targets.mask_indices.push_back(r);
            }
        }
        const double lr = lr_schedule(k, tc);
        StepMetrics m{k, lr, 0.0, 0.0, 0.0, 0.0};
        if (!targets.mask_indices.empty()) {
            auto loss = masked_cluster_loss(out.logits, targets, Reduction::Mean);
            m.ce = m.total = double(loss.value.item());
            guard_finite(m.total, "train_teacher");
            std::size_t correct = 0;
            for (std::size_t r : targets.mask_indices) {
                correct += argmax_row(out.logits, r) == rows.labels[r];
            }
            m.agreement = double(correct) / double(targets.mask_indices.size());
            loss.value.backward();
            adam.step(model.parameters(), lr, tc.grad_clip);
            model.zero_grad();
        }
        if (log != nullptr) {
            log->append(m);
        }
    }
    return model;
}

MaskedAccuracy masked_accuracy(const Model<float> &model, const Dataset &data, std::size_t mask_span,
                               double mask_prob, std::uint64_t seed) {
    NoGradGuard no_grad;
    const Rng root(seed);
    MaskedAccuracy acc;
    for (std::size_t u = 0; u < data.items.size(); ++u) {
        const Batch b = gather(data, {u});
        const MaskSpec mask{mask_span, mask_prob, root.fork(u).next_u64()};
        const auto out = model.forward(pack_waveforms<float>(b.waves), &mask);
        const auto &labels = data.items[u].labels;
        for (std::size_t r : out.masked) {
            if (r < labels.size()) {
                ++acc.masked;
                acc.correct += argmax_row(out.logits, r) == labels[r];
            }
        }
    }
    return acc;
}

std::vector<float> utterance_logits(const Model<float> &model, const std::vector<float> &samples) {
    NoGradGuard no_grad;
    const auto out = model.forward(pack_waveforms<float>({std::span<const float>(samples)}));
    return {out.logits.data().begin(), out.logits.data().end()};
}

// ---- logit cache ----------------------------------------------------------------

namespace {

constexpr char kLogitMagic[8] = {'L', 'K', 'D', 'L', 'O', 'G', 'I', 'T'};
constexpr std::uint32_t kLogitVersion = 1;

void put_u32(std::string &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

struct ByteReader {
    const std::string &bytes;
    std::size_t pos = 0;

    const char *take(std::size_t n) {
        require(pos + n <= bytes.size(), "malformed_cache", "logit cache is truncated");
        const char *p = bytes.data() + pos;
        pos += n;
        return p;
    }
    std::uint32_t u32() {
        const auto *p = reinterpret_cast<const unsigned char *>(take(4));
        return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    }
};

std::string read_file(const std::string &path, const char *missing_code) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), missing_code, "cannot read '" + path + "'");
    return {std::istreambuf_iterator<char>(f), {}};
}

} // namespace

const LogitRecord &LogitCache::find(const std::string &id) const {
    for (const auto &r : records) {
        if (r.id == id) {
            return r;
        }
    }
    fail("cache_mismatch", "logit cache has no record for utterance '" + id + "'");
}

void write_logit_cache(const std::string &path, const LogitCache &cache) {
    std::string out(kLogitMagic, sizeof kLogitMagic);
    put_u32(out, kLogitVersion);
    put_u32(out, static_cast<std::uint32_t>(cache.num_clusters));
    put_u32(out, static_cast<std::uint32_t>(cache.teacher_hash.size()));
    out += cache.teacher_hash;
    put_u32(out, static_cast<std::uint32_t>(cache.records.size()));
    for (const auto &r : cache.records) {
        require(r.logits.size() == r.frames * cache.num_clusters, "shape_mismatch",
                "logit cache: record '" + r.id + "' has the wrong size");
        put_u32(out, static_cast<std::uint32_t>(r.id.size()));
        out += r.id;
        put_u32(out, static_cast<std::uint32_t>(r.frames));
        for (float v : r.logits) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "io_error", "cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    require(f.good(), "io_error", "failed writing '" + path + "'");
}

LogitCache read_logit_cache(const std::string &path) {
    const std::string bytes = read_file(path, "missing_input");
    ByteReader r{bytes};
    require(std::memcmp(r.take(8), kLogitMagic, 8) == 0, "malformed_cache", "'" + path + "' is not a logit cache");
    const std::uint32_t version = r.u32();
    require(version == kLogitVersion, "unsupported_version", "logit cache version " + std::to_string(version));
    LogitCache cache;
    cache.num_clusters = r.u32();
    const std::uint32_t hash_len = r.u32();
    cache.teacher_hash.assign(r.take(hash_len), hash_len);
    cache.records.resize(r.u32());
    for (auto &rec : cache.records) {
        const std::uint32_t id_len = r.u32();
        rec.id.assign(r.take(id_len), id_len);
        rec.frames = r.u32();
        rec.logits.resize(rec.frames * cache.num_clusters);
        for (auto &v : rec.logits) {
            const std::uint32_t bits = r.u32();
            std::memcpy(&v, &bits, 4);
        }
    }
    require(r.pos == bytes.size(), "malformed_cache", "logit cache '" + path + "' has trailing bytes");
    return cache;
}

std::string file_sha256(const std::string &path) { return sha256_hex(read_file(path, "missing_input")); }

std::string sha256_hex(const std::string &bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) == 1, "io_error",
            "sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

LogitCache export_teacher_logits(const Model<float> &teacher, const Dataset &data, const std::string &teacher_hash) {
    LogitCache cache;
    cache.teacher_hash = teacher_hash;
    cache.num_clusters = teacher.config().num_clusters;
    for (const auto &item : data.items) {
        LogitRecord rec{item.id, 0, utterance_logits(teacher, item.samples)};
        rec.frames = rec.logits.size() / cache.num_clusters;
        cache.records.push_back(std::move(rec));
    }
    return cache;
}

// ---- student ------------------------------------------------------------------

template <typename S>
Model<S> distill_student(const Dataset &train, const LogitCache &cache, const ModelConfig &config,
                         const TrainConfig &tc, MetricsSink log, const std::string &expected_teacher_hash) {
    tc.validate();
    config.validate();
    require(expected_teacher_hash.empty() || cache.teacher_hash == expected_teacher_hash, "cache_mismatch",
            "logit cache was exported from teacher " + cache.teacher_hash + ", expected " + expected_teacher_hash);
    const std::size_t classes = cache.num_clusters;
    require(config.num_clusters == classes && train.num_clusters == classes, "cache_mismatch",
            "student head, labels and teacher cache must agree on the cluster count");
    constexpr bool verification = std::is_same_v<S, double>;
    if constexpr (verification) {
        require(extended_precision_available(), "unsupported", "float64 verification needs binary128 support");
    }

    Model<S> model(config, tc.seed);
    Adam<S> adam(model.parameters(), tc.adam_beta1, tc.adam_beta2, tc.adam_eps);
    const auto schedule = batch_schedule(train.items.size(), tc.batch_size, tc.total_steps, tc.seed);
    const Rng mask_root = Rng(tc.seed).fork(kMaskStream);

    for (std::size_t k = 1; k <= tc.total_steps; ++k) {
        const Batch b = gather(train, schedule[k - 1]);
        // Optional input masking; the loss still covers every frame.
        const MaskSpec mask{tc.mask_span, tc.mask_prob, mask_root.fork(k).next_u64()};
        auto out = model.forward(pack_waveforms<S>(b.waves), tc.mask_student_input ? &mask : nullptr);
        const auto rows = labelled_rows(b, out.segments);
        Tensor<S> logits = rows.complete ? out.logits : select_rows(out.logits, rows.rows);
        const std::size_t n = rows.rows.size();

        std::vector<std::size_t> targets(n);
        std::vector<float> teacher(n * classes);
        std::size_t write = 0;
        for (std::size_t u = 0; u < b.items.size(); ++u) {
            const auto &rec = cache.find(b.items[u]->id);
            require(rec.frames == out.segments[u].length, "cache_mismatch",
                    "cached teacher logits for '" + rec.id + "' have " + std::to_string(rec.frames) +
                        " frames, the student produces " + std::to_string(out.segments[u].length));
            const std::size_t used = std::min(rec.frames, b.items[u]->labels.size());
            std::copy_n(rec.logits.begin(), used * classes, teacher.begin() + std::ptrdiff_t(write * classes));
            std::copy_n(b.items[u]->labels.begin(), used, targets.begin() + std::ptrdiff_t(write));
            write += used;
        }

        FrameTargets all{targets, {}};
        all.mask_indices.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            all.mask_indices[i] = i;
        }
        auto ce = masked_cluster_loss(logits, all, Reduction::Mean).value;

        auto distill_term = [&]() -> Tensor<S> {
            const bool dkd = tc.mode == DistillMode::Dkd;
            if constexpr (verification) {
                ExtendedDistillSpec spec;
                spec.mode = !dkd ? ExtendedDistillSpec::Mode::Kd
                                 : (tc.dynamic_beta ? ExtendedDistillSpec::Mode::DkdDynamicBeta
                                                    : ExtendedDistillSpec::Mode::Dkd);
                spec.tau = tc.tau;
                spec.alpha = tc.alpha;
                spec.beta = tc.beta;
                return extended_distill_loss(logits, teacher, targets, spec, Reduction::Mean);
            } else {
                const std::vector<double> teacher64(teacher.begin(), teacher.end());
                const auto tt = make_teacher_targets(teacher64, n, classes, tc.tau,
                                                     dkd ? std::span<const std::size_t>(targets)
                                                         : std::span<const std::size_t>(),
                                                     DegeneratePolicy::Floor);
                if (!dkd) {
                    return kd_loss(logits, tt, Reduction::Mean);
                }
                if (tc.dynamic_beta) {
                    std::vector<double> beta(n);
                    for (std::size_t r = 0; r < n; ++r) {
                        beta[r] = 1.0 - tt.target_prob[r];
                    }
                    auto terms = dkd_terms(logits, tt, Reduction::Mean, DegeneratePolicy::Floor, beta);
                    return add(weighted(terms.tckd, tc.alpha), terms.nckd);
                }
                return dkd_loss(logits, tt, DkdWeights{tc.alpha, tc.beta, tc.tau}, Reduction::Mean,
                                DegeneratePolicy::Floor);
            }
        };

        const double lr = lr_schedule(k, tc);
        StepMetrics m{k, lr, double(ce.item()), 0.0, 0.0, 0.0};
        Tensor<S> total;
        if (tc.distill_weight > 0.0) {
            auto distill = distill_term();
            m.kd_or_dkd = double(distill.item());
            total = add(weighted(ce, tc.ce_weight), weighted(distill, tc.distill_weight));
        } else {
            {
                NoGradGuard no_grad;
                m.kd_or_dkd = double(distill_term().item());
            }
            total = weighted(ce, tc.ce_weight);
        }
        m.total = double(total.item());
        guard_finite(m.total, "distill_student");

        std::size_t agree = 0;
        for (std::size_t r = 0; r < n; ++r) {
            agree += argmax_row(logits, r) == argmax_row(teacher.data() + r * classes, classes);
        }
        m.agreement = n == 0 ? 0.0 : double(agree) / double(n);

        total.backward();
        adam.step(model.parameters(), lr, tc.grad_clip);
        model.zero_grad();
        if (log != nullptr) {
            log->append(m);
        }
    }
    return model;
}

template Model<float> distill_student(const Dataset &, const LogitCache &, const ModelConfig &, const TrainConfig &,
                                      MetricsSink, const std::string &);
template Model<double> distill_student(const Dataset &, const LogitCache &, const ModelConfig &, const TrainConfig &,
                                       MetricsSink, const std::string &);

double teacher_agreement(const Model<float> &student, const Dataset &data, const LogitCache &cache) {
    const std::size_t classes = cache.num_clusters;
    require(student.config().num_clusters == classes, "cache_mismatch", "student and cache cluster counts differ");
    std::size_t agree = 0, total = 0;
    for (const auto &item : data.items) {
        const auto logits = utterance_logits(student, item.samples);
        const auto &rec = cache.find(item.id);
        const std::size_t frames = logits.size() / classes;
        require(rec.frames == frames, "cache_mismatch", "frame count differs for '" + item.id + "'");
        for (std::size_t t = 0; t < frames; ++t) {
            agree += argmax_row(logits.data() + t * classes, classes) ==
                     argmax_row(rec.logits.data() + t * classes, classes);
        }
        total += frames;
    }
    return total == 0 ? 0.0 : double(agree) / double(total);
}

// ---- probing ------------------------------------------------------------------

std::vector<LayerFeatures> extract_features(const Model<float> &model, const Dataset &data) {
    NoGradGuard no_grad;
    std::vector<LayerFeatures> out;
    for (const auto &item : data.items) {
        const auto fwd = model.forward(pack_waveforms<float>({std::span<const float>(item.samples)}));
        LayerFeatures f;
        f.width = fwd.layers.front().cols();
        const std::size_t frames = std::min(fwd.layers.front().rows(), item.labels.size());
        for (const auto &layer : fwd.layers) {
            f.layers.emplace_back(layer.data().begin(), layer.data().begin() + std::ptrdiff_t(frames * f.width));
        }
        f.labels.assign(item.labels.begin(), item.labels.begin() + std::ptrdiff_t(frames));
        out.push_back(std::move(f));
    }
    return out;
}

ProbeReport probe_features(const std::vector<LayerFeatures> &train, const std::vector<LayerFeatures> &heldout,
                           std::size_t num_clusters, const ProbeConfig &config, bool direct) {
    require(!train.empty() && !heldout.empty(), "invalid_argument", "probe: empty split");
    require(config.batch_frames > 0 && config.lr > 0.0, "invalid_config", "probe: batch_frames and lr must be > 0");
    const std::size_t width = train.front().width, num_layers = train.front().layers.size();
    std::vector<std::pair<std::size_t, std::size_t>> frames;
    for (std::size_t u = 0; u < train.size(); ++u) {
        for (std::size_t t = 0; t < train[u].labels.size(); ++t) {
            frames.emplace_back(u, t);
        }
    }
    require(!frames.empty(), "invalid_argument", "probe: no labelled training frames");

    Rng rng(config.seed);
    const double bound = 1.0 / std::sqrt(double(width));
    std::vector<float> w_init(num_clusters * width);
    for (auto &v : w_init) {
        v = static_cast<float>(rng.uniform(-bound, bound));
    }
    std::vector<NamedParameter<float>> params{
        {"featurizer.weights", Tensor<float>::zeros({num_layers}, !direct)},
        {"probe.weight", Tensor<float>::from({num_clusters, width}, std::span<const float>(w_init), true)},
        {"probe.bias", Tensor<float>::zeros({num_clusters}, true)},
    };
    Adam<float> adam(params, 0.9, 0.999, 1e-8);

    auto features = [&](const std::vector<LayerFeatures> &set,
                        const std::vector<std::pair<std::size_t, std::size_t>> &pick) {
        std::vector<Tensor<float>> layers;
        for (std::size_t l = 0; l < (direct ? 1 : num_layers); ++l) {
            std::vector<float> block(pick.size() * width);
            for (std::size_t i = 0; i < pick.size(); ++i) {
                const auto &[u, t] = pick[i];
                std::copy_n(set[u].layers[l].begin() + std::ptrdiff_t(t * width), width,
                            block.begin() + std::ptrdiff_t(i * width));
            }
            layers.push_back(Tensor<float>::from({pick.size(), width}, std::span<const float>(block)));
        }
        auto x = direct ? layers.front() : weighted_sum(layers, params[0].value);
        return linear(x, params[1].value, params[2].value);
    };

    for (std::size_t step = 0; step < config.steps; ++step) {
        std::vector<std::pair<std::size_t, std::size_t>> pick(config.batch_frames);
        FrameTargets targets;
        for (std::size_t i = 0; i < pick.size(); ++i) {
            pick[i] = frames[rng.below(frames.size())];
            targets.labels.push_back(train[pick[i].first].labels[pick[i].second]);
            targets.mask_indices.push_back(i);
        }
        auto loss = masked_cluster_loss(features(train, pick), targets, Reduction::Mean).value;
        loss.backward();
        adam.step(params, config.lr);
        for (auto &p : params) {
            p.value.zero_grad();
        }
    }

    ProbeReport report;
    report.train_frames = frames.size();
    NoGradGuard no_grad;
    std::size_t correct = 0;
    for (std::size_t u = 0; u < heldout.size(); ++u) {
        std::vector<std::pair<std::size_t, std::size_t>> pick;
        for (std::size_t t = 0; t < heldout[u].labels.size(); ++t) {
            pick.emplace_back(u, t);
        }
        if (pick.empty()) {
            continue;
        }
        const auto logits = features(heldout, pick);
        for (std::size_t t = 0; t < pick.size(); ++t) {
            correct += argmax_row(logits, t) == heldout[u].labels[t];
        }
        report.heldout_frames += pick.size();
    }
    report.heldout_accuracy = report.heldout_frames == 0 ? 0.0 : double(correct) / double(report.heldout_frames);
    const auto w = softmax_rows(reshape(params[0].value, {1, num_layers}));
    report.layer_weights.assign(w.data().begin(), w.data().end());
    return report;
}

ProbeReport probe_eval(const Model<float> &model, const Dataset &train, const Dataset &heldout,
                       const ProbeConfig &config) {
    return probe_features(extract_features(model, train), extract_features(model, heldout),
                          model.config().num_clusters, config);
}

} // namespace lstmkd
