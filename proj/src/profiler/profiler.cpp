#include "lstmkd/profiler/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "lstmkd/error.hpp"
#include "lstmkd/numerics/mac_tally.hpp"
#include "lstmkd/numerics/memory.hpp"
#include "lstmkd/numerics/ops.hpp"
#include "lstmkd/numerics/rng.hpp"

namespace lstmkd {

std::uint64_t count_macs(const ModelConfig &c, std::size_t input_samples) {
    c.validate();
    require(input_samples >= c.receptive_field(), "input_too_short",
            "count_macs: " + std::to_string(input_samples) + " samples is below the receptive field (" +
                std::to_string(c.receptive_field()) + ")");
    std::uint64_t macs = 0;
    std::uint64_t len = input_samples, in = 1;
    const std::uint64_t ch = c.encoder_channels;
    for (std::size_t i = 0; i < c.encoder_kernels.size(); ++i) {
        len = conv_output_length(len, c.encoder_kernels[i], c.encoder_strides[i], 0);
        macs += len * c.encoder_kernels[i] * in * ch;
        in = ch;
    }
    const std::uint64_t t = len, d = c.hidden;
    if (c.arch == Arch::Transformer) {
        macs += t * ch * d; // input projection
        macs += t * c.pos_conv_kernel * d * d;
        for (std::size_t l = 0; l < c.num_layers; ++l) {
            macs += 4 * t * d * d + 2 * t * t * d + 2 * t * d * c.ffn;
        }
    } else {
        std::uint64_t width = ch;
        for (std::size_t l = 0; l < c.num_layers; ++l) {
            macs += 2 * t * 4 * (width * d + d * d);
            width = 2 * d;
        }
    }
    const std::uint64_t w = c.layer_width(), classes = c.num_clusters;
    if (c.head == HeadKind::Linear) {
        macs += t * w * classes;
    } else {
        macs += t * w * c.head_projection + t * c.head_projection * classes;
    }
    return macs;
}

std::uint64_t tally_macs(const Model<float> &model, const std::vector<float> &samples) {
    NoGradGuard no_grad;
    const auto packed = pack_waveforms<float>({std::span<const float>(samples)});
    MacTallyScope scope;
    model.forward(packed);
    return scope.total();
}

std::size_t measure_peak_memory(const std::function<void()> &run) {
    require(MemoryTracker::enabled(), "not_instrumented", "memory tracking is disabled");
    const std::size_t baseline = MemoryTracker::live_bytes();
    MemoryTracker::reset_peak();
    run();
    return MemoryTracker::peak_bytes() - baseline;
}

TimingStats measure_time(const std::function<void()> &run, std::size_t repeats) {
    require(repeats >= 1, "invalid_argument", "measure_time: repeats must be at least 1");
    run(); // warm-up, untimed
    TimingStats s;
    s.min_s = std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (std::size_t i = 0; i < repeats; ++i) {
        const auto start = std::chrono::steady_clock::now();
        run();
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        total += dt;
        s.min_s = std::min(s.min_s, dt);
        s.max_s = std::max(s.max_s, dt);
    }
    s.runs = repeats;
    // the mean of rounded sums can drift a hair outside [min, max]
    s.mean_s = std::clamp(total / double(repeats), s.min_s, s.max_s);
    return s;
}

std::vector<float> profile_waveform(double seconds, std::uint64_t seed) {
    require(seconds > 0.0, "invalid_argument", "profile_waveform: duration must be positive");
    Rng rng(seed);
    std::vector<float> w(static_cast<std::size_t>(std::llround(seconds * 16000.0)));
    for (auto &v : w) {
        v = static_cast<float>(0.1 * rng.normal());
    }
    return w;
}

namespace {

std::string csv_line(const ProfileRecord &r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.17g,%zu,%llu,%.17g,%.17g,%.17g,%zu\n", r.model.c_str(), r.seconds,
                  r.peak_bytes, static_cast<unsigned long long>(r.macs), r.mean_time_s, r.min_time_s, r.max_time_s,
                  r.runs);
    return buf;
}

void check_model_name(const std::string &name) {
    require(!name.empty() && name.find_first_of(",\n\"") == std::string::npos, "invalid_config",
            "profile: model name '" + name + "' cannot be written to CSV");
}

} // namespace

std::vector<ProfileRecord> sweep_profile(const std::vector<ModelConfig> &models,
                                         const std::vector<double> &lengths_seconds, std::size_t repeats,
                                         const std::string &csv_path) {
    require(!models.empty() && !lengths_seconds.empty(), "invalid_argument", "sweep_profile: empty model or length list");
    require(repeats >= 1, "invalid_argument", "sweep_profile: repeats must be at least 1");
    auto order = models;
    std::stable_sort(order.begin(), order.end(), [](const auto &a, const auto &b) { return a.name < b.name; });
    auto lengths = lengths_seconds;
    std::sort(lengths.begin(), lengths.end());
    for (const auto &m : order) {
        check_model_name(m.name);
    }

    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path, std::ios::trunc);
        require(csv.good(), "io_error", "cannot write '" + csv_path + "'");
        csv << kProfileCsvHeader << '\n' << std::flush;
    }
    std::vector<ProfileRecord> out;
    for (const auto &cfg : order) {
        const Model<float> model(cfg, 0);
        for (double secs : lengths) {
            const auto wave = profile_waveform(secs);
            const auto packed = pack_waveforms<float>({std::span<const float>(wave)});
            auto forward = [&] {
                NoGradGuard no_grad;
                model.forward(packed);
            };
            ProfileRecord r;
            r.model = cfg.name;
            r.seconds = secs;
            r.macs = count_macs(cfg, wave.size());
            r.peak_bytes = measure_peak_memory(forward);
            const auto timing = measure_time(forward, repeats);
            r.mean_time_s = timing.mean_s;
            r.min_time_s = timing.min_s;
            r.max_time_s = timing.max_s;
            r.runs = timing.runs;
            if (csv.is_open()) {
                csv << csv_line(r) << std::flush;
            }
            out.push_back(std::move(r));
        }
    }
    return out;
}

void write_profile_csv(const std::string &path, const std::vector<ProfileRecord> &records) {
    std::ofstream f(path, std::ios::trunc);
    require(f.good(), "io_error", "cannot write '" + path + "'");
    f << kProfileCsvHeader << '\n';
    for (const auto &r : records) {
        check_model_name(r.model);
        f << csv_line(r);
    }
    require(f.good(), "io_error", "failed writing '" + path + "'");
}

std::vector<ProfileRecord> read_profile_csv(const std::string &path) {
    std::ifstream f(path);
    require(f.good(), "missing_input", "no profile CSV at '" + path + "'");
    std::string line;
    std::getline(f, line);
    require(line == kProfileCsvHeader, "malformed_profile", "unexpected profile CSV header in '" + path + "'");
    std::vector<ProfileRecord> out;
    while (std::getline(f, line)) {
        const auto comma = line.find(',');
        require(comma != std::string::npos && comma > 0, "malformed_profile", "bad profile row: " + line);
        ProfileRecord r;
        r.model = line.substr(0, comma);
        unsigned long long macs = 0;
        char extra = 0;
        const int n = std::sscanf(line.c_str() + comma + 1, "%lf,%zu,%llu,%lf,%lf,%lf,%zu%c", &r.seconds, &r.peak_bytes,
                                  &macs, &r.mean_time_s, &r.min_time_s, &r.max_time_s, &r.runs, &extra);
        require(n == 7, "malformed_profile", "bad profile row: " + line);
        r.macs = macs;
        out.push_back(std::move(r));
    }
    return out;
}

std::string to_string(ProfileMetric metric) {
    switch (metric) {
    case ProfileMetric::PeakMemory:
        return "memory";
    case ProfileMetric::Macs:
        return "macs";
    case ProfileMetric::Time:
        return "time";
    }
    return "?";
}

namespace {

double metric_value(const ProfileRecord &r, ProfileMetric m) {
    switch (m) {
    case ProfileMetric::PeakMemory:
        return double(r.peak_bytes) / 1e6;
    case ProfileMetric::Macs:
        return double(r.macs) / 1e9;
    case ProfileMetric::Time:
        return r.mean_time_s;
    }
    return 0.0;
}

const char *metric_label(ProfileMetric m) {
    switch (m) {
    case ProfileMetric::PeakMemory:
        return "Peak memory allocation (MB)";
    case ProfileMetric::Macs:
        return "Multiply-accumulate operations (GMACs)";
    case ProfileMetric::Time:
        return "Execution time, mean of runs (s)";
    }
    return "";
}

std::string xml_escape(const std::string &s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

} // namespace

std::string render_profile_svg(const std::vector<ProfileRecord> &records, ProfileMetric metric) {
    require(!records.empty(), "invalid_argument", "render_profile_svg: no records");
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    double x_max = 0.0, y_max = 0.0;
    for (const auto &r : records) {
        const double y = metric_value(r, metric);
        series[r.model].emplace_back(r.seconds, y);
        x_max = std::max(x_max, r.seconds);
        y_max = std::max(y_max, y);
    }
    x_max = x_max > 0.0 ? x_max : 1.0;
    y_max = y_max > 0.0 ? y_max : 1.0;

    // plot area inside the 800 x 400 canvas
    const double left = 80, right = 620, top = 30, bottom = 340;
    auto px = [&](double x) { return left + (right - left) * x / x_max; };
    auto py = [&](double y) { return bottom - (bottom - top) * y / y_max; };
    static const char *colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

    std::ostringstream svg;
    svg.setf(std::ios::fixed);
    svg.precision(2);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 400\" width=\"800\" height=\"400\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"white\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x_max * i / 4.0, yv = y_max * i / 4.0;
        svg << "<text x=\"" << px(xv) << "\" y=\"" << bottom + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
            << xv << "</text>\n";
        svg << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" font-size=\"11\" text-anchor=\"end\">";
        svg.precision(3);
        svg << yv << "</text>\n";
        svg.precision(2);
    }
    svg << "<text x=\"" << (left + right) / 2 << "\" y=\"385\" font-size=\"13\" text-anchor=\"middle\">"
        << "Utterance length (s)</text>\n"
        << "<text x=\"18\" y=\"" << (top + bottom) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
        << (top + bottom) / 2 << ")\">" << metric_label(metric) << "</text>\n";

    std::size_t k = 0;
    for (const auto &[name, points] : series) {
        const char *colour = colours[k % 6];
        svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < points.size(); ++i) {
            svg << (i ? " " : "") << px(points[i].first) << "," << py(points[i].second);
        }
        svg << "\"/>\n";
        const double ly = top + 20.0 * double(k);
        svg << "<line x1=\"640\" y1=\"" << ly << "\" x2=\"665\" y2=\"" << ly << "\" stroke=\"" << colour
            << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"672\" y=\"" << ly + 4 << "\" font-size=\"12\">" << xml_escape(name) << "</text>\n";
        ++k;
    }
    svg << "</svg>\n";
    return svg.str();
}

std::vector<std::string> write_profile_svgs(const std::string &prefix, const std::vector<ProfileRecord> &records) {
    std::vector<std::string> paths;
    for (auto metric : {ProfileMetric::PeakMemory, ProfileMetric::Macs, ProfileMetric::Time}) {
        const std::string path = prefix + "_" + to_string(metric) + ".svg";
        std::ofstream f(path, std::ios::trunc);
        require(f.good(), "io_error", "cannot write '" + path + "'");
        f << render_profile_svg(records, metric);
        paths.push_back(path);
    }
    return paths;
}

LinearFit fit_line(const std::vector<double> &x, const std::vector<double> &y) {
    require(x.size() == y.size() && x.size() >= 2, "invalid_argument", "fit_line: need at least two paired points");
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0.0, "invalid_argument", "fit_line: x values are all equal");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (f.intercept + f.slope * x[i]);
        ss_res += e * e;
    }
    f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return f;
}

} // namespace lstmkd
