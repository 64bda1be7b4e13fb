#include "sigforge/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "sigforge/errors.hpp"
#include "sigforge/pipeline.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

namespace {

struct Moments {
    double mean_x = 0.0, mean_y = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
};

Moments moments(const std::vector<double>& xs, const std::vector<double>& ys) {
    Moments m;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) m.mean_x += x;
    for (double y : ys) m.mean_y += y;
    m.mean_x /= n;
    m.mean_y /= n;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - m.mean_x;
        const double dy = ys[i] - m.mean_y;
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    return m;
}

void check_inputs(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw ValidationError("correlation: length mismatch " + std::to_string(xs.size()) +
                              " vs " + std::to_string(ys.size()));
    if (xs.size() < 3)
        throw ValidationError("correlation: need n >= 3, got " + std::to_string(xs.size()));
}

}  // namespace

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    check_inputs(xs, ys);
    const Moments m = moments(xs, ys);
    if (m.sxx == 0.0 || m.syy == 0.0)
        throw ValidationError("pearson: zero variance, correlation undefined");
    return m.sxy / std::sqrt(m.sxx * m.syy);
}

LinearFit linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
    check_inputs(xs, ys);
    const Moments m = moments(xs, ys);
    if (m.sxx == 0.0) throw ValidationError("linear_fit: zero x-variance");
    LinearFit fit;
    fit.slope = m.sxy / m.sxx;
    fit.intercept = m.mean_y - fit.slope * m.mean_x;
    fit.r_squared = m.syy == 0.0 ? 0.0 : (m.sxy * m.sxy) / (m.sxx * m.syy);
    return fit;
}

namespace {

// Regularized incomplete beta via the Lentz continued fraction.
double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-14) break;
    }
    return h;
}

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double pearson_of_permuted(const std::vector<double>& xs, const std::vector<double>& ys,
                           const std::vector<std::size_t>& perm) {
    const double n = static_cast<double>(xs.size());
    double mean_x = 0.0, mean_y = 0.0;
    for (double x : xs) mean_x += x;
    for (double y : ys) mean_y += y;
    mean_x /= n;
    mean_y /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mean_x;
        const double dy = ys[perm[i]] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double p_value(const std::vector<double>& xs, const std::vector<double>& ys, PValueMethod method,
               int permutations, std::uint64_t seed) {
    const double r_obs = pearson(xs, ys);
    const std::size_t n = xs.size();

    if (method == PValueMethod::kTApprox) {
        const double df = static_cast<double>(n) - 2.0;
        const double denom = 1.0 - r_obs * r_obs;
        if (denom <= 0.0) return 0.0;  // |r| = 1
        const double t = r_obs * std::sqrt(df / denom);
        return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    }

    if (permutations < 1) throw ValidationError("p_value: permutations must be >= 1");
    const double threshold = std::fabs(r_obs) - 1e-12;

    // Exhaustive when all n! pairings fit the budget: exact, no smoothing.
    double factorial = 1.0;
    for (std::size_t i = 2; i <= n; ++i) factorial *= static_cast<double>(i);
    if (factorial <= static_cast<double>(permutations)) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::size_t count = 0, total = 0;
        do {
            count += std::fabs(pearson_of_permuted(xs, ys, perm)) >= threshold;
            ++total;
        } while (std::next_permutation(perm.begin(), perm.end()));
        return static_cast<double>(count) / static_cast<double>(total);
    }

    // Monte Carlo; each draw is evaluated with its inverse so the estimate is
    // exactly symmetric in x and y.
    Rng rng(derive_seed(seed, "permutation-p"));
    const int half = std::max(1, permutations / 2);
    std::vector<std::size_t> perm(n), inverse(n);
    std::size_t count = 0;
    for (int k = 0; k < half; ++k) {
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
        for (std::size_t i = 0; i < n; ++i) inverse[perm[i]] = i;
        count += std::fabs(pearson_of_permuted(xs, ys, perm)) >= threshold;
        count += std::fabs(pearson_of_permuted(xs, ys, inverse)) >= threshold;
    }
    return (1.0 + static_cast<double>(count)) / (2.0 * half + 1.0);
}

SsimFarStudy study_from_points(std::vector<StudyPoint> points, const StudyOptions& options) {
    if (points.size() < 3)
        throw ValidationError("ssim_far_study: need >= 3 points, got " +
                              std::to_string(points.size()));
    std::vector<double> xs, ys;
    for (const auto& p : points) {
        xs.push_back(p.mean_ssim);
        ys.push_back(p.far);
    }
    SsimFarStudy study;
    study.points = std::move(points);
    study.correlation.r = pearson(xs, ys);
    study.correlation.r_squared = study.correlation.r * study.correlation.r;
    study.correlation.n = xs.size();
    const LinearFit fit = linear_fit(xs, ys);
    study.correlation.slope = fit.slope;
    study.correlation.intercept = fit.intercept;
    study.correlation.p = p_value(xs, ys, options.method, options.permutations, options.seed);
    study.correlation.method =
        options.method == PValueMethod::kPermutation ? "permutation" : "t-approx";
    return study;
}

SsimFarStudy ssim_far_study(const std::vector<const SyntheticSet*>& sets,
                            const std::vector<const BlackBoxVerifier*>& models,
                            const StudyOptions& options) {
    if (sets.empty() || models.empty())
        throw ValidationError("ssim_far_study: need at least one set and one model");

    struct Bucket {
        std::string tag;
        double ssim_sum = 0.0;
        std::size_t ssim_count = 0;
        std::size_t attempts = 0;
        std::size_t accepted = 0;
    };
    std::map<std::string, Bucket> buckets;

    for (const auto* set : sets) {
        for (const auto& sample : set->samples) {
            std::string key;
            if (options.band_binning) {
                const int band =
                    static_cast<int>(std::floor(sample.ssim_to_reference / options.band_width));
                char buf[48];
                std::snprintf(buf, sizeof buf, "band_%+03d", band);
                key = buf;
            } else {
                key = to_string(set->provenance);
            }
            Bucket& b = buckets[key];
            b.tag = key;
            b.ssim_sum += sample.ssim_to_reference;
            b.ssim_count++;
            const GrayImage probe = preprocess(sample.image, options.image_size);
            for (const auto* model : models) {
                if (model->user_id() != sample.user_id) continue;
                b.attempts++;
                b.accepted += model->verify(probe).accepted ? 1 : 0;
            }
        }
    }

    std::vector<StudyPoint> points;
    for (const auto& [key, b] : buckets) {
        if (b.attempts == 0) continue;
        StudyPoint p;
        p.set_tag = b.tag;
        p.mean_ssim = b.ssim_sum / static_cast<double>(b.ssim_count);
        p.far = static_cast<double>(b.accepted) / static_cast<double>(b.attempts);
        p.attempts = b.attempts;
        points.push_back(std::move(p));
    }
    return study_from_points(std::move(points), options);
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

double parse_double(const std::string& s) { return s.empty() ? 0.0 : std::strtod(s.c_str(), nullptr); }

}  // namespace

void emit_report_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "# sigforge-report-csv-v1: record,model,user_id,scenario,far,frr,"
           "impostor_attempts,impostor_accepted,genuine_attempts,genuine_rejected\n";
    out << "record,model,user_id,scenario,far,frr,impostor_attempts,impostor_accepted,"
           "genuine_attempts,genuine_rejected\n";
    for (const auto& c : report.cells) {
        out << "cell," << c.model_tag << "," << c.user_id << "," << c.scenario << ","
            << (c.metrics.far ? fmt_double(*c.metrics.far) : "") << ","
            << (c.metrics.frr ? fmt_double(*c.metrics.frr) : "") << ","
            << c.metrics.impostor_attempts << "," << c.metrics.impostor_accepted << ","
            << c.metrics.genuine_attempts << "," << c.metrics.genuine_rejected << "\n";
    }
    for (const auto& a : report.aggregates) {
        out << "aggregate,," << -1 << "," << a.scenario << ","
            << (a.far_pooled ? fmt_double(*a.far_pooled) : "") << ","
            << (a.frr_pooled ? fmt_double(*a.frr_pooled) : "") << "," << a.impostor_attempts
            << ",0," << a.genuine_attempts << ",0\n";
    }
    if (!out) throw IoError(path.string() + ": write failed");
}

EvalReport parse_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open file");
    EvalReport report;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_csv_line(line);
        if (fields.empty() || fields[0] == "record") continue;
        if (fields[0] == "cell") {
            EvalCell c;
            c.model_tag = fields[1];
            c.user_id = std::stoi(fields[2]);
            c.scenario = fields[3];
            if (!fields[4].empty()) c.metrics.far = parse_double(fields[4]);
            if (!fields[5].empty()) c.metrics.frr = parse_double(fields[5]);
            c.metrics.impostor_attempts = std::stoull(fields[6]);
            c.metrics.impostor_accepted = std::stoull(fields[7]);
            c.metrics.genuine_attempts = std::stoull(fields[8]);
            c.metrics.genuine_rejected = std::stoull(fields[9]);
            report.cells.push_back(std::move(c));
        } else if (fields[0] == "aggregate") {
            ScenarioAggregate a;
            a.scenario = fields[3];
            if (!fields[4].empty()) a.far_pooled = parse_double(fields[4]);
            if (!fields[5].empty()) a.frr_pooled = parse_double(fields[5]);
            a.impostor_attempts = std::stoull(fields[6]);
            a.genuine_attempts = std::stoull(fields[8]);
            report.aggregates.push_back(std::move(a));
        }
    }
    return report;
}

void emit_heatmap_csv(const EvalReport& report, const std::filesystem::path& path) {
    // rows = model tags, columns = scenarios, values = FAR (pooled per tag).
    std::vector<std::string> scenarios;
    std::vector<std::string> tags;
    for (const auto& c : report.cells) {
        if (std::find(scenarios.begin(), scenarios.end(), c.scenario) == scenarios.end())
            scenarios.push_back(c.scenario);
        if (std::find(tags.begin(), tags.end(), c.model_tag) == tags.end())
            tags.push_back(c.model_tag);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "# sigforge-heatmap-csv-v1: model rows, scenario columns, FAR values\n";
    out << "model";
    for (const auto& s : scenarios) out << "," << s;
    out << "\n";
    for (const auto& tag : tags) {
        out << tag;
        for (const auto& s : scenarios) {
            std::size_t attempts = 0, accepted = 0;
            for (const auto& c : report.cells) {
                if (c.model_tag != tag || c.scenario != s || !c.metrics.far) continue;
                attempts += c.metrics.impostor_attempts;
                accepted += c.metrics.impostor_accepted;
            }
            out << ",";
            if (attempts > 0)
                out << fmt_double(static_cast<double>(accepted) / static_cast<double>(attempts));
        }
        out << "\n";
    }
}

void emit_radar_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "# sigforge-radar-csv-v1: per model per scenario FAR/FRR axes\n";
    out << "model,scenario,far,frr\n";
    std::vector<std::string> tags;
    for (const auto& c : report.cells)
        if (std::find(tags.begin(), tags.end(), c.model_tag) == tags.end())
            tags.push_back(c.model_tag);
    for (const auto& tag : tags) {
        std::map<std::string, std::array<std::size_t, 4>> rows;  // scenario -> counts
        for (const auto& c : report.cells) {
            if (c.model_tag != tag) continue;
            auto& r = rows[c.scenario];
            r[0] += c.metrics.impostor_attempts;
            r[1] += c.metrics.impostor_accepted;
            r[2] += c.metrics.genuine_attempts;
            r[3] += c.metrics.genuine_rejected;
        }
        for (const auto& [scenario, r] : rows) {
            out << tag << "," << scenario << ",";
            if (r[0] > 0) out << fmt_double(static_cast<double>(r[1]) / static_cast<double>(r[0]));
            out << ",";
            if (r[2] > 0) out << fmt_double(static_cast<double>(r[3]) / static_cast<double>(r[2]));
            out << "\n";
        }
    }
}

void emit_study_csv(const SsimFarStudy& study, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "# sigforge-study-csv-v1: correlation header row, then tag,mean_ssim,far,attempts\n";
    out << "r,r_squared,p,n,slope,intercept,method\n";
    out << fmt_double(study.correlation.r) << "," << fmt_double(study.correlation.r_squared)
        << "," << fmt_double(study.correlation.p) << "," << study.correlation.n << ","
        << fmt_double(study.correlation.slope) << "," << fmt_double(study.correlation.intercept)
        << "," << study.correlation.method << "\n";
    out << "tag,mean_ssim,far,attempts\n";
    for (const auto& p : study.points)
        out << p.set_tag << "," << fmt_double(p.mean_ssim) << "," << fmt_double(p.far) << ","
            << p.attempts << "\n";
}

SsimFarStudy parse_study_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open file");
    SsimFarStudy study;
    std::string line;
    int section = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("r,", 0) == 0) {
            section = 1;
            continue;
        }
        if (line.rfind("tag,", 0) == 0) {
            section = 2;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (section == 1) {
            study.correlation.r = parse_double(fields[0]);
            study.correlation.r_squared = parse_double(fields[1]);
            study.correlation.p = parse_double(fields[2]);
            study.correlation.n = std::stoull(fields[3]);
            study.correlation.slope = parse_double(fields[4]);
            study.correlation.intercept = parse_double(fields[5]);
            study.correlation.method = fields[6];
        } else if (section == 2) {
            StudyPoint p;
            p.set_tag = fields[0];
            p.mean_ssim = parse_double(fields[1]);
            p.far = parse_double(fields[2]);
            p.attempts = std::stoull(fields[3]);
            study.points.push_back(std::move(p));
        }
    }
    return study;
}

void emit_study_svg(const SsimFarStudy& study, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    const int w = 480, h = 360, margin = 48;
    double min_x = 1e9, max_x = -1e9, min_y = 0.0, max_y = 0.0;
    for (const auto& p : study.points) {
        min_x = std::min(min_x, p.mean_ssim);
        max_x = std::max(max_x, p.mean_ssim);
        max_y = std::max(max_y, p.far);
    }
    if (max_x <= min_x) max_x = min_x + 1.0;
    if (max_y <= min_y) max_y = min_y + 1.0;
    const auto px = [&](double x) {
        return margin + (x - min_x) / (max_x - min_x) * (w - 2 * margin);
    };
    const auto py = [&](double y) {
        return h - margin - (y - min_y) / (max_y - min_y) * (h - 2 * margin);
    };
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
        << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << h - margin << "\" stroke=\"black\"/>\n";
    // fitted line across the x range
    const double y0 = study.correlation.intercept + study.correlation.slope * min_x;
    const double y1 = study.correlation.intercept + study.correlation.slope * max_x;
    out << "<line x1=\"" << px(min_x) << "\" y1=\"" << py(std::clamp(y0, min_y, max_y))
        << "\" x2=\"" << px(max_x) << "\" y2=\"" << py(std::clamp(y1, min_y, max_y))
        << "\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n";
    for (const auto& p : study.points)
        out << "<circle cx=\"" << px(p.mean_ssim) << "\" cy=\"" << py(p.far)
            << "\" r=\"3.5\" fill=\"crimson\"/>\n";
    out << "<text x=\"" << w / 2 << "\" y=\"" << h - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">mean SSIM</text>\n";
    out << "<text x=\"14\" y=\"" << h / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 "
        << h / 2 << ")\" text-anchor=\"middle\">FAR</text>\n";
    char label[128];
    std::snprintf(label, sizeof label, "r = %.4f, R2 = %.4f, p = %.3g", study.correlation.r,
                  study.correlation.r_squared, study.correlation.p);
    out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"12\">"
        << label << "</text>\n";
    out << "</svg>\n";
}

void emit_comparison_csv(const ComparisonReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "# sigforge-comparison-csv-v1: per-cell after-minus-before deltas\n";
    out << "user_id,scenario,model_before,model_after,far_delta,frr_delta\n";
    for (const auto& d : report.deltas) {
        out << d.user_id << "," << d.scenario << "," << d.model_tag_before << ","
            << d.model_tag_after << ",";
        if (d.far_delta) out << fmt_double(*d.far_delta);
        out << ",";
        if (d.frr_delta) out << fmt_double(*d.frr_delta);
        out << "\n";
    }
}

}  // namespace sigforge
