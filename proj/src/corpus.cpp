#include "sigforge/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "sigforge/errors.hpp"
#include "sigforge/parallel.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

std::string to_string(Label l) { return l == Label::kGenuine ? "genuine" : "forged"; }

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::kHuman: return "human";
        case Provenance::kRandom: return "random";
        case Provenance::kVae: return "vae";
        case Provenance::kCgan: return "cgan";
        case Provenance::kVaeSsi: return "vae_ssi";
        case Provenance::kProcedural: return "procedural";
    }
    return "?";
}

std::string to_string(Split s) {
    switch (s) {
        case Split::kUnassigned: return "unassigned";
        case Split::kTrain: return "train";
        case Split::kTest: return "test";
    }
    return "?";
}

Label label_from_string(const std::string& s) {
    if (s == "genuine") return Label::kGenuine;
    if (s == "forged") return Label::kForged;
    throw ValidationError("unknown label '" + s + "'");
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "human") return Provenance::kHuman;
    if (s == "random") return Provenance::kRandom;
    if (s == "vae") return Provenance::kVae;
    if (s == "cgan") return Provenance::kCgan;
    if (s == "vae_ssi") return Provenance::kVaeSsi;
    if (s == "procedural") return Provenance::kProcedural;
    throw ValidationError("unknown provenance '" + s + "'");
}

Split split_from_string(const std::string& s) {
    if (s == "unassigned") return Split::kUnassigned;
    if (s == "train") return Split::kTrain;
    if (s == "test") return Split::kTest;
    throw ValidationError("unknown split '" + s + "'");
}

void SignatureSample::validate() const {
    image.validate("SignatureSample");
    if (provenance == Provenance::kRandom && label != Label::kForged)
        throw ValidationError("SignatureSample: random provenance implies forged label");
}

void CorpusConfig::validate() const {
    if (users < 1) throw ValidationError("CorpusConfig: users must be >= 1");
    if (genuine_per_user < 1) throw ValidationError("CorpusConfig: genuine_per_user must be >= 1");
    if (forged_per_user < 1) throw ValidationError("CorpusConfig: forged_per_user must be >= 1");
    if (image_size < 16) throw ValidationError("CorpusConfig: image_size must be >= 16");
    if (stroke_count_min < 1) throw ValidationError("CorpusConfig: stroke_count_min must be >= 1");
    if (stroke_count_max < stroke_count_min)
        throw ValidationError("CorpusConfig: stroke_count_max must be >= stroke_count_min");
    if (genuine_jitter < 0.0) throw ValidationError("CorpusConfig: genuine_jitter must be >= 0");
    if (forger_perturbation <= genuine_jitter)
        throw ValidationError("CorpusConfig: forger_perturbation must exceed genuine_jitter");
}

namespace {

struct Point {
    double x = 0.0, y = 0.0;
};

// Connected cubic Bezier strokes: each stroke starts where the previous ended.
struct BaseSignature {
    Point start;
    std::vector<std::array<Point, 3>> strokes;  // P1, P2, P3 per stroke
};

BaseSignature make_base(Rng& rng, const CorpusConfig& cfg) {
    const double lo = 0.12, hi = 0.88;
    const auto pick = [&](double y_lo, double y_hi) {
        return Point{rng.uniform(lo, hi), rng.uniform(y_lo, y_hi)};
    };
    BaseSignature base;
    base.start = pick(0.3, 0.7);
    const int strokes = cfg.stroke_count_min +
                        static_cast<int>(rng.below(static_cast<std::uint64_t>(
                            cfg.stroke_count_max - cfg.stroke_count_min + 1)));
    for (int s = 0; s < strokes; ++s)
        base.strokes.push_back({pick(lo, hi), pick(lo, hi), pick(0.25, 0.75)});
    return base;
}

Point bezier(const Point& p0, const std::array<Point, 3>& cp, double t) {
    const double u = 1.0 - t;
    const double b0 = u * u * u, b1 = 3.0 * u * u * t, b2 = 3.0 * u * t * t, b3 = t * t * t;
    return {b0 * p0.x + b1 * cp[0].x + b2 * cp[1].x + b3 * cp[2].x,
            b0 * p0.y + b1 * cp[0].y + b2 * cp[1].y + b3 * cp[2].y};
}

void stamp(GrayImage& img, double cx, double cy, double radius, double ink) {
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= radius * radius) img.at(x, y) = std::min(img.at(x, y), ink);
        }
    }
}

// One 3x3 majority pass with edge replication, the binary equivalent of the
// pipeline's median filter.
std::vector<char> majority3x3(const std::vector<char>& mask, int w, int h) {
    std::vector<char> out(mask.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int votes = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    votes += mask[static_cast<std::size_t>(std::clamp(y + dy, 0, h - 1)) * w +
                                  std::clamp(x + dx, 0, w - 1)];
            out[static_cast<std::size_t>(y) * w + x] = votes >= 5;
        }
    }
    return out;
}

// A writer's fixed deformation of the base shape: forgers copy the target
// signature with their own consistent distortion, not with random scatter.
struct WriterStyle {
    std::vector<Point> shift;  // one offset per control point, start first

    static WriterStyle none(const BaseSignature& base) {
        WriterStyle s;
        s.shift.assign(1 + 3 * base.strokes.size(), Point{0.0, 0.0});
        return s;
    }
    static WriterStyle draw(const BaseSignature& base, double magnitude, Rng& rng) {
        WriterStyle s;
        s.shift.resize(1 + 3 * base.strokes.size());
        for (auto& p : s.shift) p = {magnitude * rng.normal(), magnitude * rng.normal()};
        return s;
    }
};

GrayImage render(const BaseSignature& base, const CorpusConfig& cfg, const WriterStyle& style,
                 Rng& rng, double jitter) {
    const int n = cfg.image_size;

    // Control points = base + writer's fixed deformation + per-sample jitter.
    BaseSignature sig = base;
    std::size_t point_index = 0;
    const auto place = [&](Point& p) {
        const Point& d = style.shift[point_index++];
        p.x = std::clamp(p.x + d.x + jitter * rng.normal(), 0.02, 0.98);
        p.y = std::clamp(p.y + d.y + jitter * rng.normal(), 0.02, 0.98);
    };
    place(sig.start);
    for (auto& stroke : sig.strokes)
        for (auto& p : stroke) place(p);

    GrayImage stamped(n, n, 1.0);
    const double radius = std::max(1.6, n / 30.0);
    const int steps = 4 * n;
    Point cursor = sig.start;
    for (const auto& stroke : sig.strokes) {
        for (int i = 0; i <= steps; ++i) {
            const Point p = bezier(cursor, stroke, static_cast<double>(i) / steps);
            stamp(stamped, p.x * (n - 1), p.y * (n - 1), radius, 0.0);
        }
        cursor = stroke[2];
    }

    // Settle the stroke footprint into a 3x3-majority fixed point so the
    // pipeline's median filter leaves the ink mask alone.
    std::vector<char> mask(stamped.size());
    for (std::size_t i = 0; i < stamped.size(); ++i) mask[i] = stamped.pixels[i] < 0.5;
    for (int pass = 0; pass < 16; ++pass) {
        std::vector<char> next = majority3x3(mask, n, n);
        const bool settled = next == mask;
        mask = std::move(next);
        if (settled) break;
    }

    // Compose the raw scan: dark ink texture on light paper texture.
    GrayImage img(n, n);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.pixels[i] = mask[i] ? 0.02 + 0.10 * rng.uniform() : 0.92 + 0.08 * rng.uniform();
    return img;
}

}  // namespace

std::vector<SignatureSample> generate_corpus(const CorpusConfig& cfg, int jobs) {
    cfg.validate();
    const int per_user = cfg.genuine_per_user + cfg.forged_per_user;
    std::vector<SignatureSample> samples(static_cast<std::size_t>(cfg.users) * per_user);
    parallel_for(static_cast<std::size_t>(cfg.users), jobs, [&](std::size_t u) {
        Rng rng(derive_seed(cfg.master_seed, "corpus-user", u));
        const BaseSignature base = make_base(rng, cfg);
        // Each user is imitated by a couple of forgers, each with a fixed
        // deformation of magnitude forger_perturbation.
        const WriterStyle own = WriterStyle::none(base);
        const std::array<WriterStyle, 2> forgers = {
            WriterStyle::draw(base, cfg.forger_perturbation, rng),
            WriterStyle::draw(base, cfg.forger_perturbation, rng)};
        const std::size_t offset = u * static_cast<std::size_t>(per_user);
        for (int i = 0; i < per_user; ++i) {
            const bool genuine = i < cfg.genuine_per_user;
            const WriterStyle& style =
                genuine ? own : forgers[static_cast<std::size_t>(i - cfg.genuine_per_user) %
                                        forgers.size()];
            SignatureSample& s = samples[offset + static_cast<std::size_t>(i)];
            s.image = quantize8(render(base, cfg, style, rng, cfg.genuine_jitter));
            s.user_id = static_cast<int>(u);
            s.label = genuine ? Label::kGenuine : Label::kForged;
            s.provenance = Provenance::kProcedural;
            s.split = Split::kUnassigned;
        }
    });
    return samples;
}

std::vector<SignatureSample> split_dataset(std::vector<SignatureSample> samples,
                                           double train_fraction, std::uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ValidationError("split_dataset: train_fraction must be in (0,1)");
    std::map<std::pair<int, Label>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].split != Split::kUnassigned)
            throw ValidationError("split_dataset: sample " + std::to_string(i) +
                                  " already has a split assigned");
        groups[{samples[i].user_id, samples[i].label}].push_back(i);
    }
    for (auto& [key, indices] : groups) {
        if (indices.size() < 2)
            throw ValidationError("split_dataset: user " + std::to_string(key.first) + " label " +
                                  to_string(key.second) + " has " +
                                  std::to_string(indices.size()) +
                                  " samples; need >= 2 to split");
        Rng rng(derive_seed(seed, "split-" + to_string(key.second),
                            static_cast<std::uint64_t>(key.first)));
        for (std::size_t i = indices.size(); i > 1; --i)
            std::swap(indices[i - 1], indices[rng.below(i)]);
        const std::size_t n_train = static_cast<std::size_t>(
            std::floor(static_cast<double>(indices.size()) * train_fraction));
        for (std::size_t i = 0; i < indices.size(); ++i)
            samples[indices[i]].split = i < n_train ? Split::kTrain : Split::kTest;
    }
    return samples;
}

std::vector<SignatureSample> ingest_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw IoError(root.string() + ": not a directory");
    std::vector<SignatureSample> samples;
    std::vector<fs::path> datasets;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) datasets.push_back(entry.path());
    std::sort(datasets.begin(), datasets.end());
    int user_index = 0;
    for (const auto& dataset : datasets) {
        std::vector<fs::path> users;
        for (const auto& entry : fs::directory_iterator(dataset))
            if (entry.is_directory()) users.push_back(entry.path());
        std::sort(users.begin(), users.end());
        for (const auto& user_dir : users) {
            for (const auto& [sub, label] :
                 {std::pair{"genuine", Label::kGenuine}, std::pair{"forgery", Label::kForged}}) {
                const fs::path dir = user_dir / sub;
                if (!fs::is_directory(dir)) continue;
                std::vector<fs::path> files;
                for (const auto& entry : fs::directory_iterator(dir))
                    if (entry.is_regular_file()) files.push_back(entry.path());
                std::sort(files.begin(), files.end());
                for (const auto& file : files) {
                    SignatureSample s;
                    s.image = load_image(file);
                    s.user_id = user_index;
                    s.label = label;
                    s.provenance = Provenance::kHuman;
                    samples.push_back(std::move(s));
                }
            }
            ++user_index;
        }
    }
    if (samples.empty()) throw IoError(root.string() + ": no samples found under dataset layout");
    return samples;
}

void save_samples(const std::vector<SignatureSample>& samples, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(dir / "samples.jsonl", std::ios::trunc);
    if (!manifest) throw IoError((dir / "samples.jsonl").string() + ": cannot open for writing");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const SignatureSample& s = samples[i];
        char name[32];
        std::snprintf(name, sizeof name, "sample_%05zu.pgm", i);
        save_pgm(s.image, dir / name);
        nlohmann::json j;
        j["file"] = name;
        j["user_id"] = s.user_id;
        j["label"] = to_string(s.label);
        j["provenance"] = to_string(s.provenance);
        j["split"] = to_string(s.split);
        manifest << j.dump() << "\n";
    }
}

std::vector<SignatureSample> load_samples(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "samples.jsonl");
    if (!manifest) throw IoError((dir / "samples.jsonl").string() + ": cannot open file");
    std::vector<SignatureSample> samples;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        SignatureSample s;
        s.image = load_pgm(dir / j.at("file").get<std::string>());
        s.user_id = j.at("user_id").get<int>();
        s.label = label_from_string(j.at("label").get<std::string>());
        s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
        s.split = split_from_string(j.at("split").get<std::string>());
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace sigforge
