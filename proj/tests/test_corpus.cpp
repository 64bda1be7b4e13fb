#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <map>
#include <set>

#include "sigforge/corpus.hpp"
#include "sigforge/errors.hpp"
#include "sigforge/pipeline.hpp"
#include "sigforge/ssim.hpp"

using namespace sigforge;
namespace fs = std::filesystem;

namespace {

CorpusConfig tiny_config() {
    CorpusConfig cfg;
    cfg.users = 2;
    cfg.genuine_per_user = 4;
    cfg.forged_per_user = 4;
    cfg.image_size = 48;
    cfg.master_seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("corpus counts follow the config") {
    const auto samples = generate_corpus(tiny_config());
    CHECK(samples.size() == 16);
    std::map<int, int> per_user;
    std::map<std::pair<int, Label>, int> per_label;
    for (const auto& s : samples) {
        per_user[s.user_id]++;
        per_label[{s.user_id, s.label}]++;
        CHECK(s.provenance == Provenance::kProcedural);
        CHECK(s.split == Split::kUnassigned);
        s.validate();
    }
    CHECK(per_user.size() == 2);
    for (const auto& [user, count] : per_user) CHECK(count == 8);
    for (const auto& [key, count] : per_label) CHECK(count == 4);
}

TEST_CASE("corpus is byte-identical per master seed and parallel-safe") {
    const auto a = generate_corpus(tiny_config(), 1);
    const auto b = generate_corpus(tiny_config(), 1);
    const auto c = generate_corpus(tiny_config(), 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].image == c[i].image);
    }

    CorpusConfig other = tiny_config();
    other.master_seed = 8;
    const auto d = generate_corpus(other);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff |= !(a[i].image == d[i].image);
    CHECK(any_diff);
}

TEST_CASE("within-user genuine pairs are more similar than genuine-forged pairs") {
    CorpusConfig cfg;
    cfg.users = 4;
    cfg.genuine_per_user = 6;
    cfg.forged_per_user = 6;
    cfg.image_size = 64;
    cfg.master_seed = 7;
    const auto samples = generate_corpus(cfg);

    // The property that makes the corpus usable, measured in the space the
    // verifiers actually see.
    std::map<int, std::vector<GrayImage>> genuine, forged;
    for (const auto& s : samples) {
        GrayImage pre = preprocess(s.image, 64);
        (s.label == Label::kGenuine ? genuine : forged)[s.user_id].push_back(std::move(pre));
    }
    for (int u = 0; u < cfg.users; ++u) {
        const auto& g = genuine[u];
        const auto& f = forged[u];
        double within = 0.0;
        int nw = 0;
        for (std::size_t i = 0; i < g.size(); ++i)
            for (std::size_t j = i + 1; j < g.size(); ++j) {
                within += ssim_score(g[i], g[j]);
                ++nw;
            }
        double cross = 0.0;
        int nc = 0;
        for (const auto& gi : g)
            for (const auto& fj : f) {
                cross += ssim_score(gi, fj);
                ++nc;
            }
        CHECK(within / nw > cross / nc);
    }
}

TEST_CASE("corpus rejects invalid configs field by field") {
    CorpusConfig cfg = tiny_config();
    cfg.users = 0;
    CHECK_THROWS_WITH_AS(generate_corpus(cfg), doctest::Contains("users"), ValidationError);

    cfg = tiny_config();
    cfg.forger_perturbation = cfg.genuine_jitter;
    CHECK_THROWS_WITH_AS(generate_corpus(cfg), doctest::Contains("perturbation"), ValidationError);

    cfg = tiny_config();
    cfg.stroke_count_max = cfg.stroke_count_min - 1;
    CHECK_THROWS_WITH_AS(generate_corpus(cfg), doctest::Contains("stroke"), ValidationError);
}

TEST_CASE("split honors the per-user per-label two-thirds rule") {
    CorpusConfig cfg = tiny_config();
    cfg.users = 1;
    cfg.genuine_per_user = 24;
    cfg.forged_per_user = 24;
    cfg.image_size = 32;
    const auto split = split_dataset(generate_corpus(cfg), 2.0 / 3.0, 11);
    std::map<std::pair<Label, Split>, int> counts;
    for (const auto& s : split) counts[{s.label, s.split}]++;
    CHECK(counts[{Label::kGenuine, Split::kTrain}] == 16);
    CHECK(counts[{Label::kGenuine, Split::kTest}] == 8);
    CHECK(counts[{Label::kForged, Split::kTrain}] == 16);
    CHECK(counts[{Label::kForged, Split::kTest}] == 8);
}

TEST_CASE("split of four at one half is two and two") {
    CorpusConfig cfg = tiny_config();  // 4 genuine / 4 forged per user
    const auto split = split_dataset(generate_corpus(cfg), 0.5, 3);
    std::map<std::tuple<int, Label, Split>, int> counts;
    for (const auto& s : split) counts[{s.user_id, s.label, s.split}]++;
    for (const auto& [key, count] : counts) CHECK(count == 2);
}

TEST_CASE("split is a deterministic partition") {
    const auto base = generate_corpus(tiny_config());
    const auto a = split_dataset(base, 0.5, 42);
    const auto b = split_dataset(base, 0.5, 42);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].split == b[i].split);
        CHECK(a[i].split != Split::kUnassigned);
        CHECK(a[i].image == base[i].image);  // images untouched, only split set
    }

    CHECK_THROWS_AS(split_dataset(a, 0.5, 42), ValidationError);  // no re-splitting
    CHECK_THROWS_AS(split_dataset(base, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(split_dataset(base, 1.0, 1), ValidationError);
}

TEST_CASE("split rejects groups that cannot be divided") {
    CorpusConfig cfg = tiny_config();
    cfg.genuine_per_user = 1;
    CHECK_THROWS_WITH_AS(split_dataset(generate_corpus(cfg), 0.5, 1),
                         doctest::Contains("need >= 2"), ValidationError);
}

TEST_CASE("samples round trip through the directory format") {
    const fs::path dir = fs::temp_directory_path() / "sigforge_corpus_roundtrip";
    fs::remove_all(dir);
    const auto samples = split_dataset(generate_corpus(tiny_config()), 0.5, 9);
    save_samples(samples, dir);
    const auto loaded = load_samples(dir);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(loaded[i].image == samples[i].image);
        CHECK(loaded[i].user_id == samples[i].user_id);
        CHECK(loaded[i].label == samples[i].label);
        CHECK(loaded[i].provenance == samples[i].provenance);
        CHECK(loaded[i].split == samples[i].split);
    }
}

TEST_CASE("ingest reads the external dataset layout") {
    const fs::path root = fs::temp_directory_path() / "sigforge_ingest_root";
    fs::remove_all(root);
    const auto samples = generate_corpus(tiny_config());
    fs::create_directories(root / "deskset" / "u00" / "genuine");
    fs::create_directories(root / "deskset" / "u00" / "forgery");
    save_pgm(samples[0].image, root / "deskset" / "u00" / "genuine" / "a.pgm");
    save_pgm(samples[1].image, root / "deskset" / "u00" / "genuine" / "b.pgm");
    save_pgm(samples[4].image, root / "deskset" / "u00" / "forgery" / "c.pgm");

    const auto ingested = ingest_dataset(root);
    REQUIRE(ingested.size() == 3);
    CHECK(ingested[0].label == Label::kGenuine);
    CHECK(ingested[2].label == Label::kForged);
    for (const auto& s : ingested) {
        CHECK(s.provenance == Provenance::kHuman);
        CHECK(s.user_id == 0);
    }
    CHECK_THROWS_AS(ingest_dataset(root / "missing"), IoError);
}

TEST_CASE("preprocess of the seed-7 corpus image matches the frozen golden file") {
    CorpusConfig cfg;
    cfg.users = 1;
    cfg.genuine_per_user = 1;
    cfg.forged_per_user = 1;
    cfg.image_size = 96;
    cfg.master_seed = 7;
    const auto samples = generate_corpus(cfg);
    const GrayImage out = quantize8(preprocess(samples[0].image, 64));
    const GrayImage golden = load_pgm(fs::path(SIGFORGE_TEST_DATA) / "golden_preprocess_seed7.pgm");
    CHECK(out == golden);
}

TEST_CASE("preprocess is idempotent on the ink mask of corpus images") {
    const auto samples = generate_corpus(tiny_config());
    for (std::size_t i = 0; i < 4; ++i) {
        const GrayImage once = preprocess(samples[i].image, 48);
        const GrayImage twice = preprocess(once, 48);
        // Re-binarize both; the ink mask must be stable.
        const auto [t1, mask1] = otsu_binarize(once);
        const auto [t2, mask2] = otsu_binarize(twice);
        REQUIRE(mask1.size() == mask2.size());
        std::size_t diff = 0;
        for (std::size_t p = 0; p < mask1.size(); ++p) diff += mask1.pixels[p] != mask2.pixels[p];
        CHECK(diff == 0);
    }
}
