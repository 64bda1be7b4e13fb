#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sigforge/errors.hpp"
#include "sigforge/image.hpp"
#include "sigforge/pipeline.hpp"
#include "sigforge/rng.hpp"

using namespace sigforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "sigforge_image_tests";
    fs::create_directories(dir);
    return dir;
}

GrayImage random_image(int w, int h, std::uint64_t seed) {
    Rng rng(seed);
    GrayImage img(w, h);
    for (double& v : img.pixels) v = rng.uniform();
    return img;
}

// Independent Otsu oracle: for every candidate split bin, compute the class
// statistics directly from the raw pixels (no histogram reuse).
int otsu_oracle_split(const GrayImage& img) {
    int best = -1;
    double best_var = -1.0;
    for (int k = 0; k < 255; ++k) {
        double n0 = 0.0, n1 = 0.0, s0 = 0.0, s1 = 0.0;
        for (double v : img.pixels) {
            const int b = otsu_bin(v);
            if (b <= k) {
                n0 += 1.0;
                s0 += b;
            } else {
                n1 += 1.0;
                s1 += b;
            }
        }
        if (n0 == 0.0 || n1 == 0.0) continue;
        const double mu0 = s0 / n0, mu1 = s1 / n1;
        const double var = n0 * n1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best = k;
        }
    }
    return best;
}

double catmull_rom(double t) {
    t = std::fabs(t);
    if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
    if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
    return 0.0;
}

// Direct 4x4 kernel-product oracle for one output pixel.
double bicubic_oracle_pixel(const GrayImage& img, int out_w, int out_h, int ox, int oy) {
    const double sx = (ox + 0.5) * img.width / static_cast<double>(out_w) - 0.5;
    const double sy = (oy + 0.5) * img.height / static_cast<double>(out_h) - 0.5;
    const int bx = static_cast<int>(std::floor(sx));
    const int by = static_cast<int>(std::floor(sy));
    double acc = 0.0;
    for (int j = -1; j <= 2; ++j) {
        for (int i = -1; i <= 2; ++i) {
            const int xx = std::clamp(bx + i, 0, img.width - 1);
            const int yy = std::clamp(by + j, 0, img.height - 1);
            acc += catmull_rom(sx - (bx + i)) * catmull_rom(sy - (by + j)) * img.at(xx, yy);
        }
    }
    return std::clamp(acc, 0.0, 1.0);
}

}  // namespace

TEST_CASE("pgm load scales by maxval") {
    const fs::path path = temp_dir() / "tiny.pgm";
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 2\n255\n";
    const unsigned char bytes[4] = {0, 255, 255, 0};
    out.write(reinterpret_cast<const char*>(bytes), 4);
    out.close();

    const GrayImage img = load_image(path);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.pixels == std::vector<double>{0.0, 1.0, 1.0, 0.0});
}

TEST_CASE("pgm header comments are skipped") {
    const fs::path path = temp_dir() / "comment.pgm";
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# a scanner comment\n1 1\n255\n";
    const unsigned char b = 128;
    out.write(reinterpret_cast<const char*>(&b), 1);
    out.close();
    const GrayImage img = load_pgm(path);
    CHECK(img.pixels[0] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("pgm errors are distinct") {
    const fs::path dir = temp_dir();

    SUBCASE("truncated payload") {
        const fs::path path = dir / "short.pgm";
        std::ofstream out(path, std::ios::binary);
        out << "P5\n4 4\n255\n";
        const unsigned char bytes[3] = {1, 2, 3};
        out.write(reinterpret_cast<const char*>(bytes), 3);
        out.close();
        CHECK_THROWS_WITH_AS(load_pgm(path), doctest::Contains("truncated"), IoError);
    }
    SUBCASE("unsupported magic") {
        const fs::path path = dir / "ascii.pgm";
        std::ofstream out(path, std::ios::binary);
        out << "P2\n1 1\n255\n0\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_pgm(path), doctest::Contains("unsupported"), IoError);
    }
    SUBCASE("zero dimension") {
        const fs::path path = dir / "zero.pgm";
        std::ofstream out(path, std::ios::binary);
        out << "P5\n0 4\n255\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_pgm(path), doctest::Contains("zero dimension"), IoError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_image(dir / "nope.pgm"), IoError);
    }
}

TEST_CASE("pgm round trip is exact for 8-bit images") {
    const GrayImage img = quantize8(random_image(64, 64, 99));
    const fs::path path = temp_dir() / "roundtrip.pgm";
    save_pgm(img, path);
    const GrayImage back = load_pgm(path);
    CHECK(back == img);
}

TEST_CASE("otsu splits a two-level image") {
    GrayImage img(20, 20);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = (i % 2 == 0) ? 0.2 : 0.8;
    const auto [threshold, binary] = otsu_binarize(img);
    CHECK(threshold > 0.2);
    CHECK(threshold < 0.8);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(binary.pixels[i] == (img.pixels[i] == 0.2 ? 1.0 : 0.0));
}

TEST_CASE("otsu constant image has no ink") {
    GrayImage img(8, 8, 0.4);
    const auto [threshold, binary] = otsu_binarize(img);
    CHECK(threshold == doctest::Approx(0.4));
    for (double v : binary.pixels) CHECK(v == 0.0);
}

TEST_CASE("otsu matches exhaustive oracle on skewed two-valued image") {
    GrayImage img(30, 30);
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = (i % 10 == 0) ? 0.1 : 0.7;
    const auto [threshold, binary] = otsu_binarize(img);
    const int k = otsu_oracle_split(img);
    CHECK(threshold == doctest::Approx(static_cast<double>(k + 1) / 256.0));
    std::size_t ink = 0;
    for (double v : binary.pixels) ink += (v == 1.0);
    CHECK(ink == 90);  // the 10% class at 0.1
}

TEST_CASE("otsu agrees with the exhaustive oracle on random images") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const GrayImage img = random_image(16, 16, seed * 31 + 1);
        const auto [threshold, binary] = otsu_binarize(img);
        const int k = otsu_oracle_split(img);
        REQUIRE(k >= 0);
        REQUIRE(threshold == doctest::Approx(static_cast<double>(k + 1) / 256.0));
        // Class membership matches the histogram split exactly; ink is the
        // minority class, ties to the dark side.
        std::size_t n_low = 0;
        for (double v : img.pixels) n_low += otsu_bin(v) <= k;
        const bool ink_is_low = n_low <= img.size() - n_low;
        for (std::size_t i = 0; i < img.size(); ++i)
            REQUIRE(binary.pixels[i] ==
                    ((otsu_bin(img.pixels[i]) <= k) == ink_is_low ? 1.0 : 0.0));
    }
}

TEST_CASE("median leaves constants alone and absorbs one outlier") {
    GrayImage img(5, 5, 0.6);
    CHECK(median_denoise(img).pixels == img.pixels);
    img.at(2, 2) = 1.0;
    const GrayImage filtered = median_denoise(img);
    CHECK(filtered.at(2, 2) == 0.6);
}

TEST_CASE("median matches a per-pixel sort oracle") {
    const GrayImage img = random_image(17, 13, 4242);
    const GrayImage out = median_denoise(img);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::array<double, 9> window;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    window[n++] = img.at(std::clamp(x + dx, 0, img.width - 1),
                                         std::clamp(y + dy, 0, img.height - 1));
            std::sort(window.begin(), window.end());
            REQUIRE(out.at(x, y) == window[4]);
        }
    }
}

TEST_CASE("median rejects tiny images") {
    CHECK_THROWS_AS(median_denoise(GrayImage(2, 5, 0.0)), ValidationError);
}

TEST_CASE("bicubic preserves constants and same-size identity") {
    GrayImage img(6, 9, 0.37);
    const GrayImage up = resize_bicubic(img, 13, 25);
    for (double v : up.pixels) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));

    const GrayImage rnd = random_image(12, 7, 5);
    CHECK(resize_bicubic(rnd, 12, 7) == rnd);
    CHECK_THROWS_AS(resize_bicubic(rnd, 0, 7), ValidationError);
}

TEST_CASE("bicubic matches the direct kernel oracle") {
    GrayImage img(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) img.at(x, y) = (x + 4.0 * y) / 15.0;

    SUBCASE("gradient upscale 4x4 -> 8x8") {
        const GrayImage up = resize_bicubic(img, 8, 8);
        for (int oy = 0; oy < 8; ++oy)
            for (int ox = 0; ox < 8; ++ox)
                REQUIRE(up.at(ox, oy) ==
                        doctest::Approx(bicubic_oracle_pixel(img, 8, 8, ox, oy)).epsilon(1e-9));
    }
    SUBCASE("random resize up and down") {
        const GrayImage rnd = random_image(11, 9, 77);
        const GrayImage out = resize_bicubic(rnd, 17, 5);
        for (int oy = 0; oy < 5; ++oy)
            for (int ox = 0; ox < 17; ++ox)
                REQUIRE(out.at(ox, oy) ==
                        doctest::Approx(bicubic_oracle_pixel(rnd, 17, 5, ox, oy)).epsilon(1e-9));
    }
}

TEST_CASE("preprocess maps a blank page to no ink") {
    GrayImage page(40, 40, 1.0);
    const GrayImage out = preprocess(page, 16);
    CHECK(out.width == 16);
    CHECK(out.height == 16);
    for (double v : out.pixels) CHECK(v == 0.0);
}

TEST_CASE("random signature is seeded and balanced") {
    const GrayImage a = random_signature(64, 64, 123);
    const GrayImage b = random_signature(64, 64, 123);
    CHECK(a == b);

    const GrayImage c = random_signature(64, 64, 124);
    CHECK(a.pixels != c.pixels);

    for (std::uint64_t seed : {1ULL, 9ULL, 4096ULL}) {
        const GrayImage img = random_signature(64, 64, seed);
        double ones = 0.0;
        for (double v : img.pixels) {
            REQUIRE((v == 0.0 || v == 1.0));
            ones += v;
        }
        const double frac = ones / static_cast<double>(img.size());
        CHECK(frac > 0.44);
        CHECK(frac < 0.56);
    }
}
