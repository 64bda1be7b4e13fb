#include "sigforge/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sigforge/errors.hpp"
#include "sigforge/rng.hpp"

namespace sigforge {

int otsu_bin(double intensity) {
    const int b = static_cast<int>(intensity * 256.0);
    return b < 0 ? 0 : b > 255 ? 255 : b;
}

std::pair<double, GrayImage> otsu_binarize(const GrayImage& img) {
    img.validate("otsu_binarize");
    std::array<double, 256> hist{};
    for (double v : img.pixels) hist[static_cast<std::size_t>(otsu_bin(v))] += 1.0;

    int lo = 0, hi = 255;
    while (lo < 255 && hist[static_cast<std::size_t>(lo)] == 0.0) ++lo;
    while (hi > 0 && hist[static_cast<std::size_t>(hi)] == 0.0) --hi;
    if (lo == hi) {
        // Single occupied bin: a blank page, nothing to split.
        GrayImage blank(img.width, img.height, 0.0);
        return {img.pixels.empty() ? 0.0 : img.pixels[0], blank};
    }

    const double total = static_cast<double>(img.size());
    double sum_all = 0.0;
    for (int b = 0; b < 256; ++b) sum_all += static_cast<double>(b) * hist[static_cast<std::size_t>(b)];

    // Exhaustive split search maximizing between-class variance
    //   w0*w1*(mu0 - mu1)^2, first maximum wins.
    int best = lo;
    double best_var = -1.0;
    double w0 = 0.0, sum0 = 0.0;
    for (int k = lo; k < hi; ++k) {
        w0 += hist[static_cast<std::size_t>(k)];
        sum0 += static_cast<double>(k) * hist[static_cast<std::size_t>(k)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best = k;
        }
    }

    // Ink is the minority class (signature strokes are sparse), with ties
    // going to the dark side. This keeps polarity stable when the pipeline
    // is re-applied to its own binary output, where ink sits at 1.
    // Membership is decided by bin so the class counts match the histogram
    // split exactly; the returned threshold is the exclusive upper edge.
    double n_low = 0.0;
    for (int b = lo; b <= best; ++b) n_low += hist[static_cast<std::size_t>(b)];
    const bool ink_is_low = n_low <= total - n_low;
    GrayImage binary(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const bool low = otsu_bin(img.pixels[i]) <= best;
        binary.pixels[i] = (low == ink_is_low) ? 1.0 : 0.0;
    }
    return {static_cast<double>(best + 1) / 256.0, binary};
}

GrayImage median_denoise(const GrayImage& img) {
    img.validate("median_denoise");
    if (img.width < 3 || img.height < 3)
        throw ValidationError("median_denoise: image " + std::to_string(img.width) + "x" +
                              std::to_string(img.height) + " smaller than 3x3");
    GrayImage out(img.width, img.height);
    std::array<double, 9> window;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = std::clamp(y + dy, 0, img.height - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = std::clamp(x + dx, 0, img.width - 1);
                    window[static_cast<std::size_t>(n++)] = img.at(xx, yy);
                }
            }
            std::nth_element(window.begin(), window.begin() + 4, window.end());
            out.at(x, y) = window[4];
        }
    }
    return out;
}

namespace {

// Catmull-Rom kernel, a = -0.5.
double cubic_weight(double t) {
    t = std::fabs(t);
    if (t <= 1.0) return (1.5 * t - 2.5) * t * t + 1.0;
    if (t < 2.0) return ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0;
    return 0.0;
}

}  // namespace

GrayImage resize_bicubic(const GrayImage& img, int out_w, int out_h) {
    img.validate("resize_bicubic");
    if (out_w < 1 || out_h < 1)
        throw ValidationError("resize_bicubic: target dimension " + std::to_string(out_w) +
                              "x" + std::to_string(out_h) + " must be >= 1");
    if (img.width == 0 || img.height == 0)
        throw ValidationError("resize_bicubic: empty source image");
    if (out_w == img.width && out_h == img.height) return img;

    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;

    // Separable: horizontal pass into a temp buffer, then vertical.
    std::vector<double> rows(static_cast<std::size_t>(out_w) * img.height);
    for (int ox = 0; ox < out_w; ++ox) {
        const double src_x = (ox + 0.5) * sx - 0.5;
        const int base = static_cast<int>(std::floor(src_x));
        double w[4];
        for (int i = 0; i < 4; ++i) w[i] = cubic_weight(src_x - (base - 1 + i));
        for (int y = 0; y < img.height; ++y) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) {
                const int xx = std::clamp(base - 1 + i, 0, img.width - 1);
                acc += w[i] * img.at(xx, y);
            }
            rows[static_cast<std::size_t>(y) * out_w + ox] = acc;
        }
    }
    GrayImage out(out_w, out_h);
    for (int oy = 0; oy < out_h; ++oy) {
        const double src_y = (oy + 0.5) * sy - 0.5;
        const int base = static_cast<int>(std::floor(src_y));
        double w[4];
        for (int i = 0; i < 4; ++i) w[i] = cubic_weight(src_y - (base - 1 + i));
        for (int ox = 0; ox < out_w; ++ox) {
            double acc = 0.0;
            for (int i = 0; i < 4; ++i) {
                const int yy = std::clamp(base - 1 + i, 0, img.height - 1);
                acc += w[i] * rows[static_cast<std::size_t>(yy) * out_w + ox];
            }
            out.at(ox, oy) = std::clamp(acc, 0.0, 1.0);
        }
    }
    return out;
}

GrayImage preprocess(const GrayImage& img, int target_w, int target_h) {
    const GrayImage denoised = median_denoise(img);
    auto [threshold, binary] = otsu_binarize(denoised);
    (void)threshold;
    GrayImage resized = resize_bicubic(binary, target_w, target_h);
    for (double& v : resized.pixels) v = std::clamp(v, 0.0, 1.0);
    return resized;
}

GrayImage random_signature(int w, int h, std::uint64_t seed) {
    if (w < 1 || h < 1)
        throw ValidationError("random_signature: dimensions must be >= 1");
    Rng rng(derive_seed(seed, "random-signature"));
    GrayImage img(w, h);
    for (double& v : img.pixels) v = rng.coin() ? 1.0 : 0.0;
    return img;
}

}  // namespace sigforge
