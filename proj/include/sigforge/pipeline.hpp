#pragma once

#include <cstdint>
#include <utility>

#include "sigforge/image.hpp"

namespace sigforge {

// Otsu threshold over a 256-bin histogram of [0,1]. Returns the threshold
// (upper edge of the last ink bin) and the binary image with 1 = ink
// (dark pixels, bin <= split) and 0 = background. A constant image has no
// signature: threshold = the constant, output all zeros.
std::pair<double, GrayImage> otsu_binarize(const GrayImage& img);

// Maps an intensity to its Otsu histogram bin, 0..255.
int otsu_bin(double intensity);

// 3x3 median filter, borders by edge replication. Rejects images < 3x3.
GrayImage median_denoise(const GrayImage& img);

// Catmull-Rom bicubic (a = -0.5), edge-replicated sampling, output clamped
// to [0,1]. Same-size resize returns a bit-identical copy.
GrayImage resize_bicubic(const GrayImage& img, int out_w, int out_h);

// The one preprocessing path used at train, test, and attack time:
// median_denoise -> otsu_binarize -> resize_bicubic(target) -> clamp.
GrayImage preprocess(const GrayImage& img, int target_w, int target_h);
inline GrayImage preprocess(const GrayImage& img, int target_size) {
    return preprocess(img, target_size, target_size);
}

// Each pixel independently 0 or 1 with probability 0.5; deterministic per seed.
GrayImage random_signature(int w, int h, std::uint64_t seed);

}  // namespace sigforge
