#pragma once

#include <vector>

#include "sigforge/image.hpp"

namespace sigforge {

enum class SsimWindow { kGaussian, kUniform };

struct SsimParams {
    SsimWindow window = SsimWindow::kGaussian;
    int window_size = 11;   // odd, >= 3
    double sigma = 1.5;     // gaussian window only
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;  // L

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
    double c3() const { return c2() / 2.0; }

    void validate() const;
};

// Per-window statistics and similarity components over the valid region
// (stride 1, no padding). Maps are row-major out_w x out_h.
struct SsimComponents {
    int out_w = 0;
    int out_h = 0;
    std::vector<double> mu_x, mu_y;
    std::vector<double> sigma_x, sigma_y, sigma_xy;
    std::vector<double> luminance;  // l(x,y)
    std::vector<double> contrast;   // c(x,y)
    std::vector<double> structure;  // s(x,y)
    std::vector<double> d;          // l * c * s

    std::size_t count() const { return d.size(); }
};

SsimComponents ssim_map(const GrayImage& x, const GrayImage& y, const SsimParams& p = {});

// Unweighted mean of the per-window d map. Symmetric in x and y, in [-1, 1].
double ssim_score(const GrayImage& x, const GrayImage& y, const SsimParams& p = {});

double mean_ssim(const std::vector<std::pair<GrayImage, GrayImage>>& pairs,
                 const SsimParams& p = {});

}  // namespace sigforge
