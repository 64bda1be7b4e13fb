#include "sigforge/ssim.hpp"

#include <cmath>
#include <string>

#include "sigforge/errors.hpp"

namespace sigforge {

void SsimParams::validate() const {
    if (window_size < 3 || window_size % 2 == 0)
        throw ValidationError("SsimParams: window size " + std::to_string(window_size) +
                              " must be odd and >= 3");
    if (sigma <= 0.0) throw ValidationError("SsimParams: sigma must be > 0");
    if (k1 <= 0.0 || k2 <= 0.0 || dynamic_range <= 0.0)
        throw ValidationError("SsimParams: K1, K2, L must be > 0");
}

namespace {

std::vector<double> window_weights(const SsimParams& p) {
    const int n = p.window_size;
    std::vector<double> w(static_cast<std::size_t>(n) * n);
    if (p.window == SsimWindow::kUniform) {
        const double v = 1.0 / (static_cast<double>(n) * n);
        for (double& x : w) x = v;
        return w;
    }
    const int half = n / 2;
    double sum = 0.0;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double dx = x - half, dy = y - half;
            const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * p.sigma * p.sigma));
            w[static_cast<std::size_t>(y) * n + x] = g;
            sum += g;
        }
    }
    for (double& x : w) x /= sum;
    return w;
}

}  // namespace

SsimComponents ssim_map(const GrayImage& x, const GrayImage& y, const SsimParams& p) {
    p.validate();
    x.validate("ssim_map: first image");
    y.validate("ssim_map: second image");
    if (!x.same_shape(y))
        throw ValidationError("ssim_map: dimension mismatch " + std::to_string(x.width) + "x" +
                              std::to_string(x.height) + " vs " + std::to_string(y.width) + "x" +
                              std::to_string(y.height));
    const int n = p.window_size;
    if (x.width < n || x.height < n)
        throw ValidationError("ssim_map: image " + std::to_string(x.width) + "x" +
                              std::to_string(x.height) + " smaller than window " +
                              std::to_string(n));

    const std::vector<double> w = window_weights(p);
    const double c1 = p.c1(), c2 = p.c2(), c3 = p.c3();

    SsimComponents out;
    out.out_w = x.width - n + 1;
    out.out_h = x.height - n + 1;
    const std::size_t cells = static_cast<std::size_t>(out.out_w) * out.out_h;
    out.mu_x.resize(cells);
    out.mu_y.resize(cells);
    out.sigma_x.resize(cells);
    out.sigma_y.resize(cells);
    out.sigma_xy.resize(cells);
    out.luminance.resize(cells);
    out.contrast.resize(cells);
    out.structure.resize(cells);
    out.d.resize(cells);

    for (int wy = 0; wy < out.out_h; ++wy) {
        for (int wx = 0; wx < out.out_w; ++wx) {
            double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
            std::size_t wi = 0;
            for (int dy = 0; dy < n; ++dy) {
                for (int dx = 0; dx < n; ++dx, ++wi) {
                    const double a = x.at(wx + dx, wy + dy);
                    const double b = y.at(wx + dx, wy + dy);
                    const double weight = w[wi];
                    mx += weight * a;
                    my += weight * b;
                    mxx += weight * a * a;
                    myy += weight * b * b;
                    mxy += weight * (a * b);  // grouped so swapping x,y is bit-exact
                }
            }
            const double var_x = std::max(0.0, mxx - mx * mx);
            const double var_y = std::max(0.0, myy - my * my);
            const double cov = mxy - mx * my;
            const double sx = std::sqrt(var_x);
            const double sy = std::sqrt(var_y);

            const double l = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            const double c = (2.0 * sx * sy + c2) / (var_x + var_y + c2);
            const double s = (cov + c3) / (sx * sy + c3);

            const std::size_t i = static_cast<std::size_t>(wy) * out.out_w + wx;
            out.mu_x[i] = mx;
            out.mu_y[i] = my;
            out.sigma_x[i] = sx;
            out.sigma_y[i] = sy;
            out.sigma_xy[i] = cov;
            out.luminance[i] = l;
            out.contrast[i] = c;
            out.structure[i] = s;
            out.d[i] = l * c * s;
        }
    }
    return out;
}

double ssim_score(const GrayImage& x, const GrayImage& y, const SsimParams& p) {
    const SsimComponents m = ssim_map(x, y, p);
    double sum = 0.0;
    for (double v : m.d) sum += v;
    return sum / static_cast<double>(m.count());
}

double mean_ssim(const std::vector<std::pair<GrayImage, GrayImage>>& pairs,
                 const SsimParams& p) {
    if (pairs.empty()) throw ValidationError("mean_ssim: empty pair list");
    double sum = 0.0;
    for (const auto& [a, b] : pairs) sum += ssim_score(a, b, p);
    return sum / static_cast<double>(pairs.size());
}

}  // namespace sigforge
