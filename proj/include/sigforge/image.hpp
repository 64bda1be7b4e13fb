#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sigforge {

// 2-D grid of intensities in [0,1], row-major. The universal signature
// representation: 0 = black ink on scan, 1 = white paper (before
// binarization flips the convention to 1 = ink).
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // size width * height, row-major

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0);

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    std::size_t size() const { return pixels.size(); }
    bool same_shape(const GrayImage& other) const {
        return width == other.width && height == other.height;
    }
    bool operator==(const GrayImage& other) const = default;

    // Throws ValidationError if a pixel is non-finite or outside [0,1],
    // or if width * height != pixel count.
    void validate(const std::string& context) const;
};

// Rounds intensities to the 8-bit grid k/255. Generator outputs pass through
// this before SSIM is recorded, so values survive a PGM round trip exactly.
GrayImage quantize8(const GrayImage& img);

// Binary PGM (P5, maxval <= 255 on read, 255 on write). Intensities are
// scaled to [0,1] by the file's maxval. Distinct errors for unsupported
// format, truncated payload, and zero dimensions.
GrayImage load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

// Dispatches on extension; only .pgm is supported.
GrayImage load_image(const std::filesystem::path& path);

}  // namespace sigforge
