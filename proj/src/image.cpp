#include "sigforge/image.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "sigforge/errors.hpp"

namespace sigforge {

GrayImage::GrayImage(int w, int h, double fill)
    : width(w), height(h),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w < 0 || h < 0) throw ValidationError("GrayImage: negative dimension");
}

void GrayImage::validate(const std::string& context) const {
    if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != pixels.size())
        throw ValidationError(context + ": pixel count " + std::to_string(pixels.size()) +
                              " does not match " + std::to_string(width) + "x" +
                              std::to_string(height));
    for (double v : pixels) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw ValidationError(context + ": intensity " + std::to_string(v) +
                                  " outside [0,1]");
    }
}

GrayImage quantize8(const GrayImage& img) {
    GrayImage out = img;
    for (double& v : out.pixels) {
        const double g = std::nearbyint(v * 255.0);
        v = (g < 0.0 ? 0.0 : g > 255.0 ? 255.0 : g) / 255.0;
    }
    return out;
}

namespace {

// Reads one whitespace/comment-delimited PGM header token.
std::string next_token(std::istream& in) {
    std::string token;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {  // comment runs to end of line
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            if (!token.empty()) break;
        } else {
            token.push_back(static_cast<char>(c));
        }
        c = in.get();
    }
    return token;
}

int parse_header_int(std::istream& in, const std::string& path, const char* what) {
    const std::string token = next_token(in);
    if (token.empty()) throw IoError(path + ": truncated file: missing " + std::string(what));
    try {
        return std::stoi(token);
    } catch (const std::exception&) {
        throw IoError(path + ": unsupported format: bad " + std::string(what) + " '" + token + "'");
    }
}

}  // namespace

GrayImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string() + ": cannot open file");

    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5')
        throw IoError(path.string() + ": unsupported format: expected binary PGM (P5)");

    const int w = parse_header_int(in, path.string(), "width");
    const int h = parse_header_int(in, path.string(), "height");
    const int maxval = parse_header_int(in, path.string(), "maxval");
    if (w <= 0 || h <= 0)
        throw IoError(path.string() + ": zero dimension: " + std::to_string(w) + "x" +
                      std::to_string(h));
    if (maxval <= 0 || maxval > 255)
        throw IoError(path.string() + ": unsupported format: maxval " + std::to_string(maxval));

    const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    std::vector<unsigned char> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count)
        throw IoError(path.string() + ": truncated file: expected " + std::to_string(count) +
                      " pixel bytes, got " + std::to_string(in.gcount()));

    GrayImage img(w, h);
    for (std::size_t i = 0; i < count; ++i)
        img.pixels[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
    return img;
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
    img.validate("save_pgm");
    if (img.width == 0 || img.height == 0)
        throw ValidationError("save_pgm: zero dimension");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double g = std::nearbyint(img.pixels[i] * 255.0);
        raw[i] = static_cast<unsigned char>(g < 0.0 ? 0.0 : g > 255.0 ? 255.0 : g);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError(path.string() + ": write failed");
}

GrayImage load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw IoError(path.string() + ": file does not exist");
    const std::string ext = path.extension().string();
    if (ext == ".pgm" || ext == ".PGM") return load_pgm(path);
    throw IoError(path.string() + ": unsupported format: extension '" + ext + "'");
}

}  // namespace sigforge
