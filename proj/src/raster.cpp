#include "headfuse/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "headfuse/errors.hpp"

namespace headfuse {

Raster::Raster(int width, int height, const Vec3& fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 1 || height < 1) throw ValidationError("raster needs positive dimensions");
}

Vec3 Raster::sample(const Vec2& uv) const {
    const double x = std::clamp(uv.x(), 0.0, static_cast<double>(width_ - 1));
    const double y = std::clamp(uv.y(), 0.0, static_cast<double>(height_ - 1));
    const int x0 = std::min(static_cast<int>(x), width_ - 2 >= 0 ? width_ - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height_ - 2 >= 0 ? height_ - 2 : 0);
    const double fx = x - x0, fy = y - y0;
    const Vec3 top = (1 - fx) * at(x0, y0) + fx * at(std::min(x0 + 1, width_ - 1), y0);
    const Vec3 bot = (1 - fx) * at(x0, std::min(y0 + 1, height_ - 1)) +
                     fx * at(std::min(x0 + 1, width_ - 1), std::min(y0 + 1, height_ - 1));
    return (1 - fy) * top + fy * bot;
}

Eigen::Matrix<double, 3, 2> Raster::sample_gradient(const Vec2& uv) const {
    const double x = std::clamp(uv.x(), 0.0, static_cast<double>(width_ - 1));
    const double y = std::clamp(uv.y(), 0.0, static_cast<double>(height_ - 1));
    const int x0 = std::min(static_cast<int>(x), width_ - 2 >= 0 ? width_ - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height_ - 2 >= 0 ? height_ - 2 : 0);
    const double fx = x - x0, fy = y - y0;
    const int x1 = std::min(x0 + 1, width_ - 1), y1 = std::min(y0 + 1, height_ - 1);
    Eigen::Matrix<double, 3, 2> g;
    g.col(0) = (1 - fy) * (at(x1, y0) - at(x0, y0)) + fy * (at(x1, y1) - at(x0, y1));
    g.col(1) = (1 - fx) * (at(x0, y1) - at(x0, y0)) + fx * (at(x1, y1) - at(x1, y0));
    return g;
}

Raster read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError("not a binary PPM: " + path.string());
    int w, h, maxval;
    in >> w >> h >> maxval;
    in.get();
    if (maxval != 255) throw IoError("only maxval 255 PPM is supported");
    Raster img(w, h);
    std::vector<unsigned char> row(3 * w);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()), row.size());
        if (!in) throw IoError("truncated PPM payload");
        for (int x = 0; x < w; ++x)
            img.at(x, y) = Vec3(row[3 * x], row[3 * x + 1], row[3 * x + 2]) / 255.0;
    }
    return img;
}

void write_ppm(const Raster& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const Vec3& c = image.at(x, y);
            const unsigned char rgb[3] = {
                static_cast<unsigned char>(std::clamp(c.x(), 0.0, 1.0) * 255.0 + 0.5),
                static_cast<unsigned char>(std::clamp(c.y(), 0.0, 1.0) * 255.0 + 0.5),
                static_cast<unsigned char>(std::clamp(c.z(), 0.0, 1.0) * 255.0 + 0.5)};
            out.write(reinterpret_cast<const char*>(rgb), 3);
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

} // namespace headfuse
