#pragma once

#include <filesystem>
#include <vector>

#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// RGB raster with float channels in [0, 1]; pixel (0,0) is the top-left,
/// image coordinates are (u right, v down) in pixels.
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, const Vec3& fill = Vec3::Zero());

    int width() const { return width_; }
    int height() const { return height_; }

    Vec3& at(int x, int y) { return data_[y * width_ + x]; }
    const Vec3& at(int x, int y) const { return data_[y * width_ + x]; }

    /// Bilinear sample at continuous pixel coordinates, clamped to the
    /// border.
    Vec3 sample(const Vec2& uv) const;
    /// d(sample)/d(uv), 3x2, consistent with the bilinear interpolation.
    Eigen::Matrix<double, 3, 2> sample_gradient(const Vec2& uv) const;

private:
    int width_ = 0, height_ = 0;
    std::vector<Vec3> data_;
};

/// Binary PPM (P6, maxval 255).
Raster read_ppm(const std::filesystem::path& path);
void write_ppm(const Raster& image, const std::filesystem::path& path);

} // namespace headfuse
