#pragma once

#include <filesystem>

#include <Eigen/Core>

#include "headfuse/shape_model.hpp"

namespace headfuse {

/// Model container: a versioned binary file (little-endian float64 payload,
/// uint32 topology triplets) plus a JSON sidecar at "<path>.json" mirroring
/// the metadata.
void write_model(const ShapeModel& model, const std::filesystem::path& path);
ShapeModel read_model(const std::filesystem::path& path);

/// Versioned binary matrix (regressor files and kernel dumps).
void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path);

} // namespace headfuse
