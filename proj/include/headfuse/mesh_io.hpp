#pragma once

#include <filesystem>

#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// ASCII OBJ: v/f lines, vertex colors as the common "v x y z r g b"
/// extension, faces fan-triangulated.
TriMesh read_obj(const std::filesystem::path& path);
void write_obj(const TriMesh& mesh, const std::filesystem::path& path);

/// Binary little-endian PLY: float32 x,y,z, optional uint8 r,g,b, uchar-int
/// face lists.
TriMesh read_ply(const std::filesystem::path& path);
void write_ply(const TriMesh& mesh, const std::filesystem::path& path);

/// Dispatch by extension (.obj / .ply).
TriMesh read_mesh(const std::filesystem::path& path);
void write_mesh(const TriMesh& mesh, const std::filesystem::path& path);

/// Landmark JSON: {"name": [x, y, z]} or {"name": [x, y]}; integer values
/// under an "indices" object map names to model vertices.
LandmarkSet read_landmarks(const std::filesystem::path& path);
void write_landmarks(const LandmarkSet& landmarks, const std::filesystem::path& path);

} // namespace headfuse
