#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace headfuse {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Triangle = std::array<std::uint32_t, 3>;

/// N x 3 vertex block, row-major so the flattened [x0 y0 z0 x1 y1 z1 ...]
/// view is a zero-copy map over the same storage.
using VertexMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

/// Triangle mesh in millimetre units. Vertices and connectivity are validated
/// on construction: indices in range, no triangle with repeated indices.
class TriMesh {
public:
    TriMesh() = default;
    TriMesh(VertexMatrix vertices, std::vector<Triangle> triangles);
    TriMesh(VertexMatrix vertices, std::vector<Triangle> triangles,
            std::vector<Vec3> colors);

    static TriMesh from_flat(const Eigen::VectorXd& flat, std::vector<Triangle> triangles);

    int vertex_count() const { return static_cast<int>(vertices_.rows()); }
    int triangle_count() const { return static_cast<int>(triangles_.size()); }

    const VertexMatrix& vertices() const { return vertices_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    Vec3 vertex(int i) const { return vertices_.row(i).transpose(); }

    bool has_colors() const { return !colors_.empty(); }
    const std::vector<Vec3>& colors() const { return colors_; }

    /// 3N view of the vertex block.
    Eigen::Map<const Eigen::VectorXd> flat() const {
        return {vertices_.data(), 3 * vertices_.rows()};
    }

    /// Replaces vertex positions, keeping connectivity.
    TriMesh with_vertices(VertexMatrix v) const;

    Vec3 centroid() const;
    /// Radius of the bounding sphere about the centroid.
    double bounding_radius() const;
    /// Root-mean-square vertex distance from the centroid.
    double centroid_size() const;
    double median_edge_length() const;

    /// True if connectivity is identical (used for topology-match checks).
    bool same_topology(const TriMesh& other) const;

private:
    VertexMatrix vertices_;
    std::vector<Triangle> triangles_;
    std::vector<Vec3> colors_;
};

/// Undirected edge list of a mesh (each pair sorted, unique).
std::vector<std::pair<std::uint32_t, std::uint32_t>> mesh_edges(const TriMesh& mesh);

/// Edges incident to exactly one triangle.
std::vector<std::pair<std::uint32_t, std::uint32_t>> boundary_edges(const TriMesh& mesh);

/// Keeps the flagged vertices and every triangle whose corners are all kept.
/// Returns the cropped mesh and the kept original vertex indices in order.
std::pair<TriMesh, std::vector<std::uint32_t>>
crop_mesh(const TriMesh& mesh, const std::vector<char>& keep);

/// Named landmark collection. A set carries 3D points, 2D image points, or
/// both, plus optional model-correspondence vertex indices.
class LandmarkSet {
public:
    void set3(const std::string& name, const Vec3& p) { points3_[name] = p; }
    void set2(const std::string& name, const Vec2& p) { points2_[name] = p; }
    void set_index(const std::string& name, std::uint32_t idx) { indices_[name] = idx; }

    bool has3(const std::string& name) const { return points3_.count(name) > 0; }
    bool has2(const std::string& name) const { return points2_.count(name) > 0; }
    bool has_index(const std::string& name) const { return indices_.count(name) > 0; }

    const Vec3& point3(const std::string& name) const;
    const Vec2& point2(const std::string& name) const;
    std::uint32_t index(const std::string& name) const;

    /// Names in deterministic (lexicographic) order, union of all maps.
    std::vector<std::string> names() const;
    std::size_t size() const;
    bool empty() const { return size() == 0; }

    const std::map<std::string, Vec3>& points3() const { return points3_; }
    const std::map<std::string, Vec2>& points2() const { return points2_; }
    const std::map<std::string, std::uint32_t>& indices() const { return indices_; }

    /// Checks every correspondence index against a topology size.
    void validate_indices(int vertex_count) const;

    /// Negates one coordinate of every 3D point (sagittal mirroring and the
    /// occluded-ear landmark completion both reduce to this).
    LandmarkSet reflected(int axis) const;

private:
    std::map<std::string, Vec3> points3_;
    std::map<std::string, Vec2> points2_;
    std::map<std::string, std::uint32_t> indices_;
};

} // namespace headfuse
