#include "headfuse/tri_mesh.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "headfuse/errors.hpp"

namespace headfuse {

namespace {

void validate(const VertexMatrix& vertices, const std::vector<Triangle>& triangles,
              const std::vector<Vec3>& colors) {
    const auto n = static_cast<std::uint32_t>(vertices.rows());
    for (const auto& t : triangles) {
        if (t[0] >= n || t[1] >= n || t[2] >= n)
            throw ValidationError("triangle index out of range");
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
            throw ValidationError("degenerate triangle (repeated vertex index)");
    }
    if (!colors.empty() && colors.size() != static_cast<std::size_t>(vertices.rows()))
        throw ValidationError("per-vertex color count does not match vertex count");
}

} // namespace

TriMesh::TriMesh(VertexMatrix vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    validate(vertices_, triangles_, colors_);
}

TriMesh::TriMesh(VertexMatrix vertices, std::vector<Triangle> triangles,
                 std::vector<Vec3> colors)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)),
      colors_(std::move(colors)) {
    validate(vertices_, triangles_, colors_);
}

TriMesh TriMesh::from_flat(const Eigen::VectorXd& flat, std::vector<Triangle> triangles) {
    if (flat.size() % 3 != 0)
        throw ValidationError("flattened vertex vector length must be a multiple of 3");
    VertexMatrix v(flat.size() / 3, 3);
    Eigen::Map<Eigen::VectorXd>(v.data(), flat.size()) = flat;
    return TriMesh(std::move(v), std::move(triangles));
}

TriMesh TriMesh::with_vertices(VertexMatrix v) const {
    if (v.rows() != vertices_.rows())
        throw ValidationError("vertex count change is not allowed");
    TriMesh out;
    out.vertices_ = std::move(v);
    out.triangles_ = triangles_;
    out.colors_ = colors_;
    return out;
}

Vec3 TriMesh::centroid() const {
    return vertices_.colwise().mean().transpose();
}

double TriMesh::bounding_radius() const {
    const Vec3 c = centroid();
    double r2 = 0;
    for (int i = 0; i < vertex_count(); ++i)
        r2 = std::max(r2, (vertex(i) - c).squaredNorm());
    return std::sqrt(r2);
}

double TriMesh::centroid_size() const {
    const Vec3 c = centroid();
    return std::sqrt((vertices_.rowwise() - c.transpose()).squaredNorm() /
                     static_cast<double>(vertex_count()));
}

double TriMesh::median_edge_length() const {
    auto edges = mesh_edges(*this);
    if (edges.empty()) return 0;
    std::vector<double> len;
    len.reserve(edges.size());
    for (auto [a, b] : edges) len.push_back((vertex(a) - vertex(b)).norm());
    auto mid = len.begin() + len.size() / 2;
    std::nth_element(len.begin(), mid, len.end());
    return *mid;
}

bool TriMesh::same_topology(const TriMesh& other) const {
    return vertex_count() == other.vertex_count() && triangles_ == other.triangles_;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> mesh_edges(const TriMesh& mesh) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (const auto& t : mesh.triangles()) {
        for (int k = 0; k < 3; ++k) {
            std::uint32_t a = t[k], b = t[(k + 1) % 3];
            edges.insert({std::min(a, b), std::max(a, b)});
        }
    }
    return {edges.begin(), edges.end()};
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> boundary_edges(const TriMesh& mesh) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> count;
    for (const auto& t : mesh.triangles()) {
        for (int k = 0; k < 3; ++k) {
            std::uint32_t a = t[k], b = t[(k + 1) % 3];
            ++count[{std::min(a, b), std::max(a, b)}];
        }
    }
    std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
    for (const auto& [e, c] : count)
        if (c == 1) out.push_back(e);
    return out;
}

std::pair<TriMesh, std::vector<std::uint32_t>>
crop_mesh(const TriMesh& mesh, const std::vector<char>& keep) {
    if (keep.size() != static_cast<std::size_t>(mesh.vertex_count()))
        throw ValidationError("crop mask size does not match vertex count");
    std::vector<std::uint32_t> kept;
    std::vector<std::int64_t> remap(mesh.vertex_count(), -1);
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        if (keep[i]) {
            remap[i] = static_cast<std::int64_t>(kept.size());
            kept.push_back(static_cast<std::uint32_t>(i));
        }
    }
    VertexMatrix v(kept.size(), 3);
    for (std::size_t i = 0; i < kept.size(); ++i) v.row(i) = mesh.vertices().row(kept[i]);
    std::vector<Triangle> tris;
    for (const auto& t : mesh.triangles()) {
        if (keep[t[0]] && keep[t[1]] && keep[t[2]]) {
            tris.push_back({static_cast<std::uint32_t>(remap[t[0]]),
                            static_cast<std::uint32_t>(remap[t[1]]),
                            static_cast<std::uint32_t>(remap[t[2]])});
        }
    }
    std::vector<Vec3> colors;
    if (mesh.has_colors())
        for (auto k : kept) colors.push_back(mesh.colors()[k]);
    return {TriMesh(std::move(v), std::move(tris), std::move(colors)), kept};
}

const Vec3& LandmarkSet::point3(const std::string& name) const {
    auto it = points3_.find(name);
    if (it == points3_.end()) throw ValidationError("missing 3D landmark: " + name);
    return it->second;
}

const Vec2& LandmarkSet::point2(const std::string& name) const {
    auto it = points2_.find(name);
    if (it == points2_.end()) throw ValidationError("missing 2D landmark: " + name);
    return it->second;
}

std::uint32_t LandmarkSet::index(const std::string& name) const {
    auto it = indices_.find(name);
    if (it == indices_.end()) throw ValidationError("missing landmark index: " + name);
    return it->second;
}

std::vector<std::string> LandmarkSet::names() const {
    std::set<std::string> s;
    for (const auto& [k, _] : points3_) s.insert(k);
    for (const auto& [k, _] : points2_) s.insert(k);
    for (const auto& [k, _] : indices_) s.insert(k);
    return {s.begin(), s.end()};
}

std::size_t LandmarkSet::size() const { return names().size(); }

void LandmarkSet::validate_indices(int vertex_count) const {
    for (const auto& [name, idx] : indices_)
        if (idx >= static_cast<std::uint32_t>(vertex_count))
            throw ValidationError("landmark index out of range: " + name);
}

LandmarkSet LandmarkSet::reflected(int axis) const {
    if (axis < 0 || axis > 2) throw ValidationError("reflection axis must be 0, 1 or 2");
    LandmarkSet out = *this;
    for (auto& [_, p] : out.points3_) p[axis] = -p[axis];
    return out;
}

} // namespace headfuse
