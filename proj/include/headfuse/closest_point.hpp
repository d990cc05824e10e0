#pragma once

#include <memory>
#include <vector>

#include "headfuse/tri_mesh.hpp"

namespace headfuse {

/// Closest point on triangle (a,b,c) to p; barycentric coordinates of the
/// result are written to bary when given.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary = nullptr);

/// AABB tree over a triangle mesh for closest-point-on-surface queries.
class SurfaceTree {
public:
    explicit SurfaceTree(const TriMesh& mesh);

    struct Hit {
        Vec3 point = Vec3::Zero();
        Vec3 bary = Vec3::Zero();
        int triangle = -1;
        double distance = 0;
    };

    Hit closest(const Vec3& p) const;

    /// True if the hit lies (within tol of barycentric zero) on an open
    /// boundary edge or boundary vertex of the mesh.
    bool on_boundary(const Hit& hit, double tol = 1e-9) const;

    const TriMesh& mesh() const { return *mesh_; }

private:
    struct Node {
        Vec3 lo, hi;
        int left = -1, right = -1; // children; leaf when left < 0
        int begin = 0, end = 0;    // triangle index range for leaves
    };

    int build(int begin, int end, std::vector<Vec3>& centroids);
    void search(int node, const Vec3& p, Hit& best) const;
    double box_distance2(const Node& n, const Vec3& p) const;

    std::shared_ptr<const TriMesh> mesh_;
    std::vector<Node> nodes_;
    std::vector<int> order_; // triangle permutation grouped per leaf
    std::vector<char> boundary_vertex_;
    int root_ = -1;
};

/// Uniform hash grid over a point set for nearest-vertex queries.
class VertexGrid {
public:
    explicit VertexGrid(const VertexMatrix& points);

    int nearest(const Vec3& p) const;

private:
    struct CellKey {
        int x, y, z;
        bool operator<(const CellKey& o) const {
            return std::tie(x, y, z) < std::tie(o.x, o.y, o.z);
        }
    };
    CellKey key(const Vec3& p) const;

    VertexMatrix points_;
    std::map<CellKey, std::vector<int>, std::less<CellKey>> cells_;
    CellKey kmin_{0, 0, 0}, kmax_{0, 0, 0};
    double cell_ = 1.0;
};

} // namespace headfuse
