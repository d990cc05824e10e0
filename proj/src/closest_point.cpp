#include "headfuse/closest_point.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "headfuse/errors.hpp"

namespace headfuse {

// Ericson, "Real-Time Collision Detection", 5.1.5.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    auto out = [&](double u, double v, double w, const Vec3& q) {
        if (bary) *bary = Vec3(u, v, w);
        return q;
    };
    if (d1 <= 0 && d2 <= 0) return out(1, 0, 0, a);

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return out(0, 1, 0, b);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        const double v = d1 / (d1 - d3);
        return out(1 - v, v, 0, a + v * ab);
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return out(0, 0, 1, c);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        const double w = d2 / (d2 - d6);
        return out(1 - w, 0, w, a + w * ac);
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return out(0, 1 - w, w, b + w * (c - b));
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return out(1 - v - w, v, w, a + ab * v + ac * w);
}

SurfaceTree::SurfaceTree(const TriMesh& mesh) : mesh_(std::make_shared<TriMesh>(mesh)) {
    if (mesh.triangle_count() == 0) throw ValidationError("surface tree over empty mesh");
    order_.resize(mesh.triangle_count());
    std::iota(order_.begin(), order_.end(), 0);
    std::vector<Vec3> centroids(mesh.triangle_count());
    for (int i = 0; i < mesh.triangle_count(); ++i) {
        const auto& t = mesh.triangles()[i];
        centroids[i] = (mesh.vertex(t[0]) + mesh.vertex(t[1]) + mesh.vertex(t[2])) / 3.0;
    }
    nodes_.reserve(2 * mesh.triangle_count());
    root_ = build(0, mesh.triangle_count(), centroids);

    boundary_vertex_.assign(mesh.vertex_count(), 0);
    for (auto [a, b] : boundary_edges(mesh)) {
        boundary_vertex_[a] = 1;
        boundary_vertex_[b] = 1;
    }
}

int SurfaceTree::build(int begin, int end, std::vector<Vec3>& centroids) {
    Node n;
    n.lo = Vec3::Constant(std::numeric_limits<double>::max());
    n.hi = Vec3::Constant(std::numeric_limits<double>::lowest());
    for (int i = begin; i < end; ++i) {
        const auto& t = mesh_->triangles()[order_[i]];
        for (int k = 0; k < 3; ++k) {
            n.lo = n.lo.cwiseMin(mesh_->vertex(t[k]));
            n.hi = n.hi.cwiseMax(mesh_->vertex(t[k]));
        }
    }
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(n);
    if (end - begin <= 4) {
        nodes_[idx].begin = begin;
        nodes_[idx].end = end;
        return idx;
    }
    int axis;
    (n.hi - n.lo).maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroids[a][axis] < centroids[b][axis]; });
    const int l = build(begin, mid, centroids);
    const int r = build(mid, end, centroids);
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
}

double SurfaceTree::box_distance2(const Node& n, const Vec3& p) const {
    const Vec3 d = (n.lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - n.hi);
    return d.squaredNorm();
}

void SurfaceTree::search(int node, const Vec3& p, Hit& best) const {
    const Node& n = nodes_[node];
    if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            const int ti = order_[i];
            const auto& t = mesh_->triangles()[ti];
            Vec3 bary;
            const Vec3 q = closest_point_on_triangle(p, mesh_->vertex(t[0]), mesh_->vertex(t[1]),
                                                     mesh_->vertex(t[2]), &bary);
            const double d2 = (q - p).squaredNorm();
            if (d2 < best.distance) {
                best.distance = d2;
                best.point = q;
                best.bary = bary;
                best.triangle = ti;
            }
        }
        return;
    }
    const double dl = box_distance2(nodes_[n.left], p);
    const double dr = box_distance2(nodes_[n.right], p);
    const int first = dl <= dr ? n.left : n.right;
    const int second = dl <= dr ? n.right : n.left;
    if ((first == n.left ? dl : dr) < best.distance) search(first, p, best);
    if ((second == n.left ? dl : dr) < best.distance) search(second, p, best);
}

SurfaceTree::Hit SurfaceTree::closest(const Vec3& p) const {
    Hit best;
    best.distance = std::numeric_limits<double>::max();
    search(root_, p, best);
    best.distance = std::sqrt(best.distance);
    return best;
}

bool SurfaceTree::on_boundary(const Hit& hit, double tol) const {
    if (hit.triangle < 0) return false;
    const auto& t = mesh_->triangles()[hit.triangle];
    // A hit sits on edge k (opposite corner k) when bary[k] ~ 0; it is a
    // boundary hit when every edge/vertex it touches is made of boundary
    // vertices of an open edge.
    for (int k = 0; k < 3; ++k) {
        if (hit.bary[k] <= tol) {
            const std::uint32_t a = t[(k + 1) % 3], b = t[(k + 2) % 3];
            if (boundary_vertex_[a] && boundary_vertex_[b]) return true;
        }
    }
    return false;
}

VertexGrid::VertexGrid(const VertexMatrix& points) : points_(points) {
    if (points_.rows() == 0) throw ValidationError("vertex grid over empty point set");
    const Vec3 lo = points_.colwise().minCoeff().transpose();
    const Vec3 hi = points_.colwise().maxCoeff().transpose();
    const double extent = (hi - lo).maxCoeff();
    const double n = std::cbrt(static_cast<double>(points_.rows()));
    cell_ = extent > 0 ? extent / std::max(1.0, n) : 1.0;
    for (int i = 0; i < points_.rows(); ++i) {
        const CellKey k = key(points_.row(i).transpose());
        if (i == 0) kmin_ = kmax_ = k;
        kmin_ = {std::min(kmin_.x, k.x), std::min(kmin_.y, k.y), std::min(kmin_.z, k.z)};
        kmax_ = {std::max(kmax_.x, k.x), std::max(kmax_.y, k.y), std::max(kmax_.z, k.z)};
        cells_[k].push_back(i);
    }
}

VertexGrid::CellKey VertexGrid::key(const Vec3& p) const {
    return {static_cast<int>(std::floor(p.x() / cell_)),
            static_cast<int>(std::floor(p.y() / cell_)),
            static_cast<int>(std::floor(p.z() / cell_))};
}

int VertexGrid::nearest(const Vec3& p) const {
    const CellKey c = key(p);
    // Rings beyond every occupied cell need no scan.
    const int max_ring = std::max(
        {std::abs(kmin_.x - c.x), std::abs(kmax_.x - c.x), std::abs(kmin_.y - c.y),
         std::abs(kmax_.y - c.y), std::abs(kmin_.z - c.z), std::abs(kmax_.z - c.z)});
    int best = -1;
    double best_d2 = std::numeric_limits<double>::max();
    for (int ring = 0; ring <= max_ring; ++ring) {
        for (int dx = -ring; dx <= ring; ++dx) {
            for (int dy = -ring; dy <= ring; ++dy) {
                for (int dz = -ring; dz <= ring; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                    auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
                    if (it == cells_.end()) continue;
                    for (int i : it->second) {
                        const double d2 = (points_.row(i).transpose() - p).squaredNorm();
                        if (d2 < best_d2) {
                            best_d2 = d2;
                            best = i;
                        }
                    }
                }
            }
        }
        // A point in a cell at Chebyshev cell-distance k sits at Euclidean
        // distance >= (k-1)*cell, so the best is final once it is within
        // ring*cell.
        if (best >= 0) {
            const double safe = static_cast<double>(ring) * cell_;
            if (best_d2 <= safe * safe) break;
        }
    }
    return best;
}

} // namespace headfuse
