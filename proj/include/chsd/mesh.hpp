#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "chsd/geometry.hpp"

namespace chsd {

enum class Subdomain : int { Conduit = 0, Matrix = 1 };

/// Undirected mesh edge, stored with a < b.
struct MeshEdge {
    int a = -1;
    int b = -1;
    bool operator<(const MeshEdge& o) const {
        return a != o.a ? a < o.a : b < o.b;
    }
    bool operator==(const MeshEdge& o) const { return a == o.a && b == o.b; }
};

struct Triangle {
    std::array<int, 3> v;
    Subdomain domain;
};

/// One interface edge with its orientation data: n_cm points from the
/// conduit side into the matrix side, tangent is n_cm rotated by +90 degrees.
struct InterfaceEdge {
    MeshEdge edge;
    Vec2 n_cm;
    Vec2 tangent;
    int conduit_tri = -1;
    int matrix_tri = -1;
    double length = 0.0;
};

/// Carve a named boundary group out of a default group. The segment must be
/// axis-aligned; edges whose both endpoints lie on it are moved.
struct BoundaryGroupSpec {
    std::string name;
    std::string from; // "GammaC" or "GammaM"
    Vec2 p0, p1;
};

/// Conforming triangulation of a conduit rectangle plus a matrix rectangle
/// sharing one full edge. Immutable after construction.
class KarsticMesh {
public:
    std::vector<Vec2> nodes;
    std::vector<Triangle> triangles;
    std::map<std::string, std::vector<MeshEdge>> boundary_edges;
    std::vector<InterfaceEdge> interface_edges;

    // Unique edge table (sorted pairs, lexicographic order) and the three
    // edge ids per triangle in local order (v0v1, v1v2, v2v0). P2 midpoint
    // dofs key off these ids.
    std::vector<MeshEdge> edges;
    std::vector<std::array<int, 3>> tri_edges;

    Rect conduit_rect, matrix_rect;
    double h = 0.0; // max edge length

    int node_count() const { return static_cast<int>(nodes.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }
    int edge_count() const { return static_cast<int>(edges.size()); }

    Vec2 edge_midpoint(int e) const {
        return 0.5 * (nodes[edges[e].a] + nodes[edges[e].b]);
    }

    double signed_area(int t) const {
        const Vec2& p0 = nodes[triangles[t].v[0]];
        const Vec2& p1 = nodes[triangles[t].v[1]];
        const Vec2& p2 = nodes[triangles[t].v[2]];
        return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
    }

    int edge_id(int a, int b) const {
        MeshEdge key{std::min(a, b), std::max(a, b)};
        auto it = std::lower_bound(edges.begin(), edges.end(), key);
        if (it == edges.end() || !(*it == key))
            throw std::logic_error("KarsticMesh: unknown edge");
        return static_cast<int>(it - edges.begin());
    }

    bool has_group(const std::string& name) const {
        return boundary_edges.count(name) > 0;
    }
};

namespace detail {

// Grid coordinate along [c0, c1] split into m cells; endpoints exact.
inline double grid_coord(double c0, double c1, int i, int m) {
    if (i == 0) return c0;
    if (i == m) return c1;
    return c0 + (static_cast<double>(i) * (c1 - c0)) / static_cast<double>(m);
}

inline int cell_count(double span, int n, const char* what) {
    double cells = span * n;
    int m = static_cast<int>(std::lround(cells));
    if (m < 1 || std::abs(cells - m) > 1e-9 * std::max(1.0, cells))
        throw std::invalid_argument(std::string("build_karstic_mesh: ") + what +
                                    " is not an integer multiple of 1/n");
    return m;
}

} // namespace detail

/// Build the two-rectangle karstic mesh: a uniform grid of squares per
/// rectangle, each split along the (+1,+1) diagonal, with the grid lines of
/// the two rectangles matching along the shared edge. Interface nodes are
/// shared by index, so conformity across Gamma_cm holds by identity.
/// n is the cell count per unit length.
inline KarsticMesh build_karstic_mesh(const Rect& conduit, const Rect& matrix, int n,
                                      const std::vector<BoundaryGroupSpec>& extra_groups = {}) {
    if (n < 1)
        throw std::invalid_argument("build_karstic_mesh: n must be >= 1");
    conduit.validate();
    matrix.validate();

    const double tol = 1e-12;
    auto near = [tol](double a, double b) { return std::abs(a - b) <= tol; };

    // Identify the adjacency: matrix above/below/right/left of conduit.
    enum class Side { Above, Below, Right, Left };
    Side side;
    if (near(conduit.y1, matrix.y0) && near(conduit.x0, matrix.x0) && near(conduit.x1, matrix.x1))
        side = Side::Above;
    else if (near(conduit.y0, matrix.y1) && near(conduit.x0, matrix.x0) && near(conduit.x1, matrix.x1))
        side = Side::Below;
    else if (near(conduit.x1, matrix.x0) && near(conduit.y0, matrix.y0) && near(conduit.y1, matrix.y1))
        side = Side::Right;
    else if (near(conduit.x0, matrix.x1) && near(conduit.y0, matrix.y0) && near(conduit.y1, matrix.y1))
        side = Side::Left;
    else
        throw std::invalid_argument(
            "build_karstic_mesh: rectangles must share exactly one full edge");

    KarsticMesh mesh;
    mesh.conduit_rect = conduit;
    mesh.matrix_rect = matrix;

    const int cx = detail::cell_count(conduit.width(), n, "conduit width");
    const int cy = detail::cell_count(conduit.height(), n, "conduit height");
    const int mx = detail::cell_count(matrix.width(), n, "matrix width");
    const int my = detail::cell_count(matrix.height(), n, "matrix height");

    // Conduit grid nodes, row-major (j outer, i inner).
    std::vector<std::vector<int>> cid(cy + 1, std::vector<int>(cx + 1, -1));
    for (int j = 0; j <= cy; ++j)
        for (int i = 0; i <= cx; ++i) {
            cid[j][i] = mesh.node_count();
            mesh.nodes.push_back({detail::grid_coord(conduit.x0, conduit.x1, i, cx),
                                  detail::grid_coord(conduit.y0, conduit.y1, j, cy)});
        }

    // Matrix grid nodes; the shared line reuses conduit node ids.
    std::vector<std::vector<int>> mid(my + 1, std::vector<int>(mx + 1, -1));
    for (int j = 0; j <= my; ++j)
        for (int i = 0; i <= mx; ++i) {
            int shared = -1;
            if (side == Side::Above && j == 0) shared = cid[cy][i];
            if (side == Side::Below && j == my) shared = cid[0][i];
            if (side == Side::Right && i == 0) shared = cid[j][cx];
            if (side == Side::Left && i == mx) shared = cid[j][0];
            if (shared >= 0) {
                mid[j][i] = shared;
            } else {
                mid[j][i] = mesh.node_count();
                mesh.nodes.push_back({detail::grid_coord(matrix.x0, matrix.x1, i, mx),
                                      detail::grid_coord(matrix.y0, matrix.y1, j, my)});
            }
        }

    auto emit_cells = [&mesh](const std::vector<std::vector<int>>& id, int nx, int ny,
                              Subdomain dom) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                int v00 = id[j][i], v10 = id[j][i + 1];
                int v01 = id[j + 1][i], v11 = id[j + 1][i + 1];
                mesh.triangles.push_back({{v00, v10, v11}, dom});
                mesh.triangles.push_back({{v00, v11, v01}, dom});
            }
    };
    emit_cells(cid, cx, cy, Subdomain::Conduit);
    emit_cells(mid, mx, my, Subdomain::Matrix);

    // Unique edge table.
    std::vector<MeshEdge> all;
    all.reserve(mesh.triangles.size() * 3);
    for (const auto& t : mesh.triangles)
        for (int k = 0; k < 3; ++k) {
            int a = t.v[k], b = t.v[(k + 1) % 3];
            all.push_back({std::min(a, b), std::max(a, b)});
        }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    mesh.edges = std::move(all);
    mesh.tri_edges.resize(mesh.triangles.size());
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int k = 0; k < 3; ++k)
            mesh.tri_edges[t][k] =
                mesh.edge_id(mesh.triangles[t].v[k], mesh.triangles[t].v[(k + 1) % 3]);

    // Edge -> adjacent triangles.
    std::vector<std::array<int, 2>> adj(mesh.edges.size(), {-1, -1});
    for (int t = 0; t < mesh.triangle_count(); ++t)
        for (int k = 0; k < 3; ++k) {
            int e = mesh.tri_edges[t][k];
            (adj[e][0] < 0 ? adj[e][0] : adj[e][1]) = t;
        }

    // Interface edges: the shared triangles differ in subdomain tag.
    Vec2 n_cm;
    switch (side) {
        case Side::Above: n_cm = {0.0, 1.0}; break;
        case Side::Below: n_cm = {0.0, -1.0}; break;
        case Side::Right: n_cm = {1.0, 0.0}; break;
        case Side::Left:  n_cm = {-1.0, 0.0}; break;
    }
    std::vector<MeshEdge> gamma_c, gamma_m;
    for (int e = 0; e < mesh.edge_count(); ++e) {
        if (adj[e][1] < 0) {
            // Exterior boundary edge; assign to the default group of its side.
            Subdomain dom = mesh.triangles[adj[e][0]].domain;
            (dom == Subdomain::Conduit ? gamma_c : gamma_m).push_back(mesh.edges[e]);
            continue;
        }
        Subdomain d0 = mesh.triangles[adj[e][0]].domain;
        Subdomain d1 = mesh.triangles[adj[e][1]].domain;
        if (d0 == d1) continue;
        InterfaceEdge ie;
        ie.edge = mesh.edges[e];
        ie.n_cm = n_cm;
        ie.tangent = n_cm.rot90();
        ie.conduit_tri = (d0 == Subdomain::Conduit) ? adj[e][0] : adj[e][1];
        ie.matrix_tri = (d0 == Subdomain::Matrix) ? adj[e][0] : adj[e][1];
        ie.length = (mesh.nodes[ie.edge.b] - mesh.nodes[ie.edge.a]).norm();
        mesh.interface_edges.push_back(ie);
    }
    mesh.boundary_edges["GammaC"] = std::move(gamma_c);
    mesh.boundary_edges["GammaM"] = std::move(gamma_m);

    // Carve user groups (GammaIn, GammaOut, ...) out of the defaults.
    for (const auto& spec : extra_groups) {
        auto it = mesh.boundary_edges.find(spec.from);
        if (it == mesh.boundary_edges.end())
            throw std::invalid_argument("build_karstic_mesh: unknown base group " + spec.from);
        auto on_segment = [&](const Vec2& p) {
            double lx = std::min(spec.p0.x, spec.p1.x), hx = std::max(spec.p0.x, spec.p1.x);
            double ly = std::min(spec.p0.y, spec.p1.y), hy = std::max(spec.p0.y, spec.p1.y);
            return p.x >= lx - tol && p.x <= hx + tol && p.y >= ly - tol && p.y <= hy + tol;
        };
        std::vector<MeshEdge> taken, kept;
        for (const auto& e : it->second) {
            if (on_segment(mesh.nodes[e.a]) && on_segment(mesh.nodes[e.b]))
                taken.push_back(e);
            else
                kept.push_back(e);
        }
        if (taken.empty())
            throw std::invalid_argument("build_karstic_mesh: group " + spec.name +
                                        " matches no boundary edges");
        it->second = std::move(kept);
        mesh.boundary_edges[spec.name] = std::move(taken);
    }

    double cell = 1.0 / static_cast<double>(n);
    mesh.h = std::sqrt(2.0) * cell;
    return mesh;
}

/// Oriented interface data accessor: (edge, n_cm, tau_1) per shared edge.
inline const std::vector<InterfaceEdge>& interface_edges(const KarsticMesh& mesh) {
    return mesh.interface_edges;
}

} // namespace chsd
