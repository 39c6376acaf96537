#pragma once

#include <array>

#include "chsd/geometry.hpp"

namespace chsd {

// Reference triangle (0,0)-(1,0)-(0,1), barycentric l1 = 1-xi-eta, l2 = xi,
// l3 = eta. P2 dofs: 3 vertices then 3 edge midpoints in local edge order
// (v0v1, v1v2, v2v0).

inline void p1_values(double xi, double eta, std::array<double, 3>& n) {
    n = {1.0 - xi - eta, xi, eta};
}

inline void p1_grads(std::array<Vec2, 3>& g) {
    g = {Vec2{-1.0, -1.0}, Vec2{1.0, 0.0}, Vec2{0.0, 1.0}};
}

inline void p2_values(double xi, double eta, std::array<double, 6>& n) {
    double l1 = 1.0 - xi - eta, l2 = xi, l3 = eta;
    n[0] = l1 * (2.0 * l1 - 1.0);
    n[1] = l2 * (2.0 * l2 - 1.0);
    n[2] = l3 * (2.0 * l3 - 1.0);
    n[3] = 4.0 * l1 * l2;
    n[4] = 4.0 * l2 * l3;
    n[5] = 4.0 * l3 * l1;
}

inline void p2_grads(double xi, double eta, std::array<Vec2, 6>& g) {
    double l1 = 1.0 - xi - eta, l2 = xi, l3 = eta;
    Vec2 d1{-1.0, -1.0}, d2{1.0, 0.0}, d3{0.0, 1.0};
    g[0] = (4.0 * l1 - 1.0) * d1;
    g[1] = (4.0 * l2 - 1.0) * d2;
    g[2] = (4.0 * l3 - 1.0) * d3;
    g[3] = 4.0 * (l2 * d1 + l1 * d2);
    g[4] = 4.0 * (l3 * d2 + l2 * d3);
    g[5] = 4.0 * (l1 * d3 + l3 * d1);
}

// Quadratic Lagrange trace on an edge parametrized s in [0,1]:
// endpoint a, endpoint b, midpoint. The P2 trace on an edge depends only on
// these three dofs.
inline void p2_edge_trace(double s, std::array<double, 3>& n) {
    n[0] = (1.0 - s) * (1.0 - 2.0 * s);
    n[1] = s * (2.0 * s - 1.0);
    n[2] = 4.0 * s * (1.0 - s);
}

/// Affine map data for one triangle.
struct ElementMap {
    Vec2 p0;
    double j00, j01, j10, j11; // columns are edge vectors p1-p0, p2-p0
    double det;                // = 2 * area
    double i00, i01, i10, i11; // inverse transpose of J, for gradients

    Vec2 to_physical(double xi, double eta) const {
        return {p0.x + j00 * xi + j01 * eta, p0.y + j10 * xi + j11 * eta};
    }
    Vec2 grad_to_physical(const Vec2& gref) const {
        return {i00 * gref.x + i01 * gref.y, i10 * gref.x + i11 * gref.y};
    }
};

inline ElementMap element_map(const Vec2& p0, const Vec2& p1, const Vec2& p2) {
    ElementMap m;
    m.p0 = p0;
    m.j00 = p1.x - p0.x;
    m.j01 = p2.x - p0.x;
    m.j10 = p1.y - p0.y;
    m.j11 = p2.y - p0.y;
    m.det = m.j00 * m.j11 - m.j01 * m.j10;
    // J^{-T} = (1/det) [[j11, -j10], [-j01, j00]]
    m.i00 = m.j11 / m.det;
    m.i01 = -m.j10 / m.det;
    m.i10 = -m.j01 / m.det;
    m.i11 = m.j00 / m.det;
    return m;
}

} // namespace chsd
