#pragma once

#include <stdexcept>
#include <vector>

#include "chsd/geometry.hpp"

namespace chsd {

/// Quadrature point on the reference triangle (0,0)-(1,0)-(0,1); the weight
/// already carries the reference area factor 1/2, so sum(w) = 1/2.
struct TriQuadPoint {
    double xi, eta, w;
};

struct TriangleRule {
    int degree = 0;
    std::vector<TriQuadPoint> points;
};

/// Gauss point on the reference edge [0,1]; sum(w) = 1.
struct EdgeQuadPoint {
    double s, w;
};

struct EdgeRule {
    int degree = 0;
    std::vector<EdgeQuadPoint> points;
};

namespace detail {

inline void push_orbit3(std::vector<TriQuadPoint>& pts, double b, double w) {
    double a = 1.0 - 2.0 * b;
    // barycentric (a,b,b) permutations mapped to (xi,eta) = (l2,l3)
    pts.push_back({b, b, w});
    pts.push_back({a, b, w});
    pts.push_back({b, a, w});
}

inline void push_orbit6(std::vector<TriQuadPoint>& pts, double b, double c, double w) {
    double a = 1.0 - b - c;
    pts.push_back({b, c, w});
    pts.push_back({c, b, w});
    pts.push_back({a, b, w});
    pts.push_back({b, a, w});
    pts.push_back({a, c, w});
    pts.push_back({c, a, w});
}

} // namespace detail

/// Symmetric positive-weight rules, exact to the stated degree. Requests for
/// degrees without a dedicated table fall through to the next rule up.
inline TriangleRule triangle_rule(int degree) {
    if (degree < 0 || degree > 6)
        throw std::invalid_argument("triangle_rule: degree must be in [0, 6]");
    TriangleRule r;
    r.degree = degree;
    auto& p = r.points;
    if (degree <= 1) {
        p.push_back({1.0 / 3.0, 1.0 / 3.0, 0.5});
    } else if (degree == 2) {
        detail::push_orbit3(p, 1.0 / 6.0, 1.0 / 6.0);
    } else if (degree <= 4) {
        // Dunavant degree 4, 6 points.
        detail::push_orbit3(p, 0.445948490915965, 0.223381589678011 * 0.5);
        detail::push_orbit3(p, 0.091576213509771, 0.109951743655322 * 0.5);
    } else if (degree == 5) {
        p.push_back({1.0 / 3.0, 1.0 / 3.0, 0.225 * 0.5});
        detail::push_orbit3(p, 0.470142064105115, 0.132394152788506 * 0.5);
        detail::push_orbit3(p, 0.101286507323456, 0.125939180544827 * 0.5);
    } else {
        // Dunavant degree 6, 12 points.
        detail::push_orbit3(p, 0.249286745170910, 0.116786275726379 * 0.5);
        detail::push_orbit3(p, 0.063089014491502, 0.050844906370207 * 0.5);
        detail::push_orbit6(p, 0.310352451033785, 0.053145049844816, 0.082851075618374 * 0.5);
    }
    return r;
}

/// Gauss-Legendre on [0,1]; the smallest point count whose degree covers the
/// request is returned.
inline EdgeRule edge_rule(int degree) {
    if (degree < 0 || degree > 7)
        throw std::invalid_argument("edge_rule: degree must be in [0, 7]");
    EdgeRule r;
    r.degree = degree;
    auto& p = r.points;
    if (degree <= 1) {
        p.push_back({0.5, 1.0});
    } else if (degree <= 3) {
        double d = 0.5 / std::sqrt(3.0);
        p.push_back({0.5 - d, 0.5});
        p.push_back({0.5 + d, 0.5});
    } else if (degree <= 5) {
        double d = 0.5 * std::sqrt(3.0 / 5.0);
        p.push_back({0.5 - d, 5.0 / 18.0});
        p.push_back({0.5, 8.0 / 18.0});
        p.push_back({0.5 + d, 5.0 / 18.0});
    } else {
        double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
        double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
        double wa = (18.0 + std::sqrt(30.0)) / 72.0;
        double wb = (18.0 - std::sqrt(30.0)) / 72.0;
        p.push_back({0.5 - 0.5 * b, wb});
        p.push_back({0.5 - 0.5 * a, wa});
        p.push_back({0.5 + 0.5 * a, wa});
        p.push_back({0.5 + 0.5 * b, wb});
    }
    return r;
}

enum class QuadDomain { Triangle, Edge };

/// Generic rule accessor: points on the reference element plus weights.
struct QuadratureRule {
    std::vector<Vec2> points;
    std::vector<double> weights;
};

inline QuadratureRule quadrature_rule(QuadDomain domain, int degree) {
    if (degree > 6)
        throw std::invalid_argument("quadrature_rule: degree must be <= 6");
    QuadratureRule out;
    if (domain == QuadDomain::Triangle) {
        for (const auto& q : triangle_rule(degree).points) {
            out.points.push_back({q.xi, q.eta});
            out.weights.push_back(q.w);
        }
    } else {
        for (const auto& q : edge_rule(degree).points) {
            out.points.push_back({q.s, 0.0});
            out.weights.push_back(q.w);
        }
    }
    return out;
}

// Default rules used throughout assembly and diagnostics: degree 4 on
// triangles, degree 3 on edges. Keeping one shared choice is what makes the
// discrete energy identities close to rounding.
inline constexpr int kTriQuadDegree = 4;
inline constexpr int kEdgeQuadDegree = 3;

} // namespace chsd
