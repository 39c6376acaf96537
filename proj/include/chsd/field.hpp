#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "chsd/quadrature.hpp"
#include "chsd/space.hpp"

namespace chsd {

/// Coefficient vector over an FESpace. Value-like: copies are independent.
struct FEField {
    const FESpace* space = nullptr;
    Eigen::VectorXd coeffs;

    FEField() = default;
    explicit FEField(const FESpace& sp) : space(&sp), coeffs(Eigen::VectorXd::Zero(sp.dof_count)) {}
    FEField(const FESpace& sp, Eigen::VectorXd c) : space(&sp), coeffs(std::move(c)) {
        if (coeffs.size() != sp.dof_count)
            throw std::invalid_argument("FEField: coefficient length does not match space");
    }
};

/// Nodal (and, for P2, midpoint) interpolation of a scalar function.
inline FEField interpolate(const FESpace& sp, const std::function<double(Vec2)>& f) {
    if (sp.rank != ValueRank::Scalar)
        throw std::invalid_argument("interpolate: scalar function on a vector space");
    FEField out(sp);
    for (int e = 0; e < sp.scalar_entity_count; ++e) out.coeffs[e] = f(sp.entity_point(e));
    return out;
}

inline FEField interpolate(const FESpace& sp, const std::function<Vec2(Vec2)>& f) {
    if (sp.rank != ValueRank::Vector2)
        throw std::invalid_argument("interpolate: vector function on a scalar space");
    FEField out(sp);
    for (int e = 0; e < sp.scalar_entity_count; ++e) {
        Vec2 v = f(sp.entity_point(e));
        out.coeffs[2 * e] = v.x;
        out.coeffs[2 * e + 1] = v.y;
    }
    return out;
}

namespace detail {

/// Basis values of one element at a reference point, in local dof order.
template <typename Array>
inline void basis_values(ElementKind kind, double xi, double eta, Array& n, int& count) {
    if (kind == ElementKind::P1) {
        std::array<double, 3> v;
        p1_values(xi, eta, v);
        for (int i = 0; i < 3; ++i) n[i] = v[i];
        count = 3;
    } else {
        std::array<double, 6> v;
        p2_values(xi, eta, v);
        for (int i = 0; i < 6; ++i) n[i] = v[i];
        count = 6;
    }
}

} // namespace detail

/// Field value at a reference point of a supported triangle.
inline double evaluate_scalar(const FEField& f, int tri, double xi, double eta) {
    const FESpace& sp = *f.space;
    std::array<double, 6> n;
    int cnt;
    detail::basis_values(sp.kind, xi, eta, n, cnt);
    int ent[6];
    sp.element_entities(tri, ent);
    double v = 0.0;
    for (int i = 0; i < cnt; ++i) v += f.coeffs[ent[i]] * n[i];
    return v;
}

inline Vec2 evaluate_vector(const FEField& f, int tri, double xi, double eta) {
    const FESpace& sp = *f.space;
    std::array<double, 6> n;
    int cnt;
    detail::basis_values(sp.kind, xi, eta, n, cnt);
    int ent[6];
    sp.element_entities(tri, ent);
    Vec2 v{0.0, 0.0};
    for (int i = 0; i < cnt; ++i) {
        v.x += f.coeffs[2 * ent[i]] * n[i];
        v.y += f.coeffs[2 * ent[i] + 1] * n[i];
    }
    return v;
}

enum class Norm { L2 };

namespace detail {

template <typename SqDiff>
inline double l2_accumulate(const FESpace& sp, SqDiff&& sq) {
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    double acc = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        if (!sp.on_support(t)) continue;
        const auto& tv = mesh.triangles[t].v;
        ElementMap em = element_map(mesh.nodes[tv[0]], mesh.nodes[tv[1]], mesh.nodes[tv[2]]);
        for (const auto& q : rule.points) acc += q.w * em.det * sq(t, q.xi, q.eta, em);
    }
    return acc;
}

} // namespace detail

/// L2 distance of two fields on the same space (or spaces over one mesh).
inline double error_norm(const FEField& a, const FEField& b, Norm = Norm::L2) {
    const FESpace& sa = *a.space;
    const FESpace& sb = *b.space;
    if (sa.mesh != sb.mesh || sa.rank != sb.rank || sa.support != sb.support)
        throw std::invalid_argument("error_norm: fields live on incompatible spaces");
    double s2 = detail::l2_accumulate(sa, [&](int t, double xi, double eta, const ElementMap&) {
        if (sa.rank == ValueRank::Scalar) {
            double d = evaluate_scalar(a, t, xi, eta) - evaluate_scalar(b, t, xi, eta);
            return d * d;
        }
        Vec2 d = evaluate_vector(a, t, xi, eta) - evaluate_vector(b, t, xi, eta);
        return d.dot(d);
    });
    return std::sqrt(s2);
}

/// L2 distance between a field and a pointwise function (quadrature of the
/// squared difference, degree-4 rule).
inline double error_norm(const FEField& a, const std::function<double(Vec2)>& f) {
    const FESpace& sp = *a.space;
    double s2 = detail::l2_accumulate(sp, [&](int t, double xi, double eta, const ElementMap& em) {
        double d = evaluate_scalar(a, t, xi, eta) - f(em.to_physical(xi, eta));
        return d * d;
    });
    return std::sqrt(s2);
}

inline double error_norm(const FEField& a, const std::function<Vec2(Vec2)>& f) {
    const FESpace& sp = *a.space;
    double s2 = detail::l2_accumulate(sp, [&](int t, double xi, double eta, const ElementMap& em) {
        Vec2 d = evaluate_vector(a, t, xi, eta) - f(em.to_physical(xi, eta));
        return d.dot(d);
    });
    return std::sqrt(s2);
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic, space descriptor, then raw little-endian doubles.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline bool host_little_endian() {
    std::uint16_t x = 1;
    unsigned char c;
    std::memcpy(&c, &x, 1);
    return c == 1;
}

} // namespace detail

inline void save_field(const FEField& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_field: cannot open " + path);
    const FESpace& sp = *f.space;
    os.write("CHSDFLD1", 8);
    detail::write_u64(os, static_cast<std::uint64_t>(sp.kind));
    detail::write_u64(os, static_cast<std::uint64_t>(sp.rank));
    detail::write_u64(os, static_cast<std::uint64_t>(sp.support));
    detail::write_u64(os, static_cast<std::uint64_t>(sp.dof_count));
    for (int i = 0; i < sp.dof_count; ++i) {
        double v = f.coeffs[i];
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        if (!detail::host_little_endian()) {
            std::uint64_t r = 0;
            for (int k = 0; k < 8; ++k) r |= ((bits >> (8 * k)) & 0xff) << (8 * (7 - k));
            bits = r;
        }
        detail::write_u64(os, bits);
    }
    if (!os) throw std::runtime_error("save_field: write failed for " + path);
}

inline FEField load_field(const FESpace& sp, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_field: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::string(magic, 8) != "CHSDFLD1")
        throw std::runtime_error("load_field: bad magic in " + path);
    auto kind = static_cast<ElementKind>(detail::read_u64(is));
    auto rank = static_cast<ValueRank>(detail::read_u64(is));
    auto support = static_cast<Support>(detail::read_u64(is));
    auto n = static_cast<int>(detail::read_u64(is));
    if (kind != sp.kind || rank != sp.rank || support != sp.support || n != sp.dof_count)
        throw std::runtime_error("load_field: space descriptor mismatch in " + path);
    FEField out(sp);
    for (int i = 0; i < n; ++i) {
        std::uint64_t bits = detail::read_u64(is);
        if (!detail::host_little_endian()) {
            std::uint64_t r = 0;
            for (int k = 0; k < 8; ++k) r |= ((bits >> (8 * k)) & 0xff) << (8 * (7 - k));
            bits = r;
        }
        double v;
        std::memcpy(&v, &bits, 8);
        out.coeffs[i] = v;
    }
    if (!is) throw std::runtime_error("load_field: truncated file " + path);
    return out;
}

} // namespace chsd
