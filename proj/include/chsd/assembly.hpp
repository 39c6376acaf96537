#pragma once

#include <cstdlib>
#include <thread>

#include <Eigen/Sparse>

#include "chsd/field.hpp"
#include "chsd/params.hpp"
#include "chsd/quadrature.hpp"

namespace chsd {

/// Compressed sparse operator. Assemblers accumulate coordinate entries in
/// element order and compress once; duplicates are summed on compression.
using SparseOperator = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

inline int assembly_thread_count() {
    const char* env = std::getenv("CHSD_THREADS");
    if (!env) return 1;
    int v = std::atoi(env);
    return std::max(1, v);
}

namespace detail {

// Element loop with optional chunked threading. Each chunk accumulates its
// own triplet buffer; buffers are concatenated in chunk order, so the final
// entry sequence equals the serial element order for any thread count.
template <typename Fn>
inline std::vector<Triplet> accumulate_elements(const KarsticMesh& mesh, const Fn& fn) {
    const int nt = mesh.triangle_count();
    int threads = std::min(assembly_thread_count(), std::max(1, nt));
    if (threads == 1) {
        std::vector<Triplet> trips;
        for (int t = 0; t < nt; ++t) fn(t, trips);
        return trips;
    }
    std::vector<std::vector<Triplet>> buffers(threads);
    std::vector<std::thread> pool;
    int chunk = (nt + threads - 1) / threads;
    for (int c = 0; c < threads; ++c) {
        int lo = c * chunk, hi = std::min(nt, lo + chunk);
        pool.emplace_back([&, lo, hi, c]() {
            for (int t = lo; t < hi; ++t) fn(t, buffers[c]);
        });
    }
    for (auto& th : pool) th.join();
    std::vector<Triplet> trips;
    for (auto& b : buffers) trips.insert(trips.end(), b.begin(), b.end());
    return trips;
}

inline SparseOperator compress(int rows, int cols, const std::vector<Triplet>& trips) {
    SparseOperator op(rows, cols);
    op.setFromTriplets(trips.begin(), trips.end());
    op.makeCompressed();
    return op;
}

// Reduce an (index, value) list into a dense vector in list order.
inline Eigen::VectorXd reduce_vector(int n, const std::vector<Triplet>& trips) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (const auto& t : trips) v[t.row()] += t.value();
    return v;
}

struct ElemBasis {
    int nent = 0;
    int ent[6];
    std::array<double, 6> val;
    std::array<Vec2, 6> grad; // physical gradients
};

inline void elem_basis(const FESpace& sp, int tri, const ElementMap& em, double xi, double eta,
                       ElemBasis& b) {
    if (sp.kind == ElementKind::P1) {
        b.nent = 3;
        std::array<double, 3> v;
        std::array<Vec2, 3> g;
        p1_values(xi, eta, v);
        p1_grads(g);
        for (int i = 0; i < 3; ++i) {
            b.val[i] = v[i];
            b.grad[i] = em.grad_to_physical(g[i]);
        }
    } else {
        b.nent = 6;
        std::array<double, 6> v;
        std::array<Vec2, 6> g;
        p2_values(xi, eta, v);
        p2_grads(xi, eta, g);
        for (int i = 0; i < 6; ++i) {
            b.val[i] = v[i];
            b.grad[i] = em.grad_to_physical(g[i]);
        }
    }
    sp.element_entities(tri, b.ent);
}

inline ElementMap make_map(const KarsticMesh& mesh, int tri) {
    const auto& tv = mesh.triangles[tri].v;
    return element_map(mesh.nodes[tv[0]], mesh.nodes[tv[1]], mesh.nodes[tv[2]]);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Mass and stiffness with a scalar coefficient
// ---------------------------------------------------------------------------

/// Mass matrix with pointwise coefficient; works for scalar and vector
/// spaces (vector: block diagonal over components).
inline SparseOperator assemble_mass(const FESpace& sp,
                                    const std::function<double(Vec2)>& coeff = {}) {
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    int comps = sp.components();
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!sp.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(sp, t, em, q.xi, q.eta, b);
            double c = coeff ? coeff(em.to_physical(q.xi, q.eta)) : 1.0;
            double w = q.w * em.det * c;
            for (int i = 0; i < b.nent; ++i)
                for (int j = 0; j < b.nent; ++j) {
                    double v = w * b.val[i] * b.val[j];
                    for (int cc = 0; cc < comps; ++cc)
                        out.emplace_back(sp.dof_of(b.ent[i], cc), sp.dof_of(b.ent[j], cc), v);
                }
        }
    });
    return detail::compress(sp.dof_count, sp.dof_count, trips);
}

inline SparseOperator assemble_stiffness(const FESpace& sp,
                                         const std::function<double(Vec2)>& coeff = {}) {
    if (sp.rank != ValueRank::Scalar)
        throw std::invalid_argument("assemble_stiffness: scalar spaces only");
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!sp.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(sp, t, em, q.xi, q.eta, b);
            double c = coeff ? coeff(em.to_physical(q.xi, q.eta)) : 1.0;
            double w = q.w * em.det * c;
            for (int i = 0; i < b.nent; ++i)
                for (int j = 0; j < b.nent; ++j)
                    out.emplace_back(b.ent[i], b.ent[j], w * b.grad[i].dot(b.grad[j]));
        }
    });
    return detail::compress(sp.dof_count, sp.dof_count, trips);
}

enum class OperatorKind { Mass, Stiffness };

inline SparseOperator assemble_mass_stiffness(const FESpace& sp,
                                              const std::function<double(Vec2)>& coeff,
                                              OperatorKind which) {
    return which == OperatorKind::Mass ? assemble_mass(sp, coeff) : assemble_stiffness(sp, coeff);
}

/// Stiffness weighted by a function of the lagged phase value: entries
/// int fn(phi_k(x)) grad(psi_j) . grad(psi_i). Used for the mobility operator
/// and the phi^2-weighted pieces of the transport correction.
inline SparseOperator assemble_phi_weighted_stiffness(const FESpace& sp, const FEField& phi_k,
                                                      const std::function<double(double)>& fn,
                                                      Support where = Support::WholeDomain) {
    if (sp.rank != ValueRank::Scalar)
        throw std::invalid_argument("assemble_phi_weighted_stiffness: scalar spaces only");
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!sp.on_support(t)) return;
        if (where != Support::WholeDomain) {
            Subdomain d = mesh.triangles[t].domain;
            if ((where == Support::Conduit) != (d == Subdomain::Conduit)) return;
        }
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(sp, t, em, q.xi, q.eta, b);
            double w = q.w * em.det * fn(evaluate_scalar(phi_k, t, q.xi, q.eta));
            for (int i = 0; i < b.nent; ++i)
                for (int j = 0; j < b.nent; ++j)
                    out.emplace_back(b.ent[i], b.ent[j], w * b.grad[i].dot(b.grad[j]));
        }
    });
    return detail::compress(sp.dof_count, sp.dof_count, trips);
}

/// Stiffness with a 2x2 matrix coefficient sampled at quadrature points
/// (reference coordinates supplied): int (C(x) grad p_j) . grad q_i.
inline SparseOperator assemble_matrix_coeff_stiffness(
    const FESpace& sp, const std::function<Eigen::Matrix2d(int, double, double)>& coeff) {
    if (sp.rank != ValueRank::Scalar)
        throw std::invalid_argument("assemble_matrix_coeff_stiffness: scalar spaces only");
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!sp.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(sp, t, em, q.xi, q.eta, b);
            Eigen::Matrix2d C = coeff(t, q.xi, q.eta);
            double w = q.w * em.det;
            for (int i = 0; i < b.nent; ++i)
                for (int j = 0; j < b.nent; ++j) {
                    Eigen::Vector2d gj(b.grad[j].x, b.grad[j].y), gi(b.grad[i].x, b.grad[i].y);
                    out.emplace_back(b.ent[i], b.ent[j], w * gi.dot(C * gj));
                }
        }
    });
    return detail::compress(sp.dof_count, sp.dof_count, trips);
}

/// Integral of each scalar basis function; w' x equals int x dx.
inline Eigen::VectorXd integral_weights(const FESpace& sp) {
    if (sp.rank != ValueRank::Scalar)
        throw std::invalid_argument("integral_weights: scalar spaces only");
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!sp.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(sp, t, em, q.xi, q.eta, b);
            for (int i = 0; i < b.nent; ++i)
                out.emplace_back(b.ent[i], 0, q.w * em.det * b.val[i]);
        }
    });
    return detail::reduce_vector(sp.dof_count, trips);
}

// ---------------------------------------------------------------------------
// Stokes forms a_c, b_c and the BJSJ boundary form
// ---------------------------------------------------------------------------

/// BJSJ tangential slip form on Gamma_cm:
///   sum_i alpha int nu(phi_k) / sqrt(trace(Pi)) (u.tau)(v.tau) dS.
inline SparseOperator assemble_bjsj(const FESpace& Vc, const FEField& phi_k,
                                    const PhysicalParams& p) {
    if (Vc.rank != ValueRank::Vector2 || Vc.support != Support::Conduit)
        throw std::invalid_argument("assemble_bjsj: conduit vector space expected");
    const KarsticMesh& mesh = *Vc.mesh;
    EdgeRule rule = edge_rule(kEdgeQuadDegree);
    std::vector<Triplet> trips;
    double scale = p.alpha_bjsj / std::sqrt(p.bjsj_trace);
    for (const auto& ie : mesh.interface_edges) {
        int ents[3] = {Vc.node_entity(ie.edge.a), Vc.node_entity(ie.edge.b),
                       Vc.edge_entity(mesh.edge_id(ie.edge.a, ie.edge.b))};
        double pa = phi_k.coeffs[phi_k.space->node_entity(ie.edge.a)];
        double pb = phi_k.coeffs[phi_k.space->node_entity(ie.edge.b)];
        for (const auto& q : rule.points) {
            std::array<double, 3> tr;
            p2_edge_trace(q.s, tr);
            double nu = p.nu(pa * (1.0 - q.s) + pb * q.s);
            if (nu <= 0.0) throw std::invalid_argument("assemble_bjsj: nonpositive viscosity");
            double w = q.w * ie.length * scale * nu;
            double tau[2] = {ie.tangent.x, ie.tangent.y};
            for (int i = 0; i < 3; ++i)
                for (int ci = 0; ci < 2; ++ci)
                    for (int j = 0; j < 3; ++j)
                        for (int cj = 0; cj < 2; ++cj)
                            trips.emplace_back(Vc.dof_of(ents[i], ci), Vc.dof_of(ents[j], cj),
                                               w * tr[i] * tau[ci] * tr[j] * tau[cj]);
        }
    }
    return detail::compress(Vc.dof_count, Vc.dof_count, trips);
}

/// Conduit form a_c = 2 (nu(phi_k) D(u), D(v))_c + BJSJ boundary term.
inline SparseOperator assemble_ac(const FESpace& Vc, const FEField& phi_k,
                                  const PhysicalParams& p) {
    if (Vc.rank != ValueRank::Vector2 || Vc.support != Support::Conduit)
        throw std::invalid_argument("assemble_ac: conduit vector space expected");
    const KarsticMesh& mesh = *Vc.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!Vc.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(Vc, t, em, q.xi, q.eta, b);
            double nu = p.nu(evaluate_scalar(phi_k, t, q.xi, q.eta));
            if (nu <= 0.0) throw std::invalid_argument("assemble_ac: nonpositive viscosity");
            double w = q.w * em.det * nu;
            // 2 D(u):D(v) for basis (i,a), (j,b) reduces to
            // delta_ab (gi.gj) + gi[b] gj[a]
            for (int i = 0; i < b.nent; ++i) {
                const Vec2& gi = b.grad[i];
                double gi_c[2] = {gi.x, gi.y};
                for (int j = 0; j < b.nent; ++j) {
                    const Vec2& gj = b.grad[j];
                    double gj_c[2] = {gj.x, gj.y};
                    double gg = gi.dot(gj);
                    for (int a = 0; a < 2; ++a)
                        for (int bb = 0; bb < 2; ++bb) {
                            double v = (a == bb ? gg : 0.0) + gi_c[bb] * gj_c[a];
                            out.emplace_back(Vc.dof_of(b.ent[i], a), Vc.dof_of(b.ent[j], bb),
                                             w * v);
                        }
                }
            }
        }
    });
    SparseOperator visc = detail::compress(Vc.dof_count, Vc.dof_count, trips);
    if (p.alpha_bjsj == 0.0) return visc;
    SparseOperator out = visc + assemble_bjsj(Vc, phi_k, p);
    out.makeCompressed();
    return out;
}

/// b_c(v, q) = -(div v, q)_c, stored with rows over the pressure space.
inline SparseOperator assemble_bc(const FESpace& Vc, const FESpace& Mc) {
    if (Vc.mesh != Mc.mesh || Mc.rank != ValueRank::Scalar)
        throw std::invalid_argument("assemble_bc: incompatible spaces");
    const KarsticMesh& mesh = *Vc.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!Vc.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis bv, bq;
        for (const auto& q : rule.points) {
            detail::elem_basis(Vc, t, em, q.xi, q.eta, bv);
            detail::elem_basis(Mc, t, em, q.xi, q.eta, bq);
            double w = q.w * em.det;
            for (int i = 0; i < bq.nent; ++i)
                for (int j = 0; j < bv.nent; ++j) {
                    double gj_c[2] = {bv.grad[j].x, bv.grad[j].y};
                    for (int cj = 0; cj < 2; ++cj)
                        out.emplace_back(bq.ent[i], Vc.dof_of(bv.ent[j], cj),
                                         -w * bq.val[i] * gj_c[cj]);
                }
        }
    });
    return detail::compress(Mc.dof_count, Vc.dof_count, trips);
}

// ---------------------------------------------------------------------------
// Darcy forms a_m, b_m
// ---------------------------------------------------------------------------

inline std::pair<SparseOperator, SparseOperator> assemble_am_bm(const FESpace& Xm,
                                                                const FESpace& Mm,
                                                                const FEField& phi_k,
                                                                const PhysicalParams& p) {
    if (Xm.rank != ValueRank::Vector2 || Xm.support != Support::Matrix)
        throw std::invalid_argument("assemble_am_bm: matrix-side vector space expected");
    Eigen::Matrix2d Pinv = p.Pi_inv();
    const KarsticMesh& mesh = *Xm.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto am_trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!Xm.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(Xm, t, em, q.xi, q.eta, b);
            double nu = p.nu(evaluate_scalar(phi_k, t, q.xi, q.eta));
            if (nu < 0.0) throw std::invalid_argument("assemble_am_bm: negative viscosity");
            double w = q.w * em.det * nu;
            for (int i = 0; i < b.nent; ++i)
                for (int j = 0; j < b.nent; ++j) {
                    double nn = b.val[i] * b.val[j];
                    for (int a = 0; a < 2; ++a)
                        for (int bb = 0; bb < 2; ++bb)
                            out.emplace_back(Xm.dof_of(b.ent[i], a), Xm.dof_of(b.ent[j], bb),
                                             w * Pinv(a, bb) * nn);
                }
        }
    });
    auto bm_trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!Xm.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis bv, bq;
        for (const auto& q : rule.points) {
            detail::elem_basis(Xm, t, em, q.xi, q.eta, bv);
            detail::elem_basis(Mm, t, em, q.xi, q.eta, bq);
            double w = q.w * em.det;
            for (int i = 0; i < bq.nent; ++i) {
                double gi_c[2] = {bq.grad[i].x, bq.grad[i].y};
                for (int j = 0; j < bv.nent; ++j)
                    for (int cj = 0; cj < 2; ++cj)
                        out.emplace_back(bq.ent[i], Xm.dof_of(bv.ent[j], cj),
                                         w * bv.val[j] * gi_c[cj]);
            }
        }
    });
    return {detail::compress(Xm.dof_count, Xm.dof_count, am_trips),
            detail::compress(Mm.dof_count, Xm.dof_count, bm_trips)};
}

// ---------------------------------------------------------------------------
// Interface coupling
// ---------------------------------------------------------------------------

/// Gamma[v, q] = int_Gamma q (v . n_cm) dS. The same operator serves the
/// Stokes row (as Gamma) and, transposed, the Darcy mass row; this
/// transpose-pair sharing is what cancels the interface work in the ledger.
inline SparseOperator assemble_interface_coupling(const FESpace& Vc, const FESpace& Mm) {
    if (Vc.rank != ValueRank::Vector2 || Mm.rank != ValueRank::Scalar)
        throw std::invalid_argument("assemble_interface_coupling: expected (vector, scalar)");
    const KarsticMesh& mesh = *Vc.mesh;
    EdgeRule rule = edge_rule(kEdgeQuadDegree);
    std::vector<Triplet> trips;
    for (const auto& ie : mesh.interface_edges) {
        int vents[3] = {Vc.node_entity(ie.edge.a), Vc.node_entity(ie.edge.b),
                        Vc.edge_entity(mesh.edge_id(ie.edge.a, ie.edge.b))};
        int qents[2] = {Mm.node_entity(ie.edge.a), Mm.node_entity(ie.edge.b)};
        double ncm[2] = {ie.n_cm.x, ie.n_cm.y};
        for (const auto& q : rule.points) {
            std::array<double, 3> vt;
            p2_edge_trace(q.s, vt);
            double qt[2] = {1.0 - q.s, q.s};
            double w = q.w * ie.length;
            for (int i = 0; i < 3; ++i)
                for (int ci = 0; ci < 2; ++ci)
                    for (int j = 0; j < 2; ++j)
                        trips.emplace_back(Vc.dof_of(vents[i], ci), qents[j],
                                           w * vt[i] * ncm[ci] * qt[j]);
        }
    }
    return detail::compress(Vc.dof_count, Mm.dof_count, trips);
}

// ---------------------------------------------------------------------------
// Cahn-Hilliard transport terms
// ---------------------------------------------------------------------------

/// Pieces of the eliminated intermediate-velocity transport:
///   explicit load   L_adv[i] = (u^k phi^k, grad v_i)
///   correction      C_tau = tau (chi/rho0 W_m + 1/rho0 W_c),
/// with W_s the phi^2-weighted stiffness restricted to subdomain s. W_c and
/// W_m are kept so the ledger W_1 terms reuse the exact solve operators.
struct CHTransport {
    SparseOperator C_tau;
    SparseOperator W_c, W_m;
    Eigen::VectorXd L_adv;
};

inline CHTransport assemble_ch_transport(const FEField& phi_k, const FEField& u_c,
                                         const FEField& u_m, const PhysicalParams& p,
                                         double tau) {
    const FESpace& Y = *phi_k.space;
    const KarsticMesh& mesh = *Y.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto sq = [](double v) { return v * v; };
    CHTransport out;
    out.W_c = assemble_phi_weighted_stiffness(Y, phi_k, sq, Support::Conduit);
    out.W_m = assemble_phi_weighted_stiffness(Y, phi_k, sq, Support::Matrix);
    out.C_tau = tau * ((p.chi / p.rho0) * out.W_m + (1.0 / p.rho0) * out.W_c);
    out.C_tau.makeCompressed();

    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out_t) {
        bool conduit = mesh.triangles[t].domain == Subdomain::Conduit;
        const FEField& u = conduit ? u_c : u_m;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(Y, t, em, q.xi, q.eta, b);
            Vec2 uv = evaluate_vector(u, t, q.xi, q.eta);
            double phi = evaluate_scalar(phi_k, t, q.xi, q.eta);
            double w = q.w * em.det * phi;
            for (int i = 0; i < b.nent; ++i)
                out_t.emplace_back(b.ent[i], 0, w * uv.dot(b.grad[i]));
        }
    });
    out.L_adv = detail::reduce_vector(Y.dof_count, trips);
    return out;
}

// ---------------------------------------------------------------------------
// Load vectors
// ---------------------------------------------------------------------------

/// Capillary load (phi^k grad mu, v) over the support of V.
inline Eigen::VectorXd assemble_capillary_load(const FESpace& V, const FEField& phi_k,
                                               const FEField& mu) {
    const KarsticMesh& mesh = *V.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    const FESpace& Y = *phi_k.space;
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!V.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        // grad mu is constant per element for P1 mu
        detail::ElemBasis bmu;
        detail::elem_basis(Y, t, em, 1.0 / 3.0, 1.0 / 3.0, bmu);
        Vec2 gmu{0.0, 0.0};
        for (int i = 0; i < bmu.nent; ++i) gmu = gmu + mu.coeffs[bmu.ent[i]] * bmu.grad[i];
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(V, t, em, q.xi, q.eta, b);
            double w = q.w * em.det * evaluate_scalar(phi_k, t, q.xi, q.eta);
            for (int j = 0; j < b.nent; ++j) {
                out.emplace_back(V.dof_of(b.ent[j], 0), 0, w * gmu.x * b.val[j]);
                out.emplace_back(V.dof_of(b.ent[j], 1), 0, w * gmu.y * b.val[j]);
            }
        }
    });
    return detail::reduce_vector(V.dof_count, trips);
}

/// Boussinesq loads (B (phi^k - mean_phi) y_hat, v) for the conduit and
/// matrix velocity spaces.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> assemble_buoyancy(const FEField& phi_k,
                                                                     double B, double mean_phi,
                                                                     const FESpace& Xc,
                                                                     const FESpace& Xm) {
    auto one = [&](const FESpace& V) {
        const KarsticMesh& mesh = *V.mesh;
        TriangleRule rule = triangle_rule(kTriQuadDegree);
        auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
            if (!V.on_support(t)) return;
            ElementMap em = detail::make_map(mesh, t);
            detail::ElemBasis b;
            for (const auto& q : rule.points) {
                detail::elem_basis(V, t, em, q.xi, q.eta, b);
                double f = B * (evaluate_scalar(phi_k, t, q.xi, q.eta) - mean_phi);
                double w = q.w * em.det * f;
                for (int j = 0; j < b.nent; ++j)
                    out.emplace_back(V.dof_of(b.ent[j], 1), 0, w * b.val[j]);
            }
        });
        return detail::reduce_vector(V.dof_count, trips);
    };
    if (B == 0.0)
        return {Eigen::VectorXd::Zero(Xc.dof_count), Eigen::VectorXd::Zero(Xm.dof_count)};
    return {one(Xc), one(Xm)};
}

/// Maximum entrywise asymmetry, for operator sanity checks.
inline double max_asymmetry(const SparseOperator& A) {
    SparseOperator D = SparseOperator(A.transpose()) - A;
    double m = 0.0;
    for (int k = 0; k < D.outerSize(); ++k)
        for (SparseOperator::InnerIterator it(D, k); it; ++it)
            m = std::max(m, std::abs(it.value()));
    return m;
}

} // namespace chsd
