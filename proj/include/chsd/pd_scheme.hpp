#pragma once

#include "chsd/diagnostics.hpp"

namespace chsd {

namespace detail {

/// Load vector over a velocity space from a pointwise vector field given at
/// quadrature points.
template <typename Fn>
inline Eigen::VectorXd vector_load(const FESpace& V, const Fn& fn) {
    const KarsticMesh& mesh = *V.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!V.on_support(t)) return;
        ElementMap em = make_map(mesh, t);
        ElemBasis b;
        for (const auto& q : rule.points) {
            elem_basis(V, t, em, q.xi, q.eta, b);
            Vec2 f = fn(t, q.xi, q.eta, em);
            double w = q.w * em.det;
            for (int j = 0; j < b.nent; ++j) {
                out.emplace_back(V.dof_of(b.ent[j], 0), 0, w * f.x * b.val[j]);
                out.emplace_back(V.dof_of(b.ent[j], 1), 0, w * f.y * b.val[j]);
            }
        }
    });
    return reduce_vector(V.dof_count, trips);
}

/// Piecewise-constant gradient of a P1 field on one element.
inline Vec2 p1_gradient(const FEField& f, int tri, const ElementMap& em) {
    const FESpace& sp = *f.space;
    ElemBasis b;
    elem_basis(sp, tri, em, 1.0 / 3.0, 1.0 / 3.0, b);
    Vec2 g{0.0, 0.0};
    for (int i = 0; i < b.nent; ++i) g = g + f.coeffs[b.ent[i]] * b.grad[i];
    return g;
}

/// Momentum loads shared by the schemes: capillary force plus optional
/// Boussinesq buoyancy with the mean of the lagged phase field.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> momentum_loads(const Model& model,
                                                                  const FEField& phi_k,
                                                                  const FEField& mu_new) {
    Eigen::VectorXd lc = assemble_capillary_load(model.Xc, phi_k, mu_new);
    Eigen::VectorXd lm = assemble_capillary_load(model.Xm, phi_k, mu_new);
    Eigen::VectorXd fc = -lc;
    Eigen::VectorXd fm = -lm;
    if (model.params.buoyancy_B != 0.0) {
        double mean_phi = model.wY.dot(phi_k.coeffs) / model.domain_area;
        auto [bc, bm] =
            assemble_buoyancy(phi_k, model.params.buoyancy_B, mean_phi, model.Xc, model.Xm);
        fc += bc;
        fm += bm;
    }
    return {std::move(fc), std::move(fm)};
}

} // namespace detail

struct FluidResult {
    FEField u_c, p_c, u_m, p_m;
};

/// Scheme PD fluid stage: the coupled Stokes-Darcy system solved
/// monolithically for (u_c, P_c, u_m, P_m), given mu^{k+1} from the
/// Cahn-Hilliard stage. Block rows are sign-flipped on the constraint
/// equations so the assembled operator is symmetric.
inline FluidResult pd_fluid_step(Model& model, const SimState& state_k, const FEField& mu_new,
                                 const FEField& phi_k) {
    const PhysicalParams& p = model.params;
    model.ensure_fluid_operators(phi_k);

    if (!model.pd_fact_) {
        BlockSystem bs;
        bs.add_field(model.Xc.dof_count);
        bs.add_field(model.Mc.dof_count);
        bs.add_field(model.Xm.dof_count);
        bs.add_field(model.Mm.dof_count);
        bs.add_block(0, 0, model.Mv_c, p.rho0 / model.tau);
        bs.add_block(0, 0, model.A_c());
        bs.add_block(0, 1, model.B_c, 1.0, /*transpose=*/true);
        bs.add_block(0, 3, model.Gamma);
        bs.add_block(1, 0, model.B_c);
        bs.add_block(2, 2, model.Mv_m, p.rho0 / (p.chi * model.tau));
        bs.add_block(2, 2, model.A_m());
        bs.add_block(2, 3, model.B_m, 1.0, /*transpose=*/true);
        bs.add_block(3, 0, model.Gamma, 1.0, /*transpose=*/true);
        bs.add_block(3, 2, model.B_m);
        bs.constrain_field(0, model.Xc.constrained_dofs,
                           Eigen::Map<const Eigen::VectorXd>(model.Xc.constrained_values.data(),
                                                             model.Xc.constrained_values.size()));
        bs.constrain_field(2, model.Xm.constrained_dofs,
                           Eigen::Map<const Eigen::VectorXd>(model.Xm.constrained_values.data(),
                                                             model.Xm.constrained_values.size()));
        if (model.Mm.mean_zero)
            bs.set_mean_zero(3, model.wMm);
        else
            bs.constrain_field(3, model.Mm.constrained_dofs,
                               Eigen::Map<const Eigen::VectorXd>(
                                   model.Mm.constrained_values.data(),
                                   model.Mm.constrained_values.size()));
        LinearSystem sys = bs.build();
        model.pd_fact_ = std::make_shared<Factorized>(sys.A, sys.constrained,
                                                      sys.constrained_values,
                                                      sys.mean_zero_weight);
    }

    const int nXc = model.Xc.dof_count, nMc = model.Mc.dof_count;
    const int nXm = model.Xm.dof_count, nMm = model.Mm.dof_count;
    auto [fc, fm] = detail::momentum_loads(model, phi_k, mu_new);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nXc + nMc + nXm + nMm);
    b.segment(0, nXc) = p.rho0 / model.tau * (model.Mv_c * state_k.u_c.coeffs) + fc;
    b.segment(nXc + nMc, nXm) =
        p.rho0 / (p.chi * model.tau) * (model.Mv_m * state_k.u_m.coeffs) + fm;

    Eigen::VectorXd x = model.pd_fact_->solve(b, model.options.linear_tol);
    FluidResult out{FEField(model.Xc), FEField(model.Mc), FEField(model.Xm), FEField(model.Mm)};
    out.u_c.coeffs = x.segment(0, nXc);
    out.p_c.coeffs = x.segment(nXc, nMc);
    out.u_m.coeffs = x.segment(nXc + nMc, nXm);
    out.p_m.coeffs = x.segment(nXc + nMc + nXm, nMm);
    return out;
}

/// One full PD step: Cahn-Hilliard stage, then the monolithic fluid solve,
/// then the modified energy-law ledger.
inline StepResult pd_step(Model& model, const SimState& state_k) {
    CHStepResult ch = ch_step(model, state_k);
    FluidResult fl = pd_fluid_step(model, state_k, ch.mu, state_k.phi);
    StepResult out;
    out.state.phi = std::move(ch.phi);
    out.state.mu = std::move(ch.mu);
    out.state.u_c = std::move(fl.u_c);
    out.state.p_c = std::move(fl.p_c);
    out.state.u_m = std::move(fl.u_m);
    out.state.p_m = std::move(fl.p_m);
    out.state.time = state_k.time + model.tau;
    out.state.step = state_k.step + 1;
    out.newton = ch.stats;
    out.report = energy_law_audit(model, state_k, out.state, ch.sys, Scheme::PD);
    return out;
}

/// Darcy pressure-Poisson variant: the scalar elliptic solve for P_m with
/// the intermediate velocity eliminated, then velocity recovery through the
/// pointwise momentum relation projected onto X_m by a mass solve.
/// mu_new may be null (treated as zero capillary force).
inline std::pair<FEField, FEField> pd_darcy_pressure_variant(Model& model,
                                                             const SimState& state_k,
                                                             const FEField* mu_new,
                                                             const FEField& phi_k,
                                                             const FEField& u_c_candidate) {
    const PhysicalParams& p = model.params;
    const double tau = model.tau;
    Eigen::Matrix2d Pinv = p.Pi_inv();
    double mean_phi = model.wY.dot(phi_k.coeffs) / model.domain_area;

    // g = (rho0/(chi tau)) u_m^k - phi^k grad mu (+ buoyancy), the momentum
    // data entering both the elliptic solve and the recovery.
    auto g_at = [&](int t, double xi, double eta, const ElementMap& em) {
        Vec2 g = (p.rho0 / (p.chi * tau)) * evaluate_vector(state_k.u_m, t, xi, eta);
        if (mu_new) {
            Vec2 gm = detail::p1_gradient(*mu_new, t, em);
            double phi = evaluate_scalar(phi_k, t, xi, eta);
            g = g - phi * gm;
        }
        if (p.buoyancy_B != 0.0) {
            double phi = evaluate_scalar(phi_k, t, xi, eta);
            g.y += p.buoyancy_B * (phi - mean_phi);
        }
        return g;
    };
    auto coeff_at = [&](int t, double xi, double eta) {
        double nu = p.nu(evaluate_scalar(phi_k, t, xi, eta));
        Eigen::Matrix2d A = (p.rho0 / (p.chi * tau)) * Eigen::Matrix2d::Identity() + nu * Pinv;
        return Eigen::Matrix2d(A.inverse());
    };

    // (C grad P, grad q) = (C g, grad q) + int_Gamma (u_c . n) q
    const KarsticMesh& mesh = *model.Mm.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    SparseOperator App = assemble_matrix_coeff_stiffness(model.Mm, coeff_at);
    auto rhs_trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!model.Mm.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis bq;
        for (const auto& q : rule.points) {
            detail::elem_basis(model.Mm, t, em, q.xi, q.eta, bq);
            Eigen::Matrix2d C = coeff_at(t, q.xi, q.eta);
            Vec2 g = g_at(t, q.xi, q.eta, em);
            Eigen::Vector2d cg = C * Eigen::Vector2d(g.x, g.y);
            double w = q.w * em.det;
            for (int i = 0; i < bq.nent; ++i)
                out.emplace_back(bq.ent[i], 0,
                                 w * (cg.x() * bq.grad[i].x + cg.y() * bq.grad[i].y));
        }
    });
    Eigen::VectorXd rhs = detail::reduce_vector(model.Mm.dof_count, rhs_trips);
    rhs += model.Gamma.transpose() * u_c_candidate.coeffs;

    LinearSystem sys(App, rhs);
    sys.constrained = model.Mm.constrained_dofs;
    sys.constrained_values = Eigen::Map<const Eigen::VectorXd>(
        model.Mm.constrained_values.data(), model.Mm.constrained_values.size());
    if (model.Mm.mean_zero) sys.mean_zero_weight = model.wMm;
    FEField p_m(model.Mm, solve_linear(sys, model.options.linear_tol));

    // Recovery u = C (g - grad P), L2-projected onto X_m.
    Eigen::VectorXd proj_rhs =
        detail::vector_load(model.Xm, [&](int t, double xi, double eta, const ElementMap& em) {
            Eigen::Matrix2d C = coeff_at(t, xi, eta);
            Vec2 g = g_at(t, xi, eta, em);
            Vec2 gp = detail::p1_gradient(p_m, t, em);
            Eigen::Vector2d u = C * Eigen::Vector2d(g.x - gp.x, g.y - gp.y);
            return Vec2{u.x(), u.y()};
        });
    LinearSystem proj(model.Mv_m, proj_rhs);
    proj.constrained = model.Xm.constrained_dofs;
    proj.constrained_values = Eigen::Map<const Eigen::VectorXd>(
        model.Xm.constrained_values.data(), model.Xm.constrained_values.size());
    FEField u_m(model.Xm, solve_linear(proj, model.options.linear_tol));
    return {std::move(p_m), std::move(u_m)};
}

} // namespace chsd
