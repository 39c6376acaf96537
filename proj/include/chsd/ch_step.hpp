#pragma once

#include "chsd/state.hpp"

namespace chsd {

/// Mass-type matrix with weight fn(phi(x)) sampled at quadrature points.
inline SparseOperator assemble_phi_weighted_mass(const FESpace& sp, const FEField& phi,
                                                 const std::function<double(double)>& fn) {
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!sp.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(sp, t, em, q.xi, q.eta, b);
            double w = q.w * em.det * fn(evaluate_scalar(phi, t, q.xi, q.eta));
            for (int i = 0; i < b.nent; ++i)
                for (int j = 0; j < b.nent; ++j)
                    out.emplace_back(b.ent[i], b.ent[j], w * b.val[i] * b.val[j]);
        }
    });
    return detail::compress(sp.dof_count, sp.dof_count, trips);
}

/// Load vector (fn(phi), v) by quadrature; used for the cubic term, whose
/// integrand is quartic for P1 phi and hence exact under the degree-4 rule.
inline Eigen::VectorXd assemble_phi_load(const FESpace& sp, const FEField& phi,
                                         const std::function<double(double)>& fn) {
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    auto trips = detail::accumulate_elements(mesh, [&](int t, std::vector<Triplet>& out) {
        if (!sp.on_support(t)) return;
        ElementMap em = detail::make_map(mesh, t);
        detail::ElemBasis b;
        for (const auto& q : rule.points) {
            detail::elem_basis(sp, t, em, q.xi, q.eta, b);
            double w = q.w * em.det * fn(evaluate_scalar(phi, t, q.xi, q.eta));
            for (int i = 0; i < b.nent; ++i) out.emplace_back(b.ent[i], 0, w * b.val[i]);
        }
    });
    return detail::reduce_vector(sp.dof_count, trips);
}

/// Per-step operators of the convex-splitting system: mobility stiffness
/// K_M from M(phi^k) and the eliminated intermediate-velocity transport.
struct CHSystem {
    SparseOperator K_M;
    CHTransport transport;
};

inline CHSystem build_ch_system(const Model& model, const SimState& state_k) {
    CHSystem sys;
    sys.K_M = assemble_phi_weighted_stiffness(
        model.Y, state_k.phi, [&](double v) { return model.params.mobility(v); });
    sys.transport =
        assemble_ch_transport(state_k.phi, state_k.u_c, state_k.u_m, model.params, model.tau);
    return sys;
}

/// Residual of (the eliminated form of) the two coupled weak equations:
///   r1 = M (phi - phi_k)/tau + (K_M + C_tau) mu - L_adv
///   r2 = (gamma/eps) (N(phi) - M phi_k) + gamma eps K phi - M mu
/// with N(phi)_i = (phi^3, v_i).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> ch_residual(const Model& model,
                                                               const FEField& phi_new,
                                                               const FEField& mu_new,
                                                               const FEField& phi_k,
                                                               const CHSystem& sys) {
    const PhysicalParams& p = model.params;
    Eigen::VectorXd r1 = model.M_Y * (phi_new.coeffs - phi_k.coeffs) / model.tau +
                         sys.K_M * mu_new.coeffs + sys.transport.C_tau * mu_new.coeffs -
                         sys.transport.L_adv;
    Eigen::VectorXd cubic =
        assemble_phi_load(model.Y, phi_new, [](double v) { return v * v * v; });
    Eigen::VectorXd r2 = (p.gamma / p.epsilon) * (cubic - model.M_Y * phi_k.coeffs) +
                         p.gamma * p.epsilon * (model.K_Y * phi_new.coeffs) -
                         model.M_Y * mu_new.coeffs;
    return {std::move(r1), std::move(r2)};
}

/// Convenience overload assembling the per-step operators itself.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> ch_residual(const Model& model,
                                                               const FEField& phi_new,
                                                               const FEField& mu_new,
                                                               const SimState& state_k) {
    return ch_residual(model, phi_new, mu_new, state_k.phi, build_ch_system(model, state_k));
}

struct NewtonStats {
    int evaluations = 0; // residual evaluations; a converged guess counts 1
    std::vector<double> residual_history;
    double final_residual = 0.0;
    int dampings = 0;
};

struct CHStepResult {
    FEField phi, mu;
    NewtonStats stats;
    CHSystem sys; // kept for the energy ledger
};

/// One convex-splitting Cahn-Hilliard step, shared by both schemes. Newton
/// from (phi^k, 0) with halving damping; the problem is strictly convex, so
/// failure to converge signals a configuration error.
inline CHStepResult ch_step(const Model& model, const SimState& state_k) {
    const PhysicalParams& p = model.params;
    const int n = model.Y.dof_count;
    CHStepResult out;
    out.sys = build_ch_system(model, state_k);

    Eigen::VectorXd rhs1 = model.M_Y * state_k.phi.coeffs / model.tau + out.sys.transport.L_adv;
    Eigen::VectorXd rhs2 = (p.gamma / p.epsilon) * (model.M_Y * state_k.phi.coeffs);
    double rhs_norm = std::sqrt(rhs1.squaredNorm() + rhs2.squaredNorm());
    double tol = model.options.newton_tol * (1.0 + rhs_norm);

    FEField phi = state_k.phi;
    FEField mu(model.Y);
    SparseOperator D = out.sys.K_M + out.sys.transport.C_tau;

    auto residual_norm = [&](const FEField& ph, const FEField& m, Eigen::VectorXd& r1,
                             Eigen::VectorXd& r2) {
        std::tie(r1, r2) = ch_residual(model, ph, m, state_k.phi, out.sys);
        return std::sqrt(r1.squaredNorm() + r2.squaredNorm());
    };

    Eigen::VectorXd r1, r2;
    double rn = residual_norm(phi, mu, r1, r2);
    out.stats.evaluations = 1;
    out.stats.residual_history.push_back(rn);

    const int max_iter = 50;
    int iter = 0;
    while (rn > tol) {
        if (++iter > max_iter)
            throw std::runtime_error(
                "ch_step: Newton did not converge in 50 iterations (configuration error)");
        // Jacobian blocks: [[M/tau, D], [G, -M]] with G = (gamma/eps) W + gamma eps K,
        // W the 3 phi^2 weighted mass.
        SparseOperator W = assemble_phi_weighted_mass(model.Y, phi,
                                                      [](double v) { return 3.0 * v * v; });
        BlockSystem bs;
        bs.add_field(n);
        bs.add_field(n);
        bs.add_block(0, 0, model.M_Y, 1.0 / model.tau);
        bs.add_block(0, 1, D);
        SparseOperator G = (p.gamma / p.epsilon) * W + p.gamma * p.epsilon * model.K_Y;
        bs.add_block(1, 0, G);
        bs.add_block(1, 1, model.M_Y, -1.0);
        LinearSystem sys = bs.build();
        sys.b.segment(0, n) = -r1;
        sys.b.segment(n, n) = -r2;
        Eigen::VectorXd delta = solve_linear(sys, model.options.linear_tol);

        double s = 1.0;
        FEField phi_try(model.Y), mu_try(model.Y);
        double rn_try;
        for (;;) {
            phi_try.coeffs = phi.coeffs + s * delta.segment(0, n);
            mu_try.coeffs = mu.coeffs + s * delta.segment(n, n);
            rn_try = residual_norm(phi_try, mu_try, r1, r2);
            ++out.stats.evaluations;
            if (rn_try < rn || s < 1e-6) break;
            s *= 0.5;
            ++out.stats.dampings;
        }
        phi = phi_try;
        mu = mu_try;
        rn = rn_try;
        out.stats.residual_history.push_back(rn);
    }
    out.stats.final_residual = rn;
    out.phi = std::move(phi);
    out.mu = std::move(mu);
    return out;
}

} // namespace chsd
