#pragma once

#include "chsd/pd_scheme.hpp"

namespace chsd {

/// Scheme FD Darcy stage: the stabilized system for (u_m, P_m) with the
/// lagged interface flux u_c^k. The momentum row is the Galerkin statement
/// of the pointwise relation against the full velocity space; the mass row
/// carries the beta tau (grad P, grad q) stabilization.
inline std::pair<FEField, FEField> fd_darcy_step(Model& model, const SimState& state_k,
                                                 const FEField& mu_new, const FEField& phi_k) {
    const PhysicalParams& p = model.params;
    if (p.beta <= 0.0) throw std::invalid_argument("fd_darcy_step: beta must be > 0");
    model.ensure_fluid_operators(phi_k);

    if (!model.fd_darcy_fact_) {
        BlockSystem bs;
        bs.add_field(model.Xm.dof_count);
        bs.add_field(model.Mm.dof_count);
        bs.add_block(0, 0, model.Mv_m, p.rho0 / (p.chi * model.tau));
        bs.add_block(0, 0, model.A_m());
        bs.add_block(0, 1, model.B_m, 1.0, /*transpose=*/true);
        // mass row negated for symmetry: B_m u - beta tau S_m P = -flux
        bs.add_block(1, 0, model.B_m);
        bs.add_block(1, 1, model.S_m, -p.beta * model.tau);
        bs.constrain_field(0, model.Xm.constrained_dofs,
                           Eigen::Map<const Eigen::VectorXd>(model.Xm.constrained_values.data(),
                                                             model.Xm.constrained_values.size()));
        if (model.Mm.mean_zero)
            bs.set_mean_zero(1, model.wMm);
        else
            bs.constrain_field(1, model.Mm.constrained_dofs,
                               Eigen::Map<const Eigen::VectorXd>(
                                   model.Mm.constrained_values.data(),
                                   model.Mm.constrained_values.size()));
        LinearSystem sys = bs.build();
        model.fd_darcy_fact_ = std::make_shared<Factorized>(
            sys.A, sys.constrained, sys.constrained_values, sys.mean_zero_weight);
    }

    const int nXm = model.Xm.dof_count, nMm = model.Mm.dof_count;
    auto [fc, fm] = detail::momentum_loads(model, phi_k, mu_new);
    (void)fc;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nXm + nMm);
    b.segment(0, nXm) = p.rho0 / (p.chi * model.tau) * (model.Mv_m * state_k.u_m.coeffs) + fm;
    b.segment(nXm, nMm) = -(model.Gamma.transpose() * state_k.u_c.coeffs);

    Eigen::VectorXd x = model.fd_darcy_fact_->solve(b, model.options.linear_tol);
    FEField u_m(model.Xm, x.segment(0, nXm));
    FEField p_m(model.Mm, x.segment(nXm, nMm));
    return {std::move(u_m), std::move(p_m)};
}

/// Scheme FD Stokes stage, with P_m^{k+1} a known datum on Gamma_cm.
inline std::pair<FEField, FEField> fd_stokes_step(Model& model, const SimState& state_k,
                                                  const FEField& mu_new, const FEField& phi_k,
                                                  const FEField& p_m_new) {
    const PhysicalParams& p = model.params;
    model.ensure_fluid_operators(phi_k);

    if (!model.fd_stokes_fact_) {
        BlockSystem bs;
        bs.add_field(model.Xc.dof_count);
        bs.add_field(model.Mc.dof_count);
        bs.add_block(0, 0, model.Mv_c, p.rho0 / model.tau);
        bs.add_block(0, 0, model.A_c());
        bs.add_block(0, 1, model.B_c, 1.0, /*transpose=*/true);
        bs.add_block(1, 0, model.B_c);
        bs.constrain_field(0, model.Xc.constrained_dofs,
                           Eigen::Map<const Eigen::VectorXd>(model.Xc.constrained_values.data(),
                                                             model.Xc.constrained_values.size()));
        LinearSystem sys = bs.build();
        model.fd_stokes_fact_ = std::make_shared<Factorized>(
            sys.A, sys.constrained, sys.constrained_values, sys.mean_zero_weight);
    }

    const int nXc = model.Xc.dof_count, nMc = model.Mc.dof_count;
    auto [fc, fm] = detail::momentum_loads(model, phi_k, mu_new);
    (void)fm;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nXc + nMc);
    b.segment(0, nXc) = p.rho0 / model.tau * (model.Mv_c * state_k.u_c.coeffs) + fc -
                        model.Gamma * p_m_new.coeffs;

    Eigen::VectorXd x = model.fd_stokes_fact_->solve(b, model.options.linear_tol);
    FEField u_c(model.Xc, x.segment(0, nXc));
    FEField p_c(model.Mc, x.segment(nXc, nMc));
    return {std::move(u_c), std::move(p_c)};
}

/// One full FD step: shared Cahn-Hilliard stage, stabilized Darcy solve with
/// lagged flux, Stokes solve with the fresh Darcy pressure, then the
/// modified energy-law ledger.
inline StepResult fd_step(Model& model, const SimState& state_k) {
    CHStepResult ch = ch_step(model, state_k);
    auto [u_m, p_m] = fd_darcy_step(model, state_k, ch.mu, state_k.phi);
    auto [u_c, p_c] = fd_stokes_step(model, state_k, ch.mu, state_k.phi, p_m);
    StepResult out;
    out.state.phi = std::move(ch.phi);
    out.state.mu = std::move(ch.mu);
    out.state.u_c = std::move(u_c);
    out.state.p_c = std::move(p_c);
    out.state.u_m = std::move(u_m);
    out.state.p_m = std::move(p_m);
    out.state.time = state_k.time + model.tau;
    out.state.step = state_k.step + 1;
    out.newton = ch.stats;
    out.report = energy_law_audit(model, state_k, out.state, ch.sys, Scheme::FD);
    return out;
}

} // namespace chsd
