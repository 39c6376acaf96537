#pragma once

#include <cstdio>
#include <fstream>

#include "chsd/ch_step.hpp"

namespace chsd {

enum class Scheme { PD, FD };

inline double double_well(double phi) {
    double a = phi * phi - 1.0;
    return 0.25 * a * a;
}

/// Per-step energy breakdown and ledger record. Dissipation terms carry
/// their tau scaling; slack is LHS - RHS of the applicable modified energy
/// law (nonpositive up to rounding when the law holds).
struct EnergyReport {
    double kinetic_c = 0.0;
    double kinetic_m = 0.0;
    double free_energy = 0.0;
    double total = 0.0;
    double mass = 0.0;

    double diss_mu = 0.0;   // tau ||sqrt(M) grad mu||^2
    double diss_ac = 0.0;   // tau a_c(u_c, u_c), BJSJ part included
    double diss_um = 0.0;   // tau ||sqrt(nu/Pi) u_m||^2
    double diss_bjsj = 0.0; // BJSJ part of diss_ac
    double diss_stab = 0.0; // (beta tau^2 / 2) ||grad P_m||^2, FD only
    double w1_quarter = 0.0; // (tau^2/4rho0)(chi ||phi grad mu||_m^2 + ||phi grad mu||_c^2)

    double grad_dphi_sq = 0.0;
    double du_c_sq = 0.0;
    double du_m_sq = 0.0;

    double slack = 0.0;
    double e_gamma = 0.0;   // FD interface audit term
    double e_gamma_C = 0.0; // empirical constant of the trace-type interface bound
};

/// int fn(phi(x)) dx over the whole domain by the shared quadrature rule.
/// Throws when require_nonneg is set and a sample is negative.
inline double integrate_of_phi(const FEField& phi, const std::function<double(double)>& fn,
                               bool require_nonneg = false) {
    const FESpace& sp = *phi.space;
    const KarsticMesh& mesh = *sp.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    double acc = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        if (!sp.on_support(t)) continue;
        ElementMap em = detail::make_map(mesh, t);
        for (const auto& q : rule.points) {
            double v = fn(evaluate_scalar(phi, t, q.xi, q.eta));
            if (require_nonneg && v < 0.0)
                throw std::logic_error("integrate_of_phi: negative sample");
            acc += q.w * em.det * v;
        }
    }
    return acc;
}

/// int phi dx, the conserved quantity of the scheme.
inline double mass_total(const Model& model, const FEField& phi) {
    return model.wY.dot(phi.coeffs);
}

inline double free_energy(const Model& model, const FEField& phi) {
    const PhysicalParams& p = model.params;
    double well = integrate_of_phi(phi, double_well, /*require_nonneg=*/true);
    double grad = phi.coeffs.dot(model.K_Y * phi.coeffs);
    return p.gamma * (well / p.epsilon + 0.5 * p.epsilon * grad);
}

/// Energy part of the report: kinetic terms, free energy, total, mass.
inline EnergyReport discrete_energy(const Model& model, const SimState& s) {
    const PhysicalParams& p = model.params;
    EnergyReport r;
    r.kinetic_c = 0.5 * p.rho0 * s.u_c.coeffs.dot(model.Mv_c * s.u_c.coeffs);
    r.kinetic_m = 0.5 * p.rho0 / p.chi * s.u_m.coeffs.dot(model.Mv_m * s.u_m.coeffs);
    r.free_energy = free_energy(model, s.phi);
    r.total = r.kinetic_c + r.kinetic_m + r.free_energy;
    r.mass = mass_total(model, s.phi);
    return r;
}

/// Evaluate every named term of the applicable modified energy law for one
/// completed step and record the slack. For the PD scheme the audited
/// inequality is the proof's summed form (it includes the chemical-potential
/// dissipation); the FD ledger follows the stabilized scheme's energy law.
inline EnergyReport energy_law_audit(Model& model, const SimState& state_k,
                                     const SimState& state_new, const CHSystem& sys,
                                     Scheme scheme) {
    const PhysicalParams& p = model.params;
    const double tau = model.tau;
    model.ensure_fluid_operators(state_k.phi);

    EnergyReport r = discrete_energy(model, state_new);
    EnergyReport r_old = discrete_energy(model, state_k);

    r.diss_mu = tau * state_new.mu.coeffs.dot(sys.K_M * state_new.mu.coeffs);
    r.diss_ac = tau * state_new.u_c.coeffs.dot(model.A_c() * state_new.u_c.coeffs);
    r.diss_bjsj = tau * state_new.u_c.coeffs.dot(model.A_bjsj() * state_new.u_c.coeffs);
    r.diss_um = tau * state_new.u_m.coeffs.dot(model.A_m() * state_new.u_m.coeffs);

    Eigen::VectorXd dphi = state_new.phi.coeffs - state_k.phi.coeffs;
    Eigen::VectorXd duc = state_new.u_c.coeffs - state_k.u_c.coeffs;
    Eigen::VectorXd dum = state_new.u_m.coeffs - state_k.u_m.coeffs;
    r.grad_dphi_sq = dphi.dot(model.K_Y * dphi);
    r.du_c_sq = duc.dot(model.Mv_c * duc);
    r.du_m_sq = dum.dot(model.Mv_m * dum);

    double wm = state_new.mu.coeffs.dot(sys.transport.W_m * state_new.mu.coeffs);
    double wc = state_new.mu.coeffs.dot(sys.transport.W_c * state_new.mu.coeffs);
    r.w1_quarter = tau * tau / (4.0 * p.rho0) * (p.chi * wm + wc);

    double dE = r.total - r_old.total;
    if (scheme == Scheme::PD) {
        r.slack = dE + r.diss_mu + r.diss_ac + r.diss_um +
                  0.5 * p.gamma * p.epsilon * r.grad_dphi_sq + 0.25 * p.rho0 * r.du_c_sq +
                  0.25 * p.rho0 / p.chi * r.du_m_sq;
    } else {
        r.diss_stab =
            0.5 * p.beta * tau * tau * state_new.p_m.coeffs.dot(model.S_m * state_new.p_m.coeffs);
        r.e_gamma = -duc.dot(model.Gamma * state_new.p_m.coeffs);
        double gp = std::sqrt(state_new.p_m.coeffs.dot(model.S_m * state_new.p_m.coeffs));
        double du = std::sqrt(r.du_c_sq);
        r.e_gamma_C = (gp * du > 0.0) ? std::abs(r.e_gamma) / (gp * du) : 0.0;
        r.slack = dE + r.diss_mu + r.diss_ac + r.diss_um + r.diss_stab + r.w1_quarter +
                  0.5 * p.gamma * p.epsilon * r.grad_dphi_sq + p.rho0 / 12.0 * r.du_c_sq +
                  p.rho0 / (6.0 * p.chi) * r.du_m_sq;
    }
    return r;
}

/// CSV energy log, one row per step. Column order is fixed:
/// step,time,kinetic_c,kinetic_m,free_energy,total,diss_mu,diss_ac,diss_um,
/// diss_bjsj,diss_stab,mass,slack
class EnergyLog {
public:
    explicit EnergyLog(const std::string& path) : os_(path) {
        if (!os_) throw std::runtime_error("EnergyLog: cannot open " + path);
        os_ << "step,time,kinetic_c,kinetic_m,free_energy,total,diss_mu,diss_ac,diss_um,"
               "diss_bjsj,diss_stab,mass,slack\n";
    }

    void append(int step, double time, const EnergyReport& r) {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                      "%.17g\n",
                      step, time, r.kinetic_c, r.kinetic_m, r.free_energy, r.total, r.diss_mu,
                      r.diss_ac, r.diss_um, r.diss_bjsj, r.diss_stab, r.mass, r.slack);
        os_ << buf;
        if (!os_) throw std::runtime_error("EnergyLog: write failed");
    }

private:
    std::ofstream os_;
};

/// Step output shared by both schemes.
struct StepResult {
    SimState state;
    EnergyReport report;
    NewtonStats newton;
};

} // namespace chsd
