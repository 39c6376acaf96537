#pragma once

#include <memory>

#include "chsd/linalg.hpp"

namespace chsd {

/// Discrete unknowns at one time level.
struct SimState {
    FEField phi, mu;  // P1 whole domain
    FEField u_c, p_c; // P2 vector / P1 scalar on the conduit
    FEField u_m, p_m; // P2 vector / P1 scalar on the matrix
    double time = 0.0;
    int step = 0;
};

struct ModelOptions {
    std::vector<DirichletBC> conduit_velocity_bcs = {{"GammaC", DirichletBC::Mode::FullValue, {}}};
    std::vector<DirichletBC> matrix_velocity_bcs = {{"GammaM", DirichletBC::Mode::NormalOnly, {}}};
    std::vector<DirichletBC> matrix_pressure_bcs; // empty selects the mean-zero constraint
    double newton_tol = 1e-10;
    double linear_tol = 1e-10;
};

/// Mesh, Taylor-Hood spaces for both subdomains, the shared P1 pair for
/// (phi, mu), and the coefficient-independent operators, assembled once.
/// Fluid operators and factorizations are cached while the viscosity does
/// not depend on phi. Not copyable: spaces and fields point into it.
class Model {
public:
    KarsticMesh mesh;
    PhysicalParams params;
    double tau = 0.0;
    ModelOptions options;

    FESpace Y;  // P1 scalar, whole domain (phi, mu share interface dofs)
    FESpace Xc; // P2 vector, conduit
    FESpace Mc; // P1 scalar, conduit, no constraint
    FESpace Xm; // P2 vector, matrix
    FESpace Mm; // P1 scalar, matrix, mean zero unless a pressure BC is given

    SparseOperator M_Y, K_Y;
    SparseOperator Mv_c, Mv_m;
    SparseOperator B_c, B_m, Gamma, S_m;
    Eigen::VectorXd wY, wMm; // basis integrals (whole domain, matrix pressure)
    double domain_area = 0.0;

    Model(KarsticMesh mesh_, PhysicalParams params_, double tau_, ModelOptions opts = {})
        : mesh(std::move(mesh_)), params(std::move(params_)), tau(tau_), options(std::move(opts)) {
        if (tau <= 0.0) throw std::invalid_argument("Model: tau must be > 0");
        Y = build_space(mesh, ElementKind::P1, ValueRank::Scalar, Support::WholeDomain);
        Xc = build_space(mesh, ElementKind::P2, ValueRank::Vector2, Support::Conduit,
                         options.conduit_velocity_bcs);
        Mc = build_space(mesh, ElementKind::P1, ValueRank::Scalar, Support::Conduit);
        Xm = build_space(mesh, ElementKind::P2, ValueRank::Vector2, Support::Matrix,
                         options.matrix_velocity_bcs);
        bool mz = options.matrix_pressure_bcs.empty();
        Mm = build_space(mesh, ElementKind::P1, ValueRank::Scalar, Support::Matrix,
                         options.matrix_pressure_bcs, mz);

        M_Y = assemble_mass(Y);
        K_Y = assemble_stiffness(Y);
        Mv_c = assemble_mass(Xc);
        Mv_m = assemble_mass(Xm);
        B_c = assemble_bc(Xc, Mc);
        FEField unit_phi = interpolate(Y, [](Vec2) { return 1.0; });
        PhysicalParams unit_nu = params; // b_m does not see the viscosity
        unit_nu.nu_fn = {};
        unit_nu.nu_value = 1.0;
        unit_nu.nu_min = 1.0;
        B_m = assemble_am_bm(Xm, Mm, unit_phi, unit_nu).second;
        Gamma = assemble_interface_coupling(Xc, Mm);
        S_m = assemble_stiffness(Mm);
        wY = integral_weights(Y);
        wMm = integral_weights(Mm);
        domain_area = wY.sum();
    }

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// Change the time step; cached factorizations carry tau, so they reset.
    void set_tau(double tau_) {
        if (tau_ <= 0.0) throw std::invalid_argument("Model: tau must be > 0");
        tau = tau_;
        pd_fact_.reset();
        fd_darcy_fact_.reset();
        fd_stokes_fact_.reset();
    }

    /// Fluid operators for the lagged phase field; rebuilt per step only
    /// when nu depends on phi.
    void ensure_fluid_operators(const FEField& phi_k) {
        if (fluid_ops_ready_ && !params.nu_depends_on_phi) return;
        A_bjsj_ = params.alpha_bjsj != 0.0 ? assemble_bjsj(Xc, phi_k, params)
                                           : SparseOperator(Xc.dof_count, Xc.dof_count);
        A_c_ = assemble_ac(Xc, phi_k, params);
        A_m_ = assemble_am_bm(Xm, Mm, phi_k, params).first;
        fluid_ops_ready_ = true;
        pd_fact_.reset();
        fd_darcy_fact_.reset();
        fd_stokes_fact_.reset();
    }

    const SparseOperator& A_c() const { return require_ops(A_c_); }
    const SparseOperator& A_m() const { return require_ops(A_m_); }
    const SparseOperator& A_bjsj() const { return require_ops(A_bjsj_); }

    SimState zero_state() const {
        SimState s;
        s.phi = FEField(Y);
        s.mu = FEField(Y);
        s.u_c = FEField(Xc);
        s.p_c = FEField(Mc);
        s.u_m = FEField(Xm);
        s.p_m = FEField(Mm);
        return s;
    }

    // Factorization caches, owned here so repeated steps reuse them.
    std::shared_ptr<Factorized> pd_fact_, fd_darcy_fact_, fd_stokes_fact_;

private:
    const SparseOperator& require_ops(const SparseOperator& op) const {
        if (!fluid_ops_ready_)
            throw std::logic_error("Model: fluid operators not assembled yet");
        return op;
    }

    SparseOperator A_c_, A_m_, A_bjsj_;
    bool fluid_ops_ready_ = false;
};

} // namespace chsd
