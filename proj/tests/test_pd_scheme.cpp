#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chsd/chsd.hpp"
#include "oracle.hpp"

using namespace chsd;

namespace {

PhysicalParams unit_params() {
    PhysicalParams p;
    p.alpha_bjsj = 1.0;
    return p;
}

PhysicalParams spinodal_params() {
    PhysicalParams p;
    p.rho0 = 0.01;
    p.chi = 1.0;
    p.nu_value = 0.1;
    p.gamma = 0.1;
    p.epsilon = 0.01;
    p.mobility_value = 0.1;
    p.alpha_bjsj = 1.0;
    return p;
}

std::unique_ptr<Model> stacked_model(int n, PhysicalParams p, double tau) {
    KarsticMesh mesh = build_karstic_mesh({0, -1, 1, 0}, {0, 0, 1, 1}, n);
    return std::make_unique<Model>(std::move(mesh), std::move(p), tau);
}

Vec2 vortex(Vec2 q) {
    double sx = std::sin(M_PI * q.x), sy = std::sin(M_PI * q.y);
    return {-2 * sx * sx * std::sin(2 * M_PI * q.y), 2 * std::sin(2 * M_PI * q.x) * sy * sy};
}

double conv_phi0(Vec2 q) {
    return 0.24 * std::cos(2 * M_PI * q.x) * std::cos(2 * M_PI * q.y) +
           0.4 * std::cos(M_PI * q.x) * std::cos(3 * M_PI * q.y) + 1.0;
}

SimState convergence_initial(Model& model) {
    SimState s = model.zero_state();
    s.phi = interpolate(model.Y, conv_phi0);
    s.u_c = interpolate(model.Xc, vortex);
    s.u_m = interpolate(model.Xm, vortex);
    return s;
}

SimState spinodal_initial(Model& model, unsigned seed = 42) {
    SimState s = model.zero_state();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    s.phi = FEField(model.Y);
    for (int i = 0; i < model.Y.dof_count; ++i) s.phi.coeffs[i] = -0.05 + dist(rng);
    s.u_c = interpolate(model.Xc, vortex);
    s.u_m = interpolate(model.Xm, vortex);
    return s;
}

// quadrature evaluation of || u_field - u_bar ||^2 with u_bar = u_k - scale phi grad(mu)
double intermediate_residual_sq(const Model& model, const FEField& u_new, const FEField& u_k,
                                const FEField& phi, const FEField& mu, double scale,
                                Support side) {
    const KarsticMesh& mesh = model.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    double acc = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        Subdomain d = mesh.triangles[t].domain;
        if ((side == Support::Conduit) != (d == Subdomain::Conduit)) continue;
        ElementMap em = detail::make_map(mesh, t);
        Vec2 gmu = detail::p1_gradient(mu, t, em);
        for (const auto& q : rule.points) {
            double ph = evaluate_scalar(phi, t, q.xi, q.eta);
            Vec2 ubar = evaluate_vector(u_k, t, q.xi, q.eta) - (scale * ph) * gmu;
            Vec2 diff = evaluate_vector(u_new, t, q.xi, q.eta) - ubar;
            acc += q.w * em.det * diff.dot(diff);
        }
    }
    return acc;
}

double field_norm_sq(const Model& model, const FEField& u, Support side) {
    const KarsticMesh& mesh = model.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    double acc = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        Subdomain d = mesh.triangles[t].domain;
        if ((side == Support::Conduit) != (d == Subdomain::Conduit)) continue;
        ElementMap em = detail::make_map(mesh, t);
        for (const auto& q : rule.points) {
            Vec2 v = evaluate_vector(u, t, q.xi, q.eta);
            acc += q.w * em.det * v.dot(v);
        }
    }
    return acc;
}

double ubar_norm_sq(const Model& model, const FEField& u_k, const FEField& phi,
                    const FEField& mu, double scale, Support side) {
    const KarsticMesh& mesh = model.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    double acc = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        Subdomain d = mesh.triangles[t].domain;
        if ((side == Support::Conduit) != (d == Subdomain::Conduit)) continue;
        ElementMap em = detail::make_map(mesh, t);
        Vec2 gmu = detail::p1_gradient(mu, t, em);
        for (const auto& q : rule.points) {
            double ph = evaluate_scalar(phi, t, q.xi, q.eta);
            Vec2 ubar = evaluate_vector(u_k, t, q.xi, q.eta) - (scale * ph) * gmu;
            acc += q.w * em.det * ubar.dot(ubar);
        }
    }
    return acc;
}

} // namespace

TEST_CASE("rest state stays at rest") {
    auto model = stacked_model(2, unit_params(), 0.1);
    SimState s = model->zero_state();
    s.phi = interpolate(model->Y, [](Vec2) { return 0.3; });
    FEField mu_const = interpolate(model->Y, [](Vec2) { return 2.0; });
    FluidResult r = pd_fluid_step(*model, s, mu_const, s.phi);
    CHECK(r.u_c.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.p_c.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.u_m.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.p_m.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("monolithic solve matches a dense linear-algebra oracle on the n=2 mesh") {
    auto model = stacked_model(2, unit_params(), 0.04);
    SimState s = convergence_initial(*model);
    CHStepResult ch = ch_step(*model, s);
    CHECK(oracle::pd_dense_gap(*model, s, ch.mu) <= 1e-10);
}

TEST_CASE("per-stage ledgers: S-Ine and Darcy-E1 balance") {
    auto model = stacked_model(6, spinodal_params(), 0.1);
    SimState s = spinodal_initial(*model);
    CHStepResult ch = ch_step(*model, s);
    FluidResult r = pd_fluid_step(*model, s, ch.mu, s.phi);
    const PhysicalParams& p = model->params;
    double tau = model->tau;

    // Stokes stage: (rho0/2){||u^{k+1}||^2 - ||ubar_c||^2 + ||u^{k+1}-ubar_c||^2}
    //               + tau a_c + tau Int_Gamma P_m (u^{k+1}.n) = 0
    double u1 = field_norm_sq(*model, r.u_c, Support::Conduit);
    double ub = ubar_norm_sq(*model, s.u_c, s.phi, ch.mu, tau / p.rho0, Support::Conduit);
    double du = intermediate_residual_sq(*model, r.u_c, s.u_c, s.phi, ch.mu, tau / p.rho0,
                                         Support::Conduit);
    model->ensure_fluid_operators(s.phi);
    double a_c = r.u_c.coeffs.dot(model->A_c() * r.u_c.coeffs);
    double gamma_term = r.u_c.coeffs.dot(model->Gamma * r.p_m.coeffs);
    double s_ine = 0.5 * p.rho0 * (u1 - ub + du) + tau * a_c + tau * gamma_term;
    CHECK(std::abs(s_ine) <= 1e-9);

    // Darcy stage
    double um1 = field_norm_sq(*model, r.u_m, Support::Matrix);
    double umb = ubar_norm_sq(*model, s.u_m, s.phi, ch.mu, tau * p.chi / p.rho0, Support::Matrix);
    double dum = intermediate_residual_sq(*model, r.u_m, s.u_m, s.phi, ch.mu,
                                          tau * p.chi / p.rho0, Support::Matrix);
    double a_m = r.u_m.coeffs.dot(model->A_m() * r.u_m.coeffs);
    double darcy_e1 =
        0.5 * p.rho0 / p.chi * (um1 - umb + dum) + tau * a_m - tau * gamma_term;
    CHECK(std::abs(darcy_e1) <= 1e-9);

    // interface terms of the Stokes and Darcy rows cancel (transpose pair)
    double t1 = r.u_c.coeffs.dot(model->Gamma * r.p_m.coeffs);
    double t2 = -(model->Gamma.transpose() * r.u_c.coeffs).dot(r.p_m.coeffs);
    CHECK(std::abs(t1 + t2) <= 1e-10 * std::max(1.0, std::abs(t1)));
}

TEST_CASE("pure phase with zero velocity is a fixed point of pd_step") {
    auto model = stacked_model(2, unit_params(), 0.5);
    SimState s = model->zero_state();
    s.phi = interpolate(model->Y, [](Vec2) { return 1.0; });
    EnergyReport e0 = discrete_energy(*model, s);
    StepResult r = pd_step(*model, s);
    CHECK((r.state.phi.coeffs.array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(r.state.u_c.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.state.u_m.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(r.report.total - e0.total) <= 1e-12);
}

TEST_CASE("PD modified energy law holds across time-step sizes") {
    for (double tau : {1e-3, 1e-1, 1.0, 10.0}) {
        auto model = stacked_model(8, spinodal_params(), tau);
        SimState s = spinodal_initial(*model);
        for (int k = 0; k < 3; ++k) {
            StepResult r = pd_step(*model, s);
            INFO("tau = " << tau << ", step " << k);
            CHECK(r.report.slack <= 1e-8);
            s = std::move(r.state);
        }
    }
}

TEST_CASE("PD spinodal run: energy nonincreasing, mass conserved") {
    auto model = stacked_model(8, spinodal_params(), 0.1);
    SimState s = spinodal_initial(*model);
    double e_prev = discrete_energy(*model, s).total;
    double e0 = e_prev;
    double m0 = mass_total(*model, s.phi);
    for (int k = 0; k < 10; ++k) {
        StepResult r = pd_step(*model, s);
        CHECK(r.report.total <= e_prev + 1e-8 * (1.0 + e0));
        CHECK(std::abs(r.report.mass - m0) <= 1e-10 * model->domain_area);
        e_prev = r.report.total;
        s = std::move(r.state);
    }
}

TEST_CASE("pressure variant: trivial zero data") {
    KarsticMesh mesh = build_karstic_mesh({0, 0, 1, 1}, {1, 0, 2, 1}, 2);
    auto model = std::make_unique<Model>(std::move(mesh), unit_params(), 0.1);
    SimState s = model->zero_state();
    FEField u_c_zero(model->Xc);
    auto [pm, um] = pd_darcy_pressure_variant(*model, s, nullptr, s.phi, u_c_zero);
    CHECK(pm.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(um.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("pressure variant agrees with the primitive Darcy block") {
    // configuration where the two discretizations coincide: outflow-pressure
    // geometry, zero previous velocity and chemical potential, constant
    // interface influx; the discrete pressure is exactly linear
    std::vector<BoundaryGroupSpec> groups = {{"GammaOut", "GammaM", {2, 0}, {2, 1}}};
    KarsticMesh mesh = build_karstic_mesh({0, 0, 1, 1}, {1, 0, 2, 1}, 2, groups);
    PhysicalParams p;
    p.rho0 = 0.7;
    p.chi = 1.3;
    p.nu_value = 0.4;
    p.set_scalar_permeability(0.5);
    ModelOptions opts;
    opts.matrix_pressure_bcs.push_back({"GammaOut", DirichletBC::Mode::FullValue, {}});
    double tau = 0.2;
    auto model = std::make_unique<Model>(std::move(mesh), p, tau, opts);
    SimState s = model->zero_state();
    FEField phi0 = interpolate(model->Y, [](Vec2) { return 0.5; });
    FEField u_c = interpolate(model->Xc, [](Vec2) { return Vec2{1.0, 0.0}; });

    auto [pm, um] = pd_darcy_pressure_variant(*model, s, nullptr, phi0, u_c);

    // primitive block with the same data
    model->ensure_fluid_operators(phi0);
    BlockSystem bs;
    bs.add_field(model->Xm.dof_count);
    bs.add_field(model->Mm.dof_count);
    bs.add_block(0, 0, model->Mv_m, p.rho0 / (p.chi * tau));
    bs.add_block(0, 0, model->A_m());
    bs.add_block(0, 1, model->B_m, 1.0, true);
    bs.add_block(1, 0, model->B_m);
    bs.constrain_field(0, model->Xm.constrained_dofs,
                       Eigen::Map<const Eigen::VectorXd>(model->Xm.constrained_values.data(),
                                                         model->Xm.constrained_values.size()));
    bs.constrain_field(1, model->Mm.constrained_dofs,
                       Eigen::Map<const Eigen::VectorXd>(model->Mm.constrained_values.data(),
                                                         model->Mm.constrained_values.size()));
    LinearSystem sys = bs.build();
    sys.b.segment(model->Xm.dof_count, model->Mm.dof_count) =
        -(model->Gamma.transpose() * u_c.coeffs);
    Eigen::VectorXd x = solve_linear(sys, 1e-12);
    FEField um_prim(model->Xm, x.segment(0, model->Xm.dof_count));
    FEField pm_prim(model->Mm, x.segment(model->Xm.dof_count, model->Mm.dof_count));

    CHECK(error_norm(pm, pm_prim) <= 1e-8);
    CHECK(error_norm(um, um_prim) <= 1e-8);

    // closed form: P = (2-x)/kappa1, u = (1,0)
    double kappa1 = tau * 0.5 * p.chi / (p.rho0 * 0.5 + tau * p.nu_value * p.chi);
    double e_p = error_norm(pm, [&](Vec2 q) { return (2.0 - q.x) / kappa1; });
    CHECK(e_p <= 1e-10 * (1.0 / kappa1));
    double e_u = error_norm(um, [](Vec2) { return Vec2{1.0, 0.0}; });
    CHECK(e_u <= 1e-10);
}

TEST_CASE("pressure variant recovery formula degenerates correctly at nu = 0") {
    KarsticMesh mesh = build_karstic_mesh({0, 0, 1, 1}, {1, 0, 2, 1}, 2);
    PhysicalParams p;
    p.rho0 = 2.0;
    p.chi = 1.0;
    p.nu_value = 0.0;
    p.nu_min = 0.0;
    double tau = 0.3;
    auto model = std::make_unique<Model>(std::move(mesh), p, tau, ModelOptions{});
    SimState s = model->zero_state();
    s.u_m = interpolate(model->Xm, [](Vec2 q) { return Vec2{q.y * (1 - q.y), 0.0}; });
    s.phi = interpolate(model->Y, [](Vec2 q) { return 0.2 * q.x; });
    FEField mu = interpolate(model->Y, [](Vec2 q) { return q.x + 0.5 * q.y; });
    FEField u_c = interpolate(model->Xc, [](Vec2 q) { return Vec2{q.y * (1.0 - q.y), 0.0}; });

    auto [pm, um] = pd_darcy_pressure_variant(*model, s, &mu, s.phi, u_c);

    // with nu = 0: u_m = ubar_m - (tau chi / rho0) grad P, projected onto X_m;
    // independent projection through the dense oracle mass matrix
    double scale = tau * p.chi / p.rho0;
    Eigen::VectorXd load = Eigen::VectorXd::Zero(model->Xm.dof_count);
    for (int t = 0; t < model->mesh.triangle_count(); ++t) {
        if (!model->Xm.on_support(t)) continue;
        oracle::ElemBasisOracle eb = oracle::elem_basis_oracle(model->Xm, t);
        oracle::ElemBasisOracle ebs = oracle::elem_basis_oracle(model->Y, t);
        oracle::ElemBasisOracle ebq = oracle::elem_basis_oracle(model->Mm, t);
        int ent[6];
        model->Xm.element_entities(t, ent);
        for (const auto& q : oracle::phys_quad(model->mesh, t, kTriQuadDegree)) {
            Vec2 uk = oracle::eval_vector(s.u_m, t, eb, q.p);
            double ph = oracle::eval_scalar(s.phi, t, ebs, q.p);
            Vec2 gmu = oracle::grad_scalar(mu, t, ebs, q.p);
            Vec2 gp = oracle::grad_scalar(pm, t, ebq, q.p);
            Vec2 target = uk - scale * (ph * gmu + gp);
            for (int i = 0; i < eb.n; ++i) {
                double ni = eb.value(i, q.p);
                load[2 * ent[i] + 0] += q.w * target.x * ni;
                load[2 * ent[i] + 1] += q.w * target.y * ni;
            }
        }
    }
    Eigen::MatrixXd Mv = oracle::mass(model->Xm);
    auto constrain = [&](Eigen::MatrixXd& A, Eigen::VectorXd& rhs) {
        for (size_t k = 0; k < model->Xm.constrained_dofs.size(); ++k) {
            int d = model->Xm.constrained_dofs[k];
            A.row(d).setZero();
            A(d, d) = 1.0;
            rhs[d] = 0.0;
        }
    };
    constrain(Mv, load);
    Eigen::VectorXd expected = Mv.fullPivLu().solve(load);
    CHECK((um.coeffs - expected).cwiseAbs().maxCoeff() <= 1e-9);
}
