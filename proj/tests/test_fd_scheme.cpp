#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chsd/chsd.hpp"

using namespace chsd;

namespace {

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

SimState spinodal_initial(Model& model, unsigned seed = 42) {
    SimState s = model.zero_state();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    for (int i = 0; i < model.Y.dof_count; ++i) s.phi.coeffs[i] = -0.05 + dist(rng);
    s.u_c = interpolate(model.Xc, vortex);
    s.u_m = interpolate(model.Xm, vortex);
    return s;
}

// primitive (unstabilized) Darcy block with the lagged interface flux
std::pair<FEField, FEField> lagged_primitive_darcy(Model& model, const SimState& s,
                                                   const FEField& mu_new, const FEField& phi_k) {
    const PhysicalParams& p = model.params;
    model.ensure_fluid_operators(phi_k);
    BlockSystem bs;
    bs.add_field(model.Xm.dof_count);
    bs.add_field(model.Mm.dof_count);
    bs.add_block(0, 0, model.Mv_m, p.rho0 / (p.chi * model.tau));
    bs.add_block(0, 0, model.A_m());
    bs.add_block(0, 1, model.B_m, 1.0, true);
    bs.add_block(1, 0, model.B_m);
    bs.constrain_field(0, model.Xm.constrained_dofs,
                       Eigen::Map<const Eigen::VectorXd>(model.Xm.constrained_values.data(),
                                                         model.Xm.constrained_values.size()));
    bs.set_mean_zero(1, model.wMm);
    LinearSystem sys = bs.build();
    Eigen::VectorXd cap = assemble_capillary_load(model.Xm, phi_k, mu_new);
    sys.b.segment(0, model.Xm.dof_count) =
        p.rho0 / (p.chi * model.tau) * (model.Mv_m * s.u_m.coeffs) - cap;
    sys.b.segment(model.Xm.dof_count, model.Mm.dof_count) =
        -(model.Gamma.transpose() * s.u_c.coeffs);
    Eigen::VectorXd x = solve_linear(sys, 1e-12);
    return {FEField(model.Xm, x.segment(0, model.Xm.dof_count)),
            FEField(model.Mm, x.segment(model.Xm.dof_count, model.Mm.dof_count))};
}

} // namespace

TEST_CASE("rest input gives rest output for both FD stages") {
    auto model = stacked_model(2, spinodal_params(), 0.1);
    SimState s = model->zero_state();
    s.phi = interpolate(model->Y, [](Vec2) { return -1.0; });
    FEField mu0(model->Y);
    auto [um, pm] = fd_darcy_step(*model, s, mu0, s.phi);
    CHECK(um.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(pm.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    auto [uc, pc] = fd_stokes_step(*model, s, mu0, s.phi, pm);
    CHECK(uc.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(pc.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("beta <= 0 is rejected") {
    PhysicalParams p = spinodal_params();
    p.beta = 0.0;
    auto model = stacked_model(2, p, 0.1);
    SimState s = model->zero_state();
    FEField mu0(model->Y);
    CHECK_THROWS_AS(fd_darcy_step(*model, s, mu0, s.phi), std::invalid_argument);
}

TEST_CASE("stabilized Darcy converges to the lagged-flux primitive solve at slope 1 in beta") {
    auto model = stacked_model(4, spinodal_params(), 0.1);
    SimState s = spinodal_initial(*model);
    CHStepResult ch = ch_step(*model, s);
    auto [um_ref, pm_ref] = lagged_primitive_darcy(*model, s, ch.mu, s.phi);

    std::vector<double> betas = {1e-1, 1e-2, 1e-3};
    std::vector<double> errs;
    for (double beta : betas) {
        model->params.beta = beta;
        model->fd_darcy_fact_.reset();
        auto [um, pm] = fd_darcy_step(*model, s, ch.mu, s.phi);
        double e = std::sqrt(std::pow(error_norm(um, um_ref), 2) +
                             std::pow(error_norm(pm, pm_ref), 2));
        errs.push_back(e);
    }
    // least-squares slope of log(err) vs log(beta)
    std::vector<double> lx, ly;
    for (size_t i = 0; i < betas.size(); ++i) {
        lx.push_back(std::log(betas[i]));
        ly.push_back(std::log(errs[i]));
    }
    double slope = least_squares_slope(lx, ly);
    CHECK(slope == Catch::Approx(1.0).margin(0.15));
}

TEST_CASE("FD Stokes stage reproduces the PD Stokes rows given PD's Darcy pressure") {
    auto model = stacked_model(4, spinodal_params(), 0.1);
    SimState s = spinodal_initial(*model);
    CHStepResult ch = ch_step(*model, s);
    FluidResult pd = pd_fluid_step(*model, s, ch.mu, s.phi);
    auto [uc, pc] = fd_stokes_step(*model, s, ch.mu, s.phi, pd.p_m);
    CHECK(error_norm(uc, pd.u_c) <= 1e-9);
    CHECK(error_norm(pc, pd.p_c) <= 1e-9);
}

TEST_CASE("constant Darcy pressure loads the Stokes rows with p * int v.n") {
    auto model = stacked_model(2, spinodal_params(), 0.1);
    double pbar = 2.5;
    FEField pm_const = interpolate(model->Mm, [&](Vec2) { return pbar; });
    Eigen::VectorXd load = model->Gamma * pm_const.coeffs;
    // edge-quadrature oracle: p * int_Gamma v.n for each velocity dof
    EdgeRule rule = edge_rule(kEdgeQuadDegree);
    Eigen::VectorXd expected = Eigen::VectorXd::Zero(model->Xc.dof_count);
    for (const auto& ie : model->mesh.interface_edges) {
        int ents[3] = {model->Xc.node_entity(ie.edge.a), model->Xc.node_entity(ie.edge.b),
                       model->Xc.edge_entity(model->mesh.edge_id(ie.edge.a, ie.edge.b))};
        for (const auto& q : rule.points) {
            std::array<double, 3> tr;
            p2_edge_trace(q.s, tr);
            for (int i = 0; i < 3; ++i) {
                expected[2 * ents[i] + 0] += q.w * ie.length * pbar * tr[i] * ie.n_cm.x;
                expected[2 * ents[i] + 1] += q.w * ie.length * pbar * tr[i] * ie.n_cm.y;
            }
        }
    }
    CHECK((load - expected).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("pure phase with zero velocity is a fixed point of fd_step") {
    auto model = stacked_model(2, spinodal_params(), 0.5);
    SimState s = model->zero_state();
    s.phi = interpolate(model->Y, [](Vec2) { return 1.0; });
    EnergyReport e0 = discrete_energy(*model, s);
    StepResult r = fd_step(*model, s);
    CHECK((r.state.phi.coeffs.array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK(r.state.u_c.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(r.state.u_m.coeffs.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(std::abs(r.report.total - e0.total) <= 1e-12);
}

TEST_CASE("FD modified energy law holds, including large time steps") {
    for (double tau : {0.1, 1.0, 10.0}) {
        auto model = stacked_model(8, spinodal_params(), tau);
        SimState s = spinodal_initial(*model);
        for (int k = 0; k < 3; ++k) {
            StepResult r = fd_step(*model, s);
            INFO("tau = " << tau << ", step " << k);
            CHECK(r.report.slack <= 1e-8);
            CHECK(r.report.diss_stab >= 0.0);
            s = std::move(r.state);
        }
    }
}

TEST_CASE("interface audit: E_Gamma and its empirical bound constant are reported") {
    auto model = stacked_model(6, spinodal_params(), 0.1);
    SimState s = spinodal_initial(*model);
    StepResult r = fd_step(*model, s);
    double gp = std::sqrt(r.state.p_m.coeffs.dot(model->S_m * r.state.p_m.coeffs));
    Eigen::VectorXd duc = r.state.u_c.coeffs - s.u_c.coeffs;
    double du = std::sqrt(duc.dot(model->Mv_c * duc));
    CHECK(std::isfinite(r.report.e_gamma));
    CHECK(r.report.e_gamma_C >= 0.0);
    CHECK(std::abs(r.report.e_gamma) <= r.report.e_gamma_C * gp * du + 1e-14);
}

TEST_CASE("stabilization ledger term decays at second order in tau") {
    // fixed Darcy data (one chemical potential, one lagged flux) so the
    // tau-dependence probed is the (beta tau^2 / 2) ||grad P||^2 structure
    auto model = stacked_model(6, spinodal_params(), 0.1);
    SimState s = model->zero_state();
    s.phi = interpolate(model->Y, [](Vec2 q) { return 0.2 * std::cos(M_PI * q.x) - 0.05; });
    s.u_c = interpolate(model->Xc, vortex);
    s.u_m = interpolate(model->Xm, vortex);
    CHStepResult ch = ch_step(*model, s);

    std::vector<double> taus = {0.1, 0.05, 0.025};
    std::vector<double> stab, gradp;
    for (double tau : taus) {
        model->set_tau(tau);
        auto [um, pm] = fd_darcy_step(*model, s, ch.mu, s.phi);
        (void)um;
        double g2 = pm.coeffs.dot(model->S_m * pm.coeffs);
        stab.push_back(0.5 * model->params.beta * tau * tau * g2);
        gradp.push_back(std::sqrt(g2));
    }
    // ||grad P_m|| stays bounded under tau refinement
    for (double g : gradp) CHECK(g <= 2.0 * gradp.front() + 1e-12);
    std::vector<double> lx, ly;
    for (size_t i = 0; i < taus.size(); ++i) {
        lx.push_back(std::log(taus[i]));
        ly.push_back(std::log(stab[i]));
    }
    CHECK(least_squares_slope(lx, ly) == Catch::Approx(2.0).margin(0.35));
}

TEST_CASE("the Darcy stage depends only on lagged data") {
    auto model = stacked_model(4, spinodal_params(), 0.1);
    SimState s = spinodal_initial(*model);
    CHStepResult ch = ch_step(*model, s);
    auto [um1, pm1] = fd_darcy_step(*model, s, ch.mu, s.phi);
    auto [uc, pc] = fd_stokes_step(*model, s, ch.mu, s.phi, pm1);
    (void)uc;
    (void)pc;
    // re-running the Darcy stage after the Stokes stage changes nothing
    auto [um2, pm2] = fd_darcy_step(*model, s, ch.mu, s.phi);
    CHECK((um1.coeffs - um2.coeffs).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pm1.coeffs - pm2.coeffs).cwiseAbs().maxCoeff() == 0.0);
}
