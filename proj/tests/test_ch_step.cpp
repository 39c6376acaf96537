#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "chsd/chsd.hpp"
#include "oracle.hpp"

using namespace chsd;

namespace {

std::unique_ptr<Model> small_model(int n, PhysicalParams p, double tau) {
    KarsticMesh mesh = build_karstic_mesh({0, -1, 1, 0}, {0, 0, 1, 1}, n);
    return std::make_unique<Model>(std::move(mesh), std::move(p), tau);
}

FEField random_field(const FESpace& sp, double amp, unsigned seed) {
    FEField f(sp);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-amp, amp);
    for (int i = 0; i < sp.dof_count; ++i) f.coeffs[i] = dist(rng);
    return f;
}

// Reconstruct the intermediate velocity at quadrature points and evaluate
// tau (u_bar phi^k, grad mu^{k+1}) plus the other CH-E1 terms.
double ch_e1_slack(const Model& model, const SimState& sk, const FEField& phi_new,
                   const FEField& mu_new, const CHSystem& sys) {
    const PhysicalParams& p = model.params;
    const KarsticMesh& mesh = model.mesh;
    TriangleRule rule = triangle_rule(kTriQuadDegree);
    double transport = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        bool conduit = mesh.triangles[t].domain == Subdomain::Conduit;
        const FEField& u = conduit ? sk.u_c : sk.u_m;
        double c = conduit ? 1.0 / p.rho0 : p.chi / p.rho0;
        ElementMap em = detail::make_map(mesh, t);
        Vec2 gmu = chsd::detail::p1_gradient(mu_new, t, em);
        for (const auto& q : rule.points) {
            double phi = evaluate_scalar(sk.phi, t, q.xi, q.eta);
            Vec2 uk = evaluate_vector(u, t, q.xi, q.eta);
            Vec2 ubar = uk - (model.tau * c * phi) * gmu;
            transport += q.w * em.det * phi * ubar.dot(gmu);
        }
    }
    double dE = free_energy(model, phi_new) - free_energy(model, sk.phi);
    double diss = model.tau * mu_new.coeffs.dot(sys.K_M * mu_new.coeffs);
    Eigen::VectorXd dphi = phi_new.coeffs - sk.phi.coeffs;
    double grad_dphi = dphi.dot(model.K_Y * dphi);
    return dE + diss - model.tau * transport + 0.5 * p.gamma * p.epsilon * grad_dphi;
}

} // namespace

TEST_CASE("residual vanishes at the pure-phase and zero fixed points") {
    auto model = small_model(2, PhysicalParams{}, 0.1);
    SimState s = model->zero_state();

    s.phi = interpolate(model->Y, [](Vec2) { return 1.0; });
    FEField mu0(model->Y);
    auto [r1, r2] = ch_residual(*model, s.phi, mu0, s);
    CHECK(r1.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(r2.cwiseAbs().maxCoeff() <= 1e-14);

    s.phi = FEField(model->Y); // phi = 0: f(0,0) = 0
    auto [z1, z2] = ch_residual(*model, s.phi, mu0, s);
    CHECK(z1.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(z2.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("residual matches a dense quadrature oracle on small random fields") {
    PhysicalParams p;
    p.rho0 = 0.5;
    p.chi = 2.0;
    p.gamma = 0.3;
    p.epsilon = 0.7;
    p.mobility_value = 0.4;
    auto model = small_model(1, p, 0.21);
    SimState sk = model->zero_state();
    sk.phi = random_field(model->Y, 0.3, 11);
    sk.u_c = random_field(model->Xc, 0.2, 12);
    sk.u_m = random_field(model->Xm, 0.2, 13);
    FEField phi_new = random_field(model->Y, 0.3, 14);
    FEField mu_new = random_field(model->Y, 0.3, 15);

    CHSystem sys = build_ch_system(*model, sk);
    auto [r1, r2] = ch_residual(*model, phi_new, mu_new, sk.phi, sys);

    // dense oracle: per-element physical-basis quadrature, no sparsity
    const FESpace& Y = model->Y;
    Eigen::VectorXd o1 = Eigen::VectorXd::Zero(Y.dof_count);
    Eigen::VectorXd o2 = Eigen::VectorXd::Zero(Y.dof_count);
    for (int t = 0; t < model->mesh.triangle_count(); ++t) {
        bool conduit = model->mesh.triangles[t].domain == Subdomain::Conduit;
        const FEField& u = conduit ? sk.u_c : sk.u_m;
        double c = conduit ? 1.0 / p.rho0 : p.chi / p.rho0;
        oracle::ElemBasisOracle eb = oracle::elem_basis_oracle(Y, t);
        oracle::ElemBasisOracle ebu = oracle::elem_basis_oracle(*u.space, t);
        int ent[6];
        Y.element_entities(t, ent);
        for (const auto& q : oracle::phys_quad(model->mesh, t, kTriQuadDegree)) {
            double phik = oracle::eval_scalar(sk.phi, t, eb, q.p);
            double phin = oracle::eval_scalar(phi_new, t, eb, q.p);
            double mun = oracle::eval_scalar(mu_new, t, eb, q.p);
            Vec2 gmu = oracle::grad_scalar(mu_new, t, eb, q.p);
            Vec2 gphin = oracle::grad_scalar(phi_new, t, eb, q.p);
            Vec2 uk = oracle::eval_vector(u, t, ebu, q.p);
            double mob = p.mobility(phik);
            for (int i = 0; i < 3; ++i) {
                double ni = eb.value(i, q.p);
                Vec2 gi = eb.grad(i, q.p);
                o1[ent[i]] += q.w * ((phin - phik) / model->tau * ni + mob * gmu.dot(gi) +
                                     model->tau * c * phik * phik * gmu.dot(gi) -
                                     phik * uk.dot(gi));
                o2[ent[i]] +=
                    q.w * (p.gamma / p.epsilon * (phin * phin * phin - phik) * ni +
                           p.gamma * p.epsilon * gphin.dot(gi) - mun * ni);
            }
        }
    }
    CHECK((r1 - o1).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((r2 - o2).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("pure phase is a fixed point reached with one residual evaluation") {
    auto model = small_model(2, PhysicalParams{}, 0.1);
    SimState s = model->zero_state();
    s.phi = interpolate(model->Y, [](Vec2) { return 1.0; });
    CHStepResult r = ch_step(*model, s);
    CHECK(r.stats.evaluations == 1);
    CHECK((r.phi.coeffs.array() - 1.0).abs().maxCoeff() <= 1e-14);
    CHECK(r.mu.coeffs.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("spinodal step: mass conservation, convex-splitting bound, CH-E1") {
    PhysicalParams p;
    p.rho0 = 0.01;
    p.chi = 1.0;
    p.gamma = 0.1;
    p.epsilon = 0.01;
    p.mobility_value = 0.1;
    p.nu_value = 0.1;
    auto model = small_model(8, p, 0.1);
    SimState s = model->zero_state();
    FEField noise = random_field(model->Y, 0.05, 7);
    s.phi = FEField(model->Y, noise.coeffs.array() - 0.05);
    s.u_c = interpolate(model->Xc, [](Vec2 q) {
        double sx = std::sin(M_PI * q.x), sy = std::sin(M_PI * q.y);
        return Vec2{-2 * sx * sx * std::sin(2 * M_PI * q.y),
                    2 * std::sin(2 * M_PI * q.x) * sy * sy};
    });
    s.u_m = interpolate(model->Xm, [](Vec2 q) {
        double sx = std::sin(M_PI * q.x), sy = std::sin(M_PI * q.y);
        return Vec2{-2 * sx * sx * std::sin(2 * M_PI * q.y),
                    2 * std::sin(2 * M_PI * q.x) * sy * sy};
    });

    CHStepResult r = ch_step(*model, s);

    // mass conservative at each time step
    double m0 = mass_total(*model, s.phi);
    double m1 = mass_total(*model, r.phi);
    CHECK(std::abs(m1 - m0) <= 1e-11 * model->domain_area);

    // pointwise convex-splitting inequality integrated over the domain
    double lhs = integrate_of_phi(r.phi, double_well) - integrate_of_phi(s.phi, double_well);
    double rhs = 0.0;
    {
        const KarsticMesh& mesh = model->mesh;
        TriangleRule rule = triangle_rule(kTriQuadDegree);
        for (int t = 0; t < mesh.triangle_count(); ++t) {
            ElementMap em = detail::make_map(mesh, t);
            for (const auto& q : rule.points) {
                double a = evaluate_scalar(r.phi, t, q.xi, q.eta);
                double b = evaluate_scalar(s.phi, t, q.xi, q.eta);
                rhs += q.w * em.det * (a * a * a - b) * (a - b);
            }
        }
    }
    CHECK(lhs <= rhs + 1e-10);

    // per-step CH inequality with the intermediate velocity reconstructed
    CHECK(ch_e1_slack(*model, s, r.phi, r.mu, r.sys) <= 1e-9);

    // determinism
    CHStepResult r2 = ch_step(*model, s);
    for (int i = 0; i < r.phi.coeffs.size(); ++i) {
        CHECK(r.phi.coeffs[i] == r2.phi.coeffs[i]);
        CHECK(r.mu.coeffs[i] == r2.mu.coeffs[i]);
    }
}

TEST_CASE("Newton converges with a quadratic tail") {
    PhysicalParams p; // unit parameters, the temporal-accuracy configuration
    auto model = small_model(6, p, 0.04);
    SimState s = model->zero_state();
    s.phi = interpolate(model->Y, [](Vec2 q) {
        return 0.24 * std::cos(2 * M_PI * q.x) * std::cos(2 * M_PI * q.y) +
               0.4 * std::cos(M_PI * q.x) * std::cos(3 * M_PI * q.y) + 1.0;
    });
    CHStepResult r = ch_step(*model, s);
    const auto& hist = r.stats.residual_history;
    REQUIRE(hist.size() >= 2);
    bool tail_checked = false;
    for (size_t i = 1; i < hist.size(); ++i) {
        if (hist[i - 1] < 1e-3 && hist[i - 1] > 0.0) {
            CHECK(hist[i] <= std::max(1e4 * hist[i - 1] * hist[i - 1], 1e-13));
            tail_checked = true;
        }
    }
    // if the iteration jumped straight below tolerance, that is itself the
    // quadratic tail
    if (!tail_checked) CHECK(hist.back() <= 1e-6 * hist.front());
    CHECK(r.stats.final_residual <= 1e-9 * (1.0 + hist.front()));
}
