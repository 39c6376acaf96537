#pragma once

#include <filesystem>
#include <memory>
#include <random>

#include "chsd/config.hpp"
#include "chsd/fd_scheme.hpp"
#include "chsd/vtk.hpp"

namespace chsd {

inline KarsticMesh build_mesh_from_config(const RunConfig& cfg) {
    std::vector<BoundaryGroupSpec> groups;
    if (cfg.inflow) groups.push_back({"GammaIn", "GammaC", cfg.inflow_p0, cfg.inflow_p1});
    if (cfg.outflow) groups.push_back({"GammaOut", "GammaM", cfg.outflow_p0, cfg.outflow_p1});
    return build_karstic_mesh(cfg.conduit, cfg.matrix, cfg.n, groups);
}

inline std::unique_ptr<Model> build_model_from_config(const RunConfig& cfg) {
    validate_config(cfg);
    KarsticMesh mesh = build_mesh_from_config(cfg);
    ModelOptions opts;
    opts.newton_tol = cfg.newton_tol;
    opts.linear_tol = cfg.linear_tol;
    if (cfg.inflow) {
        std::map<std::string, double> consts = {{"a", cfg.inflow_amplitude},
                                                {"eps", cfg.epsilon}};
        auto ux = std::make_shared<Expr>(cfg.inflow_ux, consts);
        auto uy = std::make_shared<Expr>(cfg.inflow_uy, consts);
        opts.conduit_velocity_bcs.push_back(
            {"GammaIn", DirichletBC::Mode::FullValue,
             [ux, uy](Vec2 p, int c) { return c == 0 ? (*ux)(p) : (*uy)(p); }});
    }
    if (cfg.outflow) {
        double p_out = cfg.outflow_pressure;
        opts.matrix_pressure_bcs.push_back(
            {"GammaOut", DirichletBC::Mode::FullValue, [p_out](Vec2, int) { return p_out; }});
    }
    return std::make_unique<Model>(std::move(mesh), cfg.physical_params(), cfg.tau,
                                   std::move(opts));
}

/// Initial order parameter: seeded random field for the spinodal preset,
/// named tanh profiles for droplet/bubble, otherwise an expression in x, y.
inline FEField initial_phi(const Model& model, const RunConfig& cfg) {
    if (cfg.phi0 == "preset:spinodal") {
        FEField phi(model.Y);
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> dist(-cfg.phi_amp, cfg.phi_amp);
        for (int i = 0; i < model.Y.dof_count; ++i) phi.coeffs[i] = cfg.phi_mean + dist(rng);
        return phi;
    }
    std::string expr = cfg.phi0;
    if (cfg.phi0 == "preset:droplet")
        expr = "-tanh((0.15 - sqrt((x-0.4)^2 + (y-0.5)^2)) / sqrt(2.0*eps))";
    else if (cfg.phi0 == "preset:bubble")
        expr = "tanh((0.15 - sqrt((x-0.5)^2 + (y+0.5)^2)) / sqrt(2.0*eps))";
    Expr f(expr, {{"eps", cfg.epsilon}});
    return interpolate(model.Y, [&f](Vec2 p) { return f(p); });
}

/// Steady Stokes solve on the conduit with the injection boundary data and a
/// zero interface pressure, used for the droplet's initial conduit velocity.
inline std::pair<FEField, FEField> steady_stokes_initial(Model& model, const FEField& phi0) {
    model.ensure_fluid_operators(phi0);
    BlockSystem bs;
    bs.add_field(model.Xc.dof_count);
    bs.add_field(model.Mc.dof_count);
    bs.add_block(0, 0, model.A_c());
    bs.add_block(0, 1, model.B_c, 1.0, /*transpose=*/true);
    bs.add_block(1, 0, model.B_c);
    bs.constrain_field(0, model.Xc.constrained_dofs,
                       Eigen::Map<const Eigen::VectorXd>(model.Xc.constrained_values.data(),
                                                         model.Xc.constrained_values.size()));
    LinearSystem sys = bs.build();
    Eigen::VectorXd x = solve_linear(sys, model.options.linear_tol);
    FEField u(model.Xc, x.segment(0, model.Xc.dof_count));
    FEField p(model.Mc, x.segment(model.Xc.dof_count, model.Mc.dof_count));
    return {std::move(u), std::move(p)};
}

/// L2-projection of the interpolated conduit velocity onto the discretely
/// divergence-free subspace (B_c u = 0), respecting its Dirichlet values.
/// The continuous initial data lives in H_{c,div}; the raw interpolant
/// violates the discrete constraint by O(h^2), which the schemes would
/// amplify into an O(defect/tau) startup pressure layer.
inline FEField project_divfree_conduit(Model& model, const FEField& u_raw) {
    BlockSystem bs;
    bs.add_field(model.Xc.dof_count);
    bs.add_field(model.Mc.dof_count);
    bs.add_block(0, 0, model.Mv_c);
    bs.add_block(0, 1, model.B_c, 1.0, /*transpose=*/true);
    bs.add_block(1, 0, model.B_c);
    std::vector<double> vals(model.Xc.constrained_dofs.size());
    for (size_t i = 0; i < vals.size(); ++i)
        vals[i] = u_raw.coeffs[model.Xc.constrained_dofs[i]];
    bs.constrain_field(0, model.Xc.constrained_dofs,
                       Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size()));
    LinearSystem sys = bs.build();
    sys.b.segment(0, model.Xc.dof_count) = model.Mv_c * u_raw.coeffs;
    Eigen::VectorXd x = solve_linear(sys, model.options.linear_tol);
    return FEField(model.Xc, x.segment(0, model.Xc.dof_count));
}

/// Matrix-side counterpart: project onto (u, grad q) = -int u_c0 . n q, so
/// the initial Darcy velocity carries the conduit's interface flux.
inline FEField project_divfree_matrix(Model& model, const FEField& u_raw, const FEField& u_c0) {
    BlockSystem bs;
    bs.add_field(model.Xm.dof_count);
    bs.add_field(model.Mm.dof_count);
    bs.add_block(0, 0, model.Mv_m);
    bs.add_block(0, 1, model.B_m, 1.0, /*transpose=*/true);
    bs.add_block(1, 0, model.B_m);
    std::vector<double> vals(model.Xm.constrained_dofs.size());
    for (size_t i = 0; i < vals.size(); ++i)
        vals[i] = u_raw.coeffs[model.Xm.constrained_dofs[i]];
    bs.constrain_field(0, model.Xm.constrained_dofs,
                       Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size()));
    if (model.Mm.mean_zero)
        bs.set_mean_zero(1, model.wMm);
    else
        bs.constrain_field(1, model.Mm.constrained_dofs,
                           Eigen::Map<const Eigen::VectorXd>(model.Mm.constrained_values.data(),
                                                             model.Mm.constrained_values.size()));
    LinearSystem sys = bs.build();
    sys.b.segment(0, model.Xm.dof_count) = model.Mv_m * u_raw.coeffs;
    sys.b.segment(model.Xm.dof_count, model.Mm.dof_count) =
        -(model.Gamma.transpose() * u_c0.coeffs);
    Eigen::VectorXd x = solve_linear(sys, model.options.linear_tol);
    return FEField(model.Xm, x.segment(0, model.Xm.dof_count));
}

inline SimState make_initial_state(Model& model, const RunConfig& cfg) {
    SimState s = model.zero_state();
    s.phi = initial_phi(model, cfg);
    if (cfg.velocity_init == "droplet") {
        auto [uc, pc] = steady_stokes_initial(model, s.phi);
        s.u_c = std::move(uc);
        s.p_c = std::move(pc);
        // initial Darcy data from the interface flux of the steady field
        auto [pm, um] = pd_darcy_pressure_variant(model, s, nullptr, s.phi, s.u_c);
        s.p_m = std::move(pm);
        s.u_m = std::move(um);
    } else {
        std::map<std::string, double> consts = {{"eps", cfg.epsilon}};
        Expr fx(cfg.u0x, consts), fy(cfg.u0y, consts);
        auto u0 = [&](Vec2 p) { return Vec2{fx(p), fy(p)}; };
        s.u_c = interpolate(model.Xc, u0);
        s.u_m = interpolate(model.Xm, u0);
        if (cfg.velocity_init == "project") {
            s.u_c = project_divfree_conduit(model, s.u_c);
            s.u_m = project_divfree_matrix(model, s.u_m, s.u_c);
        }
    }
    return s;
}

inline StepResult advance(Model& model, const SimState& state, Scheme scheme) {
    return scheme == Scheme::PD ? pd_step(model, state) : fd_step(model, state);
}

struct RunOutput {
    SimState final_state;
    int steps = 0;
    double initial_mass = 0.0;
    double max_mass_drift = 0.0;
    double max_slack = -std::numeric_limits<double>::infinity();
    double phi_min = 0.0, phi_max = 0.0;
    std::vector<std::string> snapshots;
    std::string energy_csv;
};

/// Time loop with snapshot/CSV output. Callback (when given) sees every
/// step result; solver failures are rethrown with the failing step index.
inline RunOutput run_case(Model& model, const RunConfig& cfg,
                          const std::function<void(const StepResult&)>& on_step = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    auto snap_path = [&](int step) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "_step%06d.vtk", step);
        return (fs::path(cfg.out_dir) / (cfg.name + buf)).string();
    };

    auto write_checkpoint = [&](const SimState& st) {
        if (!cfg.checkpoints) return;
        char buf[64];
        std::snprintf(buf, sizeof(buf), "_step%06d", st.step);
        std::string base = (fs::path(cfg.out_dir) / (cfg.name + buf)).string();
        save_field(st.phi, base + "_phi.bin");
        save_field(st.mu, base + "_mu.bin");
        save_field(st.u_c, base + "_uc.bin");
        save_field(st.p_c, base + "_pc.bin");
        save_field(st.u_m, base + "_um.bin");
        save_field(st.p_m, base + "_pm.bin");
    };

    SimState state = make_initial_state(model, cfg);
    RunOutput out;
    out.energy_csv = (fs::path(cfg.out_dir) / (cfg.name + "_energy.csv")).string();
    EnergyLog log(out.energy_csv);
    std::ofstream newton_log((fs::path(cfg.out_dir) / (cfg.name + "_newton.log")).string());
    newton_log << "# step evaluations dampings final_residual\n";
    EnergyReport r0 = discrete_energy(model, state);
    log.append(0, 0.0, r0);
    out.initial_mass = r0.mass;
    out.phi_min = state.phi.coeffs.minCoeff();
    out.phi_max = state.phi.coeffs.maxCoeff();
    if (cfg.cadence > 0) {
        write_vtk(snap_path(0), model.mesh, &state);
        out.snapshots.push_back(snap_path(0));
        write_checkpoint(state);
    }

    const int steps = static_cast<int>(std::llround(cfg.t_final / cfg.tau));
    for (int k = 0; k < steps; ++k) {
        StepResult res;
        try {
            res = advance(model, state, cfg.scheme);
        } catch (const std::exception& e) {
            throw std::runtime_error("run_case: step " + std::to_string(k + 1) +
                                     " failed: " + e.what());
        }
        state = std::move(res.state);
        log.append(state.step, state.time, res.report);
        {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%d %d %d %.6e\n", state.step,
                          res.newton.evaluations, res.newton.dampings,
                          res.newton.final_residual);
            newton_log << buf;
        }
        out.max_mass_drift = std::max(out.max_mass_drift,
                                      std::abs(res.report.mass - out.initial_mass));
        out.max_slack = std::max(out.max_slack, res.report.slack);
        out.phi_min = std::min(out.phi_min, state.phi.coeffs.minCoeff());
        out.phi_max = std::max(out.phi_max, state.phi.coeffs.maxCoeff());
        if (cfg.cadence > 0 && state.step % cfg.cadence == 0) {
            write_vtk(snap_path(state.step), model.mesh, &state);
            out.snapshots.push_back(snap_path(state.step));
            write_checkpoint(state);
        }
        if (on_step) on_step(res);
    }
    if (cfg.cadence > 0 && steps % cfg.cadence != 0) {
        write_vtk(snap_path(state.step), model.mesh, &state);
        out.snapshots.push_back(snap_path(state.step));
        write_checkpoint(state);
    }
    out.steps = steps;
    out.final_state = std::move(state);
    return out;
}

// ---------------------------------------------------------------------------
// Temporal convergence driver
// ---------------------------------------------------------------------------

struct ConvergenceRow {
    double tau;
    double e_uc, e_um, e_pm, e_phi;
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;
    double slope_uc, slope_um, slope_pm, slope_phi;
    // error constant e/tau at the finest tau, per variable (reported only)
    double const_uc, const_um, const_pm, const_phi;
};

inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = static_cast<int>(x.size());
    for (int i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Errors at T against a tau_ref run on the same mesh, plus least-squares
/// slopes per variable. The model is reused across the sweep so all runs
/// share spaces (the reference requires tau_ref <= min(tau)/8).
inline ConvergenceResult run_convergence(Model& model, const RunConfig& cfg) {
    double tau_min = *std::min_element(cfg.conv_taus.begin(), cfg.conv_taus.end());
    if (cfg.conv_tau_ref > tau_min / 8.0)
        throw std::invalid_argument("run_convergence: tau_ref must be <= min(tau)/8");

    auto run_to_T = [&](double tau) {
        model.set_tau(tau);
        SimState s = make_initial_state(model, cfg);
        int steps = static_cast<int>(std::llround(cfg.t_final / tau));
        for (int k = 0; k < steps; ++k) s = advance(model, s, cfg.scheme).state;
        return s;
    };

    SimState ref = run_to_T(cfg.conv_tau_ref);
    ConvergenceResult out;
    std::vector<double> lt, luc, lum, lpm, lphi;
    for (double tau : cfg.conv_taus) {
        SimState s = run_to_T(tau);
        ConvergenceRow row;
        row.tau = tau;
        row.e_uc = error_norm(s.u_c, ref.u_c);
        row.e_um = error_norm(s.u_m, ref.u_m);
        row.e_pm = error_norm(s.p_m, ref.p_m);
        row.e_phi = error_norm(s.phi, ref.phi);
        out.rows.push_back(row);
        lt.push_back(std::log(tau));
        luc.push_back(std::log(row.e_uc));
        lum.push_back(std::log(row.e_um));
        lpm.push_back(std::log(row.e_pm));
        lphi.push_back(std::log(row.e_phi));
    }
    out.slope_uc = least_squares_slope(lt, luc);
    out.slope_um = least_squares_slope(lt, lum);
    out.slope_pm = least_squares_slope(lt, lpm);
    out.slope_phi = least_squares_slope(lt, lphi);
    const ConvergenceRow& finest = out.rows.back();
    out.const_uc = finest.e_uc / finest.tau;
    out.const_um = finest.e_um / finest.tau;
    out.const_pm = finest.e_pm / finest.tau;
    out.const_phi = finest.e_phi / finest.tau;
    return out;
}

// ---------------------------------------------------------------------------
// Beta calibration
// ---------------------------------------------------------------------------

/// Sweep beta downward (halving) and report the smallest value for which the
/// FD ledger slack stays <= 0 (rounding guard 1e-12) over a probe run.
inline double calibrate_beta(const RunConfig& cfg_in, int probe_steps = 20, int max_halvings = 12) {
    RunConfig cfg = cfg_in;
    cfg.scheme = Scheme::FD;
    double best = -1.0;
    double beta = cfg.beta;
    for (int j = 0; j <= max_halvings; ++j) {
        cfg.beta = beta;
        auto model = build_model_from_config(cfg);
        SimState s = make_initial_state(*model, cfg);
        double max_slack = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < probe_steps; ++k) {
            StepResult res = fd_step(*model, s);
            max_slack = std::max(max_slack, res.report.slack);
            s = std::move(res.state);
        }
        if (max_slack <= 1e-12)
            best = beta;
        else
            break;
        beta *= 0.5;
    }
    return best;
}

} // namespace chsd
