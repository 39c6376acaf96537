#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "chsd/chsd.hpp"

namespace {

chsd::RunConfig load_config_arg(const std::string& arg) {
    // a preset name or a path to a config file
    for (const auto& [name, desc] : chsd::preset_descriptions())
        if (arg == name) return chsd::preset_by_name(name);
    std::ifstream is(arg);
    if (!is) throw std::runtime_error("cannot open config file '" + arg + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return chsd::parse_config(ss.str());
}

struct Overrides {
    std::string scheme;
    double tau = 0.0;
    double tfinal = 0.0;
    int n = 0;
    std::string out_dir;
    long long seed = -1;

    void apply(chsd::RunConfig& cfg) const {
        if (!scheme.empty()) cfg.scheme = scheme == "pd" ? chsd::Scheme::PD : chsd::Scheme::FD;
        if (tau > 0.0) cfg.tau = tau;
        if (tfinal > 0.0) cfg.t_final = tfinal;
        if (n > 0) cfg.n = n;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed >= 0) cfg.seed = static_cast<unsigned long long>(seed);
    }
};

void add_overrides(CLI::App* cmd, Overrides& ov, std::string& config_arg) {
    cmd->add_option("CONFIG", config_arg, "config file path or preset name");
    cmd->add_option("--config", config_arg, "config file path or preset name")
        ->excludes("CONFIG");
    cmd->add_option("--scheme", ov.scheme, "pd or fd")->check(CLI::IsMember({"pd", "fd"}));
    cmd->add_option("--tau", ov.tau, "time step");
    cmd->add_option("--tfinal", ov.tfinal, "final time");
    cmd->add_option("--n", ov.n, "cells per unit length");
    cmd->add_option("--out-dir", ov.out_dir, "output directory");
    cmd->add_option("--seed", ov.seed, "random seed (spinodal)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"chsd: two-phase flow in karstic geometry (Cahn-Hilliard-Stokes-Darcy)"};
    app.require_subcommand(1);

    std::string run_cfg, conv_cfg, beta_cfg;
    Overrides run_ov, conv_ov, beta_ov;

    auto* run = app.add_subcommand("run", "time-step one case and write VTK/CSV outputs");
    add_overrides(run, run_ov, run_cfg);

    auto* conv = app.add_subcommand("converge", "temporal convergence sweep against tau_ref");
    add_overrides(conv, conv_ov, conv_cfg);

    auto* presets = app.add_subcommand("presets", "list built-in configurations");

    auto* calib = app.add_subcommand("calibrate-beta",
                                     "find the smallest stable FD stabilization constant");
    add_overrides(calib, beta_ov, beta_cfg);
    int probe_steps = 20;
    calib->add_option("--steps", probe_steps, "probe steps per beta");

    CLI11_PARSE(app, argc, argv);

    try {
        if (presets->parsed()) {
            for (const auto& [name, desc] : chsd::preset_descriptions())
                std::printf("%-12s %s\n", name.c_str(), desc.c_str());
            return 0;
        }
        if (run->parsed()) {
            if (run_cfg.empty()) throw std::runtime_error("run: missing config");
            chsd::RunConfig cfg = load_config_arg(run_cfg);
            run_ov.apply(cfg);
            chsd::validate_config(cfg);
            auto model = chsd::build_model_from_config(cfg);
            chsd::RunOutput out = chsd::run_case(*model, cfg);
            std::printf("%s: %d steps, mass drift %.3e, max ledger slack %.3e, phi in [%.3f, %.3f]\n",
                        cfg.name.c_str(), out.steps, out.max_mass_drift, out.max_slack,
                        out.phi_min, out.phi_max);
            std::printf("energy log: %s\n", out.energy_csv.c_str());
            return 0;
        }
        if (conv->parsed()) {
            if (conv_cfg.empty()) throw std::runtime_error("converge: missing config");
            chsd::RunConfig cfg = load_config_arg(conv_cfg);
            conv_ov.apply(cfg);
            chsd::validate_config(cfg);
            auto model = chsd::build_model_from_config(cfg);
            chsd::ConvergenceResult res = chsd::run_convergence(*model, cfg);
            std::printf("%10s %12s %12s %12s %12s\n", "tau", "e_uc", "e_um", "e_pm", "e_phi");
            for (const auto& row : res.rows)
                std::printf("%10.5g %12.5e %12.5e %12.5e %12.5e\n", row.tau, row.e_uc, row.e_um,
                            row.e_pm, row.e_phi);
            std::printf("slopes:   u_c %.3f  u_m %.3f  p_m %.3f  phi %.3f\n", res.slope_uc,
                        res.slope_um, res.slope_pm, res.slope_phi);
            std::printf("e/tau at finest tau: u_c %.3e  u_m %.3e  p_m %.3e  phi %.3e\n",
                        res.const_uc, res.const_um, res.const_pm, res.const_phi);
            return 0;
        }
        if (calib->parsed()) {
            if (beta_cfg.empty()) throw std::runtime_error("calibrate-beta: missing config");
            chsd::RunConfig cfg = load_config_arg(beta_cfg);
            beta_ov.apply(cfg);
            chsd::validate_config(cfg);
            double beta = chsd::calibrate_beta(cfg, probe_steps);
            if (beta < 0.0)
                std::printf("no stable beta found at or below %.6g\n", cfg.beta);
            else
                std::printf("smallest stable beta: %.6g\n", beta);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
