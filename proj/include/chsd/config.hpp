#pragma once

#include <optional>
#include <sstream>

#include "chsd/expr.hpp"
#include "chsd/diagnostics.hpp"

namespace chsd {

/// Fully-resolved run description. Presets seed every field; file keys and
/// CLI flags override.
struct RunConfig {
    std::string name = "case";
    std::string preset;
    Scheme scheme = Scheme::FD;
    double tau = 0.04;
    double t_final = 1.0;
    int n = 10;
    unsigned long long seed = 42;
    std::string out_dir = "out";
    int cadence = 10; // snapshot every this many steps; 0 disables snapshots
    bool checkpoints = false; // also write full-coefficient field files per snapshot

    Rect conduit{0.0, -1.0, 1.0, 0.0};
    Rect matrix{0.0, 0.0, 1.0, 1.0};

    double rho0 = 1.0, chi = 1.0;
    double nu = 1.0;
    double gamma = 1.0, epsilon = 1.0;
    double alpha_bjsj = 1.0;
    double beta = 1.0;
    double buoyancy = 0.0;
    double pi_scalar = 1.0;
    bool pi_has_matrix = false;
    Eigen::Matrix2d pi_matrix = Eigen::Matrix2d::Identity();
    bool pi_trace_promoted = true;
    std::string mobility_model = "constant"; // or "degenerate"
    double mobility = 1.0;

    std::string phi0 = "1.0";
    std::string u0x = "0", u0y = "0";
    double phi_mean = -0.05, phi_amp = 0.05; // spinodal randomness
    // project: interpolate then L2-project onto the discrete div-free sets;
    // interpolate: raw nodal data; droplet: steady Stokes + derived Darcy
    std::string velocity_init = "project";

    bool inflow = false;
    Vec2 inflow_p0{0.0, 0.4}, inflow_p1{0.0, 0.6};
    std::string inflow_ux = "0", inflow_uy = "0";
    double inflow_amplitude = 1.0;
    bool outflow = false;
    Vec2 outflow_p0{2.0, 0.0}, outflow_p1{2.0, 1.0};
    double outflow_pressure = 0.0;

    double newton_tol = 1e-10, linear_tol = 1e-10;

    std::vector<double> conv_taus = {0.04, 0.02, 0.01};
    double conv_tau_ref = 0.00125;

    PhysicalParams physical_params() const {
        PhysicalParams p;
        p.rho0 = rho0;
        p.chi = chi;
        p.gamma = gamma;
        p.epsilon = epsilon;
        p.alpha_bjsj = alpha_bjsj;
        p.beta = beta;
        p.buoyancy_B = buoyancy;
        if (pi_has_matrix)
            p.set_matrix_permeability(pi_matrix);
        else
            p.set_scalar_permeability(pi_scalar, pi_trace_promoted);
        p.nu_value = nu;
        p.mobility_model =
            mobility_model == "degenerate" ? MobilityModel::Degenerate : MobilityModel::Constant;
        p.mobility_value = mobility;
        return p;
    }
};

// ---------------------------------------------------------------------------
// Presets for the shipped experiments
// ---------------------------------------------------------------------------

inline RunConfig preset_convergence() {
    RunConfig c;
    c.name = "convergence";
    c.preset = "convergence";
    c.scheme = Scheme::FD;
    c.tau = 0.04;
    c.t_final = 1.0;
    c.n = 10;
    c.cadence = 0;
    c.conduit = {0.0, -1.0, 1.0, 0.0};
    c.matrix = {0.0, 0.0, 1.0, 1.0};
    c.rho0 = c.chi = c.nu = c.gamma = c.epsilon = 1.0;
    c.alpha_bjsj = 1.0;
    c.pi_scalar = 1.0;
    c.beta = 1.0;
    c.mobility_model = "constant";
    c.mobility = 1.0;
    c.phi0 = "0.24*cos(2*pi*x)*cos(2*pi*y) + 0.4*cos(pi*x)*cos(3*pi*y) + 1.0";
    c.u0x = "-2*sin(pi*x)^2*sin(2*pi*y)";
    c.u0y = "2*sin(2*pi*x)*sin(pi*y)^2";
    return c;
}

inline RunConfig preset_spinodal() {
    RunConfig c = preset_convergence();
    c.name = "spinodal";
    c.preset = "spinodal";
    c.tau = 0.1;
    c.t_final = 10.0;
    c.n = 20;
    c.cadence = 10;
    c.rho0 = 0.01;
    c.chi = 1.0;
    c.nu = 0.1;
    c.gamma = 0.1;
    c.epsilon = 0.01;
    c.mobility = 0.1;
    c.phi0 = "preset:spinodal";
    return c;
}

inline RunConfig preset_droplet() {
    RunConfig c;
    c.name = "droplet";
    c.preset = "droplet";
    c.scheme = Scheme::FD;
    c.tau = 0.001;
    c.t_final = 7.0;
    c.n = 20;
    c.cadence = 100;
    c.conduit = {0.0, 0.0, 1.0, 1.0};
    c.matrix = {1.0, 0.0, 2.0, 1.0};
    c.rho0 = c.chi = 1.0;
    c.nu = 0.1;
    c.gamma = 0.001;
    c.epsilon = 0.01;
    c.alpha_bjsj = 0.1;
    c.pi_scalar = 0.001;
    c.mobility_model = "degenerate";
    c.phi0 = "preset:droplet";
    c.velocity_init = "droplet";
    c.inflow = true;
    c.inflow_p0 = {0.0, 0.4};
    c.inflow_p1 = {0.0, 0.6};
    c.inflow_ux = "-100*a*(y-0.4)*(y-0.6)";
    c.inflow_uy = "0";
    c.inflow_amplitude = 1.0;
    c.outflow = true;
    c.outflow_p0 = {2.0, 0.0};
    c.outflow_p1 = {2.0, 1.0};
    c.outflow_pressure = 0.0;
    return c;
}

inline RunConfig preset_bubble() {
    RunConfig c = preset_droplet();
    c.name = "bubble";
    c.preset = "bubble";
    c.t_final = 4.5;
    c.conduit = {0.0, -1.0, 1.0, 0.0};
    c.matrix = {0.0, 0.0, 1.0, 1.0};
    c.buoyancy = 2.0;
    c.pi_scalar = 0.01;
    c.phi0 = "preset:bubble";
    c.velocity_init = "project"; // u0 = 0, projection is the identity here
    c.u0x = "0";
    c.u0y = "0";
    c.inflow = false;
    c.outflow = false;
    return c;
}

inline std::vector<std::pair<std::string, std::string>> preset_descriptions() {
    return {{"convergence", "temporal accuracy sweep, unit parameters, [0,1]x[-1,1]"},
            {"spinodal", "spinodal decomposition energy decay, random seed field"},
            {"droplet", "boundary-driven droplet through the interface, [0,2]x[0,1]"},
            {"bubble", "buoyancy-driven bubble (Boussinesq), [0,1]x[-1,1]"}};
}

inline RunConfig preset_by_name(const std::string& name) {
    if (name == "convergence") return preset_convergence();
    if (name == "spinodal") return preset_spinodal();
    if (name == "droplet") return preset_droplet();
    if (name == "bubble") return preset_bubble();
    throw std::invalid_argument("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Config file parsing: "[section]" headers and "key = value" lines
// ---------------------------------------------------------------------------

namespace detail {

struct ConfigError : std::runtime_error {
    ConfigError(int line, const std::string& msg)
        : std::runtime_error("config line " + std::to_string(line) + ": " + msg) {}
};

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, int line, const std::string& key) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (trim(v.substr(used)).size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw ConfigError(line, "key '" + key + "' expects a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& v, int line, const std::string& key) {
    try {
        size_t used = 0;
        long long d = std::stoll(v, &used);
        if (trim(v.substr(used)).size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        throw ConfigError(line, "key '" + key + "' expects an integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& v, int line, const std::string& key) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError(line, "key '" + key + "' expects on/off, got '" + v + "'");
}

inline std::vector<double> parse_doubles(const std::string& v, int line, const std::string& key) {
    std::istringstream is(v);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(parse_double(tok, line, key));
    if (out.empty()) throw ConfigError(line, "key '" + key + "' expects numbers");
    return out;
}

inline Rect parse_rect(const std::string& v, int line, const std::string& key) {
    auto d = parse_doubles(v, line, key);
    if (d.size() != 4) throw ConfigError(line, "key '" + key + "' expects 'x0 y0 x1 y1'");
    return Rect{d[0], d[1], d[2], d[3]};
}

} // namespace detail

/// Parse "key = value" text with bracketed section headers into a RunConfig.
/// A "preset" key in [run] seeds all defaults; later keys override. Errors
/// carry line numbers.
inline RunConfig parse_config(const std::string& text) {
    using detail::ConfigError;
    std::vector<std::pair<int, std::string>> lines;
    {
        std::istringstream is(text);
        std::string line;
        int no = 0;
        while (std::getline(is, line)) {
            ++no;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (!line.empty()) lines.emplace_back(no, line);
        }
    }

    // preset first: it replaces every default
    RunConfig cfg;
    std::string section = "run";
    for (const auto& [no, line] : lines) {
        if (line.front() == '[') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key == "preset") {
            try {
                cfg = preset_by_name(val);
            } catch (const std::exception& e) {
                throw ConfigError(no, e.what());
            }
        }
    }

    section = "run";
    for (const auto& [no, line] : lines) {
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(no, "malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            static const char* known[] = {"run",      "physics",  "geometry", "initial",
                                          "boundary", "solver",   "convergence"};
            bool ok = false;
            for (const char* k : known) ok = ok || section == k;
            if (!ok) throw ConfigError(no, "unknown section [" + section + "]");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(no, "expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(no, "empty key");

        auto num = [&] { return detail::parse_double(val, no, key); };
        auto integer = [&] { return detail::parse_int(val, no, key); };

        if (section == "run") {
            if (key == "preset") continue; // already applied
            else if (key == "name") cfg.name = val;
            else if (key == "scheme") {
                if (val == "pd") cfg.scheme = Scheme::PD;
                else if (val == "fd") cfg.scheme = Scheme::FD;
                else throw ConfigError(no, "key 'scheme' expects pd or fd");
            }
            else if (key == "tau") cfg.tau = num();
            else if (key == "t_final") cfg.t_final = num();
            else if (key == "n") cfg.n = static_cast<int>(integer());
            else if (key == "seed") cfg.seed = static_cast<unsigned long long>(integer());
            else if (key == "out_dir") cfg.out_dir = val;
            else if (key == "cadence") cfg.cadence = static_cast<int>(integer());
            else if (key == "checkpoints") cfg.checkpoints = detail::parse_bool(val, no, key);
            else throw ConfigError(no, "unknown key '" + key + "' in section [run]");
        } else if (section == "physics") {
            if (key == "rho0") cfg.rho0 = num();
            else if (key == "chi") cfg.chi = num();
            else if (key == "nu") cfg.nu = num();
            else if (key == "gamma") cfg.gamma = num();
            else if (key == "epsilon") cfg.epsilon = num();
            else if (key == "alpha_bjsj") cfg.alpha_bjsj = num();
            else if (key == "beta") cfg.beta = num();
            else if (key == "buoyancy") cfg.buoyancy = num();
            else if (key == "pi") { cfg.pi_scalar = num(); cfg.pi_has_matrix = false; }
            else if (key == "pi_matrix") {
                auto d = detail::parse_doubles(val, no, key);
                if (d.size() != 3) throw ConfigError(no, "key 'pi_matrix' expects 'xx xy yy'");
                cfg.pi_matrix << d[0], d[1], d[1], d[2];
                cfg.pi_has_matrix = true;
            }
            else if (key == "pi_trace") {
                if (val == "promoted") cfg.pi_trace_promoted = true;
                else if (val == "scalar") cfg.pi_trace_promoted = false;
                else throw ConfigError(no, "key 'pi_trace' expects promoted or scalar");
            }
            else if (key == "mobility_model") {
                if (val != "constant" && val != "degenerate")
                    throw ConfigError(no, "key 'mobility_model' expects constant or degenerate");
                cfg.mobility_model = val;
            }
            else if (key == "mobility") cfg.mobility = num();
            else throw ConfigError(no, "unknown key '" + key + "' in section [physics]");
        } else if (section == "geometry") {
            if (key == "conduit") cfg.conduit = detail::parse_rect(val, no, key);
            else if (key == "matrix") cfg.matrix = detail::parse_rect(val, no, key);
            else throw ConfigError(no, "unknown key '" + key + "' in section [geometry]");
        } else if (section == "initial") {
            if (key == "phi") cfg.phi0 = val;
            else if (key == "phi_mean") cfg.phi_mean = num();
            else if (key == "phi_amp") cfg.phi_amp = num();
            else if (key == "ux") cfg.u0x = val;
            else if (key == "uy") cfg.u0y = val;
            else if (key == "velocity_init") {
                if (val != "interpolate" && val != "droplet" && val != "project")
                    throw ConfigError(no,
                                      "key 'velocity_init' expects project, interpolate or "
                                      "droplet");
                cfg.velocity_init = val;
            }
            else throw ConfigError(no, "unknown key '" + key + "' in section [initial]");
        } else if (section == "boundary") {
            auto seg = [&](Vec2& p0, Vec2& p1) {
                auto d = detail::parse_doubles(val, no, key);
                if (d.size() != 4) throw ConfigError(no, "key '" + key + "' expects 'x0 y0 x1 y1'");
                p0 = {d[0], d[1]};
                p1 = {d[2], d[3]};
            };
            if (key == "inflow") cfg.inflow = detail::parse_bool(val, no, key);
            else if (key == "inflow_segment") seg(cfg.inflow_p0, cfg.inflow_p1);
            else if (key == "inflow_ux") cfg.inflow_ux = val;
            else if (key == "inflow_uy") cfg.inflow_uy = val;
            else if (key == "inflow_amplitude") cfg.inflow_amplitude = num();
            else if (key == "outflow") cfg.outflow = detail::parse_bool(val, no, key);
            else if (key == "outflow_segment") seg(cfg.outflow_p0, cfg.outflow_p1);
            else if (key == "outflow_pressure") cfg.outflow_pressure = num();
            else throw ConfigError(no, "unknown key '" + key + "' in section [boundary]");
        } else if (section == "solver") {
            if (key == "newton_tol") cfg.newton_tol = num();
            else if (key == "linear_tol") cfg.linear_tol = num();
            else throw ConfigError(no, "unknown key '" + key + "' in section [solver]");
        } else if (section == "convergence") {
            if (key == "taus") cfg.conv_taus = detail::parse_doubles(val, no, key);
            else if (key == "tau_ref") cfg.conv_tau_ref = num();
            else throw ConfigError(no, "unknown key '" + key + "' in section [convergence]");
        }
    }
    return cfg;
}

/// Post-parse validation; throws naming the offending key.
inline void validate_config(const RunConfig& cfg) {
    auto positive = [](double v, const char* key) {
        if (!(v > 0.0))
            throw std::invalid_argument(std::string("config: key '") + key + "' must be > 0");
    };
    positive(cfg.tau, "tau");
    positive(cfg.t_final, "t_final");
    positive(cfg.epsilon, "epsilon");
    positive(cfg.rho0, "rho0");
    positive(cfg.chi, "chi");
    positive(cfg.beta, "beta");
    positive(cfg.nu, "nu");
    if (cfg.mobility_model == "constant") positive(cfg.mobility, "mobility");
    if (cfg.n < 1) throw std::invalid_argument("config: key 'n' must be >= 1");
    if (cfg.cadence < 0) throw std::invalid_argument("config: key 'cadence' must be >= 0");
    if (cfg.inflow) {
        Expr ux(cfg.inflow_ux, {{"a", cfg.inflow_amplitude}, {"eps", cfg.epsilon}});
        if (cfg.preset == "droplet") {
            // the parabolic profile's peak must equal the configured amplitude
            Vec2 mid = 0.5 * (cfg.inflow_p0 + cfg.inflow_p1);
            double peak = ux(mid);
            if (std::abs(peak - cfg.inflow_amplitude) > 1e-12 * std::max(1.0, cfg.inflow_amplitude))
                throw std::invalid_argument(
                    "config: inflow profile peak does not match inflow_amplitude");
        }
    }
}

} // namespace chsd
