#pragma once

#include <algorithm>
#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

namespace chsd {

enum class MobilityModel { Constant, Degenerate };

/// Model constants and coefficient functions. Viscosity and mobility are
/// functions of the lagged phase value, clamped to [min, max].
struct PhysicalParams {
    double rho0 = 1.0;
    double chi = 1.0;
    double gamma = 1.0;
    double epsilon = 1.0;
    double alpha_bjsj = 0.0;
    double beta = 1.0;       // FD pressure stabilization constant
    double buoyancy_B = 0.0; // Boussinesq coefficient, 0 disables the force

    Eigen::Matrix2d Pi = Eigen::Matrix2d::Identity();
    // trace(Pi) entering the BJSJ weight. With a scalar permeability pi the
    // promoted convention gives 2*pi; the alternative keeps pi itself.
    double bjsj_trace = 2.0;

    std::function<double(double)> nu_fn;   // defaults to constant nu_value
    double nu_value = 1.0;
    double nu_min = 0.0, nu_max = 1e12; // floor 0 keeps invalid samples detectable

    MobilityModel mobility_model = MobilityModel::Constant;
    double mobility_value = 1.0;
    double mobility_min = 1e-14, mobility_max = 1e12;

    bool nu_depends_on_phi = false; // true invalidates cached fluid operators per step

    void set_scalar_permeability(double pi, bool promoted_trace = true) {
        if (pi <= 0.0) throw std::invalid_argument("PhysicalParams: permeability must be > 0");
        Pi = pi * Eigen::Matrix2d::Identity();
        bjsj_trace = promoted_trace ? 2.0 * pi : pi;
    }

    void set_matrix_permeability(const Eigen::Matrix2d& P) {
        Eigen::Matrix2d sym = 0.5 * (P + P.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(sym);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::invalid_argument("PhysicalParams: permeability matrix must be SPD");
        Pi = sym;
        bjsj_trace = sym.trace();
    }

    Eigen::Matrix2d Pi_inv() const { return Pi.inverse(); }

    double nu(double phi) const {
        double v = nu_fn ? nu_fn(phi) : nu_value;
        return std::clamp(v, nu_min, nu_max);
    }

    double mobility(double phi) const {
        double v;
        if (mobility_model == MobilityModel::Constant) {
            v = mobility_value;
        } else {
            double a = 1.0 - phi * phi;
            v = epsilon * std::sqrt(a * a + epsilon * epsilon);
        }
        return std::clamp(v, mobility_min, mobility_max);
    }
};

} // namespace chsd
