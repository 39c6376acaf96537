#pragma once

#include <cstdio>
#include <fstream>

#include "chsd/state.hpp"

namespace chsd {

namespace detail {

inline void vtk_scalar_at_nodes(std::ostream& os, const KarsticMesh& mesh, const FEField& f,
                                const char* name) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    const FESpace& sp = *f.space;
    char buf[64];
    for (int v = 0; v < mesh.node_count(); ++v) {
        int ent = sp.node_local[v];
        double val = ent >= 0 ? f.coeffs[sp.dof_of(ent, 0)] : 0.0;
        std::snprintf(buf, sizeof(buf), "%.12g\n", val);
        os << buf;
    }
}

inline void vtk_vector_at_nodes(std::ostream& os, const KarsticMesh& mesh, const FEField& f,
                                const char* name) {
    os << "VECTORS " << name << " double\n";
    const FESpace& sp = *f.space;
    char buf[128];
    for (int v = 0; v < mesh.node_count(); ++v) {
        int ent = sp.node_local[v];
        double x = ent >= 0 ? f.coeffs[sp.dof_of(ent, 0)] : 0.0;
        double y = ent >= 0 ? f.coeffs[sp.dof_of(ent, 1)] : 0.0;
        std::snprintf(buf, sizeof(buf), "%.12g %.12g 0\n", x, y);
        os << buf;
    }
}

} // namespace detail

/// Legacy ASCII VTK unstructured grid: mesh with the integer subdomain tag
/// as cell data, plus optional point data (P2 fields down-sampled to vertex
/// values).
inline void write_vtk(const std::string& path, const KarsticMesh& mesh,
                      const SimState* state = nullptr) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_vtk: cannot open " + path);
    os << "# vtk DataFile Version 3.0\n";
    os << "chsd snapshot\n";
    os << "ASCII\n";
    os << "DATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.node_count() << " double\n";
    char buf[128];
    for (const auto& p : mesh.nodes) {
        std::snprintf(buf, sizeof(buf), "%.12g %.12g 0\n", p.x, p.y);
        os << buf;
    }
    int nt = mesh.triangle_count();
    os << "CELLS " << nt << " " << 4 * nt << "\n";
    for (const auto& t : mesh.triangles)
        os << "3 " << t.v[0] << " " << t.v[1] << " " << t.v[2] << "\n";
    os << "CELL_TYPES " << nt << "\n";
    for (int i = 0; i < nt; ++i) os << "5\n";
    os << "CELL_DATA " << nt << "\n";
    os << "SCALARS subdomain int 1\nLOOKUP_TABLE default\n";
    for (const auto& t : mesh.triangles) os << static_cast<int>(t.domain) << "\n";
    if (state) {
        os << "POINT_DATA " << mesh.node_count() << "\n";
        detail::vtk_scalar_at_nodes(os, mesh, state->phi, "phi");
        detail::vtk_scalar_at_nodes(os, mesh, state->mu, "mu");
        detail::vtk_scalar_at_nodes(os, mesh, state->p_c, "p_c");
        detail::vtk_scalar_at_nodes(os, mesh, state->p_m, "p_m");
        detail::vtk_vector_at_nodes(os, mesh, state->u_c, "velocity_c");
        detail::vtk_vector_at_nodes(os, mesh, state->u_m, "velocity_m");
    }
    if (!os) throw std::runtime_error("write_vtk: write failed for " + path);
}

} // namespace chsd
