#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "chsd/mesh.hpp"
#include "chsd/reference.hpp"

namespace chsd {

enum class ElementKind { P1, P2 };
enum class ValueRank { Scalar, Vector2 };
enum class Support { WholeDomain, Conduit, Matrix };

/// Strong Dirichlet data on a boundary group. FullValue constrains every
/// component; NormalOnly constrains the component normal to each (axis
/// aligned) edge, which is how u.n = 0 on Gamma_m is imposed.
struct DirichletBC {
    std::string group;
    enum class Mode { FullValue, NormalOnly } mode = Mode::FullValue;
    // value(point, component); defaults to homogeneous data
    std::function<double(Vec2, int)> value;
};

/// Lagrange space on the mesh (P1: vertex dofs, P2: vertex + edge-midpoint
/// dofs), restricted to one subdomain or the whole domain. Vector spaces
/// interleave components: dof = 2 * entity + component. Immutable once built.
class FESpace {
public:
    const KarsticMesh* mesh = nullptr;
    ElementKind kind = ElementKind::P1;
    ValueRank rank = ValueRank::Scalar;
    Support support = Support::WholeDomain;
    bool mean_zero = false;

    int dof_count = 0;
    int scalar_entity_count = 0;
    int local_node_count = 0;

    // global node/edge id -> local scalar entity index (or -1 off-support)
    std::vector<int> node_local;
    std::vector<int> edge_local;
    // local scalar entity -> global node id, then global edge id
    std::vector<int> local_nodes;
    std::vector<int> local_edges;

    std::vector<int> constrained_dofs;       // sorted
    std::vector<double> constrained_values;  // parallel to constrained_dofs

    int components() const { return rank == ValueRank::Vector2 ? 2 : 1; }
    int entities_per_elem() const { return kind == ElementKind::P2 ? 6 : 3; }
    int dofs_per_elem() const { return entities_per_elem() * components(); }

    bool on_support(int tri) const {
        if (support == Support::WholeDomain) return true;
        Subdomain d = mesh->triangles[tri].domain;
        return (support == Support::Conduit) == (d == Subdomain::Conduit);
    }

    /// Scalar entity indices of one triangle, local dof order: 3 vertices
    /// then (P2) 3 edges (v0v1, v1v2, v2v0).
    void element_entities(int tri, int* out) const {
        const auto& t = mesh->triangles[tri];
        for (int k = 0; k < 3; ++k) out[k] = node_local[t.v[k]];
        if (kind == ElementKind::P2)
            for (int k = 0; k < 3; ++k)
                out[3 + k] = local_node_count + edge_local[mesh->tri_edges[tri][k]];
    }

    Vec2 entity_point(int entity) const {
        if (entity < local_node_count) return mesh->nodes[local_nodes[entity]];
        return mesh->edge_midpoint(local_edges[entity - local_node_count]);
    }

    int dof_of(int entity, int comp) const { return entity * components() + comp; }

    /// Scalar entity index of a mesh node (P1 and P2).
    int node_entity(int node) const { return node_local[node]; }
    /// Scalar entity index of an edge midpoint (P2 only).
    int edge_entity(int edge) const { return local_node_count + edge_local[edge]; }
};

inline FESpace build_space(const KarsticMesh& mesh, ElementKind kind, ValueRank rank,
                           Support support, const std::vector<DirichletBC>& dirichlet = {},
                           bool mean_zero = false) {
    FESpace sp;
    sp.mesh = &mesh;
    sp.kind = kind;
    sp.rank = rank;
    sp.support = support;
    sp.mean_zero = mean_zero;

    std::vector<char> node_used(mesh.node_count(), 0), edge_used(mesh.edge_count(), 0);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        if (!sp.on_support(t)) continue;
        for (int k = 0; k < 3; ++k) {
            node_used[mesh.triangles[t].v[k]] = 1;
            edge_used[mesh.tri_edges[t][k]] = 1;
        }
    }

    sp.node_local.assign(mesh.node_count(), -1);
    for (int v = 0; v < mesh.node_count(); ++v)
        if (node_used[v]) {
            sp.node_local[v] = static_cast<int>(sp.local_nodes.size());
            sp.local_nodes.push_back(v);
        }
    sp.local_node_count = static_cast<int>(sp.local_nodes.size());

    sp.edge_local.assign(mesh.edge_count(), -1);
    if (kind == ElementKind::P2)
        for (int e = 0; e < mesh.edge_count(); ++e)
            if (edge_used[e]) {
                sp.edge_local[e] = static_cast<int>(sp.local_edges.size());
                sp.local_edges.push_back(e);
            }

    sp.scalar_entity_count = sp.local_node_count + static_cast<int>(sp.local_edges.size());
    sp.dof_count = sp.scalar_entity_count * sp.components();

    // Dirichlet constraints, gathered per dof; later specs override earlier.
    std::map<int, double> fixed;
    for (const auto& bc : dirichlet) {
        auto it = mesh.boundary_edges.find(bc.group);
        if (it == mesh.boundary_edges.end())
            throw std::invalid_argument("build_space: unknown boundary group " + bc.group);
        auto value_at = [&bc](Vec2 p, int c) { return bc.value ? bc.value(p, c) : 0.0; };
        for (const auto& e : it->second) {
            if (sp.node_local[e.a] < 0 || sp.node_local[e.b] < 0)
                continue; // edge outside this space's support
            std::vector<int> entities = {sp.node_local[e.a], sp.node_local[e.b]};
            if (kind == ElementKind::P2)
                entities.push_back(sp.edge_entity(mesh.edge_id(e.a, e.b)));
            int comp_lo = 0, comp_hi = sp.components();
            if (bc.mode == DirichletBC::Mode::NormalOnly) {
                if (rank != ValueRank::Vector2)
                    throw std::invalid_argument("build_space: NormalOnly needs a vector space");
                bool vertical = mesh.nodes[e.a].x == mesh.nodes[e.b].x;
                comp_lo = vertical ? 0 : 1;
                comp_hi = comp_lo + 1;
            }
            for (int ent : entities) {
                Vec2 p = sp.entity_point(ent);
                for (int c = comp_lo; c < comp_hi; ++c)
                    fixed[sp.dof_of(ent, c)] = value_at(p, c);
            }
        }
    }
    for (const auto& [dof, val] : fixed) {
        sp.constrained_dofs.push_back(dof);
        sp.constrained_values.push_back(val);
    }
    return sp;
}

} // namespace chsd
