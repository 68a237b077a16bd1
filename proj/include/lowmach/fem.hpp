#pragma once

// Continuous bilinear elements on the exterior shell: DOF bookkeeping, assembly,
// and point evaluation of nodal fields.
//
// Assembly computes per-cell blocks in parallel into private buffers and scatters them
// serially in cell order, so matrices and vectors are bitwise independent of the
// thread count.

#include <array>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "geometry.hpp"
#include "parallel.hpp"

namespace lowmach {

using SpMat = Eigen::SparseMatrix<double>;
using MeshPtr = std::shared_ptr<const ExteriorMesh>;

/// Closure of the potential on the far boundary.
enum class FarFieldBC { Dirichlet, Neumann };

inline const char* to_string(FarFieldBC bc) { return bc == FarFieldBC::Dirichlet ? "dirichlet" : "neumann"; }
inline FarFieldBC parse_far_field(const std::string& s) {
    if (s == "dirichlet") return FarFieldBC::Dirichlet;
    if (s == "neumann") return FarFieldBC::Neumann;
    throw ConfigError("solver.far_field must be 'dirichlet' or 'neumann'");
}

/// Maps mesh nodes to unknowns. Constrained nodes carry the value zero.
struct DofMap {
    std::vector<int> index;  // node -> unknown, -1 when constrained
    std::vector<int> nodes;  // unknown -> node

    int size() const { return int(nodes.size()); }

    Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(Eigen::Index(index.size()));
        for (int u = 0; u < size(); ++u) full[nodes[u]] = reduced[u];
        return full;
    }

    Eigen::VectorXd restrict(const Eigen::VectorXd& full) const {
        Eigen::VectorXd r(size());
        for (int u = 0; u < size(); ++u) r[u] = full[nodes[u]];
        return r;
    }
};

/// Dirichlet: every far-field node is fixed. Neumann: one far-field node is pinned.
inline DofMap make_dofs(const ExteriorMesh& m, FarFieldBC bc) {
    DofMap d;
    d.index.assign(m.num_nodes(), -1);
    const int pinned = m.node_index(m.n_r(), 0);
    for (int k = 0; k < m.num_nodes(); ++k) {
        const bool fixed = bc == FarFieldBC::Dirichlet ? m.on_far_field(k) : k == pinned;
        if (fixed) continue;
        d.index[k] = d.size();
        d.nodes.push_back(k);
    }
    return d;
}

using CellMatrix = Eigen::Matrix4d;
using CellVector = Eigen::Vector4d;

/// Gradient of a nodal field at quadrature point q of cell c.
inline Eigen::Vector2d grad_at_qp(const ExteriorMesh& m, const Eigen::VectorXd& nodal, int c, int q) {
    const auto& cell = m.cells()[c];
    const Eigen::Vector4d v(nodal[cell[0]], nodal[cell[1]], nodal[cell[2]], nodal[cell[3]]);
    return m.qp_grad(std::size_t(c) * m.qp_per_cell() + q) * v;
}

/// Gradient of a nodal field at an arbitrary local point of cell c.
inline Eigen::Vector2d grad_at(const ExteriorMesh& m, const Eigen::VectorXd& nodal, int c, double xi, double eta) {
    const auto& cell = m.cells()[c];
    const Eigen::Vector4d v(nodal[cell[0]], nodal[cell[1]], nodal[cell[2]], nodal[cell[3]]);
    return m.basis_gradients(c, xi, eta) * v;
}

inline double value_at(const ExteriorMesh& m, const Eigen::VectorXd& nodal, int c, double xi, double eta) {
    const auto& cell = m.cells()[c];
    const Eigen::Vector4d v(nodal[cell[0]], nodal[cell[1]], nodal[cell[2]], nodal[cell[3]]);
    return ExteriorMesh::basis_values(xi, eta).dot(v);
}

/// Gradients of a nodal field at every quadrature point.
inline std::vector<Eigen::Vector2d> grad_all_qp(const ExteriorMesh& m, const Eigen::VectorXd& nodal, int threads = 1) {
    std::vector<Eigen::Vector2d> g(m.num_qp());
    const int nq = m.qp_per_cell();
    parallel_for(std::size_t(m.num_cells()), threads, [&](std::size_t c) {
        for (int q = 0; q < nq; ++q) g[c * nq + q] = grad_at_qp(m, nodal, int(c), q);
    });
    return g;
}

/// Sum over cells of w_k grad(N_a)^T K(k) grad(N_b), restricted to unknowns.
///
/// `coef(k)` returns the 2x2 coefficient at global quadrature index k.
template <class Coef>
SpMat assemble_matrix(const ExteriorMesh& m, const DofMap& dofs, Coef&& coef, int threads = 1) {
    const int nq = m.qp_per_cell();
    std::vector<CellMatrix> local(m.num_cells());
    parallel_for(std::size_t(m.num_cells()), threads, [&](std::size_t c) {
        CellMatrix A = CellMatrix::Zero();
        for (int q = 0; q < nq; ++q) {
            const std::size_t k = c * nq + q;
            const Matrix24& G = m.qp_grad(k);
            A.noalias() += m.qp_weight(k) * (G.transpose() * coef(k) * G);
        }
        local[c] = A;
    });
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(std::size_t(m.num_cells()) * 16);
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto& cell = m.cells()[c];
        for (int a = 0; a < 4; ++a) {
            const int ra = dofs.index[cell[a]];
            if (ra < 0) continue;
            for (int b = 0; b < 4; ++b) {
                const int rb = dofs.index[cell[b]];
                if (rb >= 0) trip.emplace_back(ra, rb, local[c](a, b));
            }
        }
    }
    SpMat A(dofs.size(), dofs.size());
    A.setFromTriplets(trip.begin(), trip.end());
    return A;
}

/// Mass matrix sum w_k N_a N_b on all nodes.
inline SpMat assemble_mass(const ExteriorMesh& m, int threads = 1) {
    const int nq = m.qp_per_cell();
    std::vector<CellMatrix> local(m.num_cells());
    parallel_for(std::size_t(m.num_cells()), threads, [&](std::size_t c) {
        CellMatrix M = CellMatrix::Zero();
        for (int q = 0; q < nq; ++q) {
            const Eigen::Vector4d N = m.qp_shape(q);
            M.noalias() += m.qp_weight(c * nq + q) * N * N.transpose();
        }
        local[c] = M;
    });
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(std::size_t(m.num_cells()) * 16);
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto& cell = m.cells()[c];
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) trip.emplace_back(cell[a], cell[b], local[c](a, b));
    }
    SpMat M(m.num_nodes(), m.num_nodes());
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

/// Sum over cells of w_k (flux(k) . grad N_a + source(k) N_a) on all nodes.
///
/// `flux(k)` returns a 2-vector, `source(k)` a scalar.
template <class Flux, class Source>
Eigen::VectorXd assemble_vector(const ExteriorMesh& m, Flux&& flux, Source&& source, int threads = 1) {
    const int nq = m.qp_per_cell();
    std::vector<CellVector> local(m.num_cells());
    parallel_for(std::size_t(m.num_cells()), threads, [&](std::size_t c) {
        CellVector v = CellVector::Zero();
        for (int q = 0; q < nq; ++q) {
            const std::size_t k = c * nq + q;
            const Eigen::Vector2d f = flux(k);
            v.noalias() += m.qp_weight(k) * (m.qp_grad(k).transpose() * f + source(k) * m.qp_shape(q));
        }
        local[c] = v;
    });
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m.num_nodes());
    for (int c = 0; c < m.num_cells(); ++c) {
        const auto& cell = m.cells()[c];
        for (int a = 0; a < 4; ++a) out[cell[a]] += local[c][a];
    }
    return out;
}

template <class Flux>
Eigen::VectorXd assemble_flux_vector(const ExteriorMesh& m, Flux&& flux, int threads = 1) {
    return assemble_vector(m, std::forward<Flux>(flux), [](std::size_t) { return 0.0; }, threads);
}

/// Integral over the mesh of a per-quadrature-point scalar.
template <class Fn>
double integrate(const ExteriorMesh& m, Fn&& fn) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.num_qp(); ++k) s += m.qp_weight(k) * fn(k);
    return s;
}

}  // namespace lowmach
