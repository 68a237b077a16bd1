#pragma once

// Incompressible reference flow: phi_bar = psi_bar + q_inf x_1 with
//   laplace(psi_bar) = 0 in the fluid,  d psi_bar/dn = -q_inf n_1 on the obstacle.
// Weak form: int grad(psi_bar) . grad(eta) = -q_inf int d_1 eta for every test function
// eta vanishing where the far-field closure fixes psi_bar. The volume form makes the
// discrete velocity exactly divergence-free against every free test function.

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>

#include "errors.hpp"
#include "fem.hpp"
#include "force.hpp"

namespace lowmach {

/// Nodal potential on a mesh.
struct PotentialField {
    MeshPtr mesh;
    std::string name;  // "psi_bar" or "phi_tilde"
    Eigen::VectorXd values;
    double residual = 0.0;  // relative residual reached by the solver
    int iterations = 0;
};

struct IncompressibleOptions {
    FarFieldBC far_field = FarFieldBC::Dirichlet;
    double tol = 1e-10;
    int max_iterations = 0;  // 0: 10 x unknowns
    int threads = 1;
};

/// Right-hand side -q_inf int d_1 eta (plus the far-boundary flux in Neumann mode), all nodes.
inline Eigen::VectorXd incompressible_load(const ExteriorMesh& m, double q_inf, FarFieldBC bc, int threads = 1) {
    Eigen::VectorXd b = assemble_flux_vector(m, [&](std::size_t) { return Eigen::Vector2d(-q_inf, 0.0); }, threads);
    if (bc == FarFieldBC::Neumann) {
        // d psi/dn = 0 on the far boundary means d phi/dn = q_inf n_1 there
        for (const auto& fp : m.facet_points()) {
            const BoundaryFacet& f = m.facets()[fp.facet];
            if (f.tag != BoundaryTag::FarField) continue;
            const Eigen::Vector4d N = ExteriorMesh::basis_values(fp.xi, fp.eta);
            const auto& cell = m.cells()[f.cell];
            for (int a = 0; a < 4; ++a) b[cell[a]] += fp.weight * q_inf * fp.normal.x() * N[a];
        }
    }
    return b;
}

inline SpMat laplace_matrix(const ExteriorMesh& m, const DofMap& dofs, int threads = 1) {
    return assemble_matrix(m, dofs, [](std::size_t) { return Eigen::Matrix2d::Identity(); }, threads);
}

inline PotentialField solve_incompressible(const MeshPtr& mesh, double q_inf, const IncompressibleOptions& opt = {}) {
    const ExteriorMesh& m = *mesh;
    if (!std::isfinite(q_inf) || q_inf < 0.0) throw ConfigError("gas.q_inf must be finite and >= 0");
    const DofMap dofs = make_dofs(m, opt.far_field);
    const SpMat A = laplace_matrix(m, dofs, opt.threads);
    const Eigen::VectorXd b = dofs.restrict(incompressible_load(m, q_inf, opt.far_field, opt.threads));

    PotentialField out{mesh, "psi_bar", Eigen::VectorXd::Zero(m.num_nodes()), 0.0, 0};
    const double bnorm = b.norm();
    if (bnorm == 0.0) return out;

    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
    cg.setTolerance(opt.tol);
    cg.setMaxIterations(opt.max_iterations > 0 ? opt.max_iterations : 10 * dofs.size());
    cg.compute(A);
    const Eigen::VectorXd x = cg.solve(b);
    const double rel = (A * x - b).norm() / bnorm;
    if (cg.info() != Eigen::Success || !(rel <= 10.0 * opt.tol))
        throw SolverError("incompressible: conjugate gradient did not reach the tolerance", {cg.error(), rel});
    out.values = dofs.expand(x);
    out.residual = rel;
    out.iterations = int(cg.iterations());
    return out;
}

/// Velocity u_bar = grad(psi_bar) + q_inf e_1 at every quadrature point.
struct VelocityField {
    std::vector<Eigen::Vector2d> qp;
};

inline VelocityField velocity(const PotentialField& psi, double q_inf, int threads = 1) {
    VelocityField u;
    u.qp = grad_all_qp(*psi.mesh, psi.values, threads);
    for (auto& v : u.qp) v.x() += q_inf;
    return u;
}

inline Eigen::Vector2d velocity_at(const PotentialField& psi, double q_inf, int c, double xi, double eta) {
    Eigen::Vector2d v = grad_at(*psi.mesh, psi.values, c, xi, eta);
    v.x() += q_inf;
    return v;
}

struct SurfaceSample {
    double theta;
    Eigen::Vector2d x;
    double speed;
    double tangential;  // velocity component along increasing theta
};

/// Velocity on the obstacle at the facet quadrature points, ordered by angle.
inline std::vector<SurfaceSample> surface_profile(const PotentialField& psi, double q_inf) {
    const ExteriorMesh& m = *psi.mesh;
    std::vector<SurfaceSample> out;
    for (const auto& fp : m.facet_points()) {
        const BoundaryFacet& f = m.facets()[fp.facet];
        if (f.tag != BoundaryTag::Obstacle) continue;
        const Eigen::Vector2d u = velocity_at(psi, q_inf, f.cell, fp.xi, fp.eta);
        const Eigen::Vector2d t(fp.normal.y(), -fp.normal.x());
        out.push_back({(m.cell_sector(f.cell) + fp.eta) * m.dtheta(), fp.x, u.norm(), u.dot(t)});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.theta < b.theta; });
    return out;
}

inline double max_surface_speed(const PotentialField& psi, double q_inf) {
    double s = 0.0;
    for (const auto& p : surface_profile(psi, q_inf)) s = std::max(s, p.speed);
    return s;
}

/// Largest speed at the centres of the obstacle cells touching theta = 0 and theta = pi.
inline double stagnation_cell_speed(const PotentialField& psi, double q_inf) {
    const ExteriorMesh& m = *psi.mesh;
    std::vector<int> sectors{0, m.n_t() - 1};
    if (!m.axisymmetric()) {
        sectors.push_back(m.n_t() / 2 - 1);
        sectors.push_back(m.n_t() / 2);
    }
    double s = 0.0;
    for (int j : sectors) s = std::max(s, velocity_at(psi, q_inf, m.cell_index(0, j), 0.5, 0.5).norm());
    return s;
}

/// Weak normal flux int u . grad(eta_k) for every obstacle node k; zero up to the solver tolerance.
inline std::vector<double> weak_obstacle_flux(const PotentialField& psi, double q_inf, int threads = 1) {
    const ExteriorMesh& m = *psi.mesh;
    const VelocityField u = velocity(psi, q_inf, threads);
    const Eigen::VectorXd r = assemble_flux_vector(m, [&](std::size_t k) { return u.qp[k]; }, threads);
    std::vector<double> out;
    for (int j = 0; j < m.ring_size(); ++j) out.push_back(r[m.node_index(0, j)]);
    return out;
}

/// Scale for the weak fluxes: int |u| |grad eta_k| summed over obstacle nodes.
inline double weak_obstacle_flux_scale(const PotentialField& psi, double q_inf, int threads = 1) {
    const ExteriorMesh& m = *psi.mesh;
    const VelocityField u = velocity(psi, q_inf, threads);
    const int nq = m.qp_per_cell();
    double s = 0.0;
    for (int j = 0; j < m.n_t(); ++j) {
        const int c = m.cell_index(0, j);
        for (int q = 0; q < nq; ++q) {
            const std::size_t k = std::size_t(c) * nq + q;
            s += m.qp_weight(k) * u.qp[k].norm() * (m.qp_grad(k).col(0).norm() + m.qp_grad(k).col(3).norm());
        }
    }
    return s;
}

/// Dirichlet energy int |grad psi|^2 of a nodal field.
inline double dirichlet_energy(const PotentialField& f, int threads = 1) {
    const ExteriorMesh& m = *f.mesh;
    const auto g = grad_all_qp(m, f.values, threads);
    return integrate(m, [&](std::size_t k) { return g[k].squaredNorm(); });
}

/// L2 projection of a per-quadrature-point scalar onto the nodal space (consistent mass).
template <class Fn>
Eigen::VectorXd l2_project(const ExteriorMesh& m, Fn&& fn, double tol = 1e-13, int threads = 1) {
    const SpMat M = assemble_mass(m, threads);
    const Eigen::VectorXd b = assemble_vector(m, [](std::size_t) { return Eigen::Vector2d::Zero(); }, fn, threads);
    if (b.norm() == 0.0) return Eigen::VectorXd::Zero(m.num_nodes());
    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
    cg.setTolerance(tol);
    cg.setMaxIterations(10 * m.num_nodes());
    cg.compute(M);
    Eigen::VectorXd x = cg.solve(b);
    if (cg.info() != Eigen::Success) throw SolverError("l2_project: mass solve failed", {cg.error()});
    return x;
}

/// grad(p_bar) = grad(phi_force - |u_bar|^2 / 2), by projecting the scalar and differentiating.
inline std::vector<Eigen::Vector2d> incompressible_pressure_grad(const ExteriorMesh& m, const VelocityField& u,
                                                                 const ForceField& force, int threads = 1) {
    const Eigen::VectorXd s = l2_project(
        m, [&](std::size_t k) { return force.qp[k].phi - 0.5 * u.qp[k].squaredNorm(); }, 1e-13, threads);
    return grad_all_qp(m, s, threads);
}

/// Exact flow past a sphere of radius a in meridional coordinates (x, r):
/// phi_bar = q_inf x (1 + a^3 / (2 |p|^3)).
struct SphereReference {
    double phi;
    Eigen::Vector2d u;
};

inline SphereReference analytic_sphere_reference(double a, double q_inf, const Eigen::Vector2d& p) {
    const double r = p.norm();
    if (!(r >= a * (1.0 - 1e-12))) throw DomainError("analytic_sphere_reference: point inside the obstacle");
    const double a3 = a * a * a, r3 = r * r * r, r5 = r3 * r * r;
    SphereReference s;
    s.phi = q_inf * p.x() * (1.0 + a3 / (2.0 * r3));
    // grad(x / r^3) = e_1 / r^3 - 3 x p / r^5
    s.u = q_inf * (Eigen::Vector2d(1.0, 0.0) + 0.5 * a3 * (Eigen::Vector2d(1.0 / r3, 0.0) - 3.0 * p.x() * p / r5));
    return s;
}

// ---------------------------------------------------------------------------
// field dump: header line, then "x y weight value" per node

inline void write_field(std::ostream& os, const PotentialField& f, const std::string& config_hash = "") {
    const ExteriorMesh& m = *f.mesh;
    os << "lowmach-field v1 name=" << f.name << " hash=" << (config_hash.empty() ? "-" : config_hash)
       << " nodes=" << m.num_nodes() << " residual=" << format_double(f.residual) << " iterations=" << f.iterations
       << "\n";
    os << "# x y weight value\n";
    for (int k = 0; k < m.num_nodes(); ++k) {
        const auto& x = m.nodes()[k];
        os << format_double(x.x()) << ' ' << format_double(x.y()) << ' ' << format_double(m.measure_weight(x)) << ' '
           << format_double(f.values[k]) << '\n';
    }
}

/// Reads a field dump onto `mesh`; node coordinates must match bit-for-bit.
inline PotentialField read_field(std::istream& is, const MeshPtr& mesh) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("lowmach-field v1", 0) != 0)
        throw InputError("field dump: missing 'lowmach-field v1' header");
    PotentialField f;
    f.mesh = mesh;
    f.name = detail::header_value(header, "name");
    const int n = std::stoi(detail::header_value(header, "nodes"));
    if (n != mesh->num_nodes()) throw InputError("field dump: node count does not match the mesh");
    f.residual = std::stod(detail::header_value(header, "residual"));
    f.iterations = std::stoi(detail::header_value(header, "iterations"));
    f.values.resize(n);
    for (int k = 0; k < n; ++k) {
        std::istringstream ls(detail::next_data_line(is));
        double x, y, w, v;
        if (!(ls >> x >> y >> w >> v) || x != mesh->nodes()[k].x() || y != mesh->nodes()[k].y())
            throw InputError("field dump: node table does not match the mesh");
        f.values[k] = v;
    }
    return f;
}

}  // namespace lowmach
