#pragma once

// Compressible flow as the minimizer of the difference functional
//
//   I(phi_tilde) = eps^-4 int [ F(p) - F(p_bar) - p_bar . (p - p_bar) ],
//   F(p) = G(|p|^2, phi_f),  p = p_bar + eps^2 grad(phi_tilde),  p_bar = grad(phi_bar).
//
// Written out exactly in powers of eps^2 d, d = grad(phi_tilde):
//
//   I = int [ int_0^1 (1-t) d^T a(p_bar + t eps^2 d) d dt  +  r(p_bar) p_bar . d ],
//   r = (rho_hat - 1) / eps^2,
//
// with a the Hessian of F. Both pieces are O(1) as eps -> 0, so nothing cancels.
// The gradient is int [r(p) p + d] . grad(eta) and the Hessian int grad(eta)^T a(p) grad(eta).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SparseCholesky>

#include "errors.hpp"
#include "fem.hpp"
#include "force.hpp"
#include "gas_closure.hpp"
#include "incompressible.hpp"

namespace lowmach {

/// Discrete minimization problem at one eps. Per-quadrature-point data is precomputed.
struct CompressibleProblem {
    MeshPtr mesh;
    PotentialField psi_bar;
    GasModel gas;  // carries eps
    CutoffSpec spec;
    DofMap dofs;
    int threads = 1;

    std::vector<Eigen::Vector2d> pbar;  // grad(phi_bar)
    std::vector<ForceValue> force;
    std::vector<CutoffThresholds> thr;  // one entry when the force is absent
    std::vector<double> rbar;           // r(|p_bar|^2)

    double eps() const { return gas.epsilon; }
    const CutoffThresholds& thresholds(std::size_t k) const { return thr.size() == 1 ? thr[0] : thr[k]; }
    double phi(std::size_t k) const { return force[k].phi; }
};

/// Builds the problem. The cut-off for eps >= eps0 is built with eps0 raised to eps, which
/// keeps the truncated problem defined (the run is then reported as not removed).
inline CompressibleProblem make_compressible_problem(const PotentialField& psi_bar, const ForceField& force,
                                                     const GasModel& gas, const CutoffSpec& spec, int threads = 1) {
    gas.validate();
    CompressibleProblem P;
    P.mesh = psi_bar.mesh;
    P.psi_bar = psi_bar;
    P.gas = gas;
    P.spec = spec;
    P.threads = threads;
    P.dofs = make_dofs(*P.mesh, FarFieldBC::Dirichlet);
    const ExteriorMesh& m = *P.mesh;
    P.pbar = grad_all_qp(m, psi_bar.values, threads);
    for (auto& v : P.pbar) v.x() += gas.q_inf;
    P.force = force.qp;
    if (force.zero) {
        P.thr = {spec.thresholds(0.0)};
    } else {
        P.thr.resize(m.num_qp());
        parallel_for(m.num_qp(), threads, [&](std::size_t k) { P.thr[k] = spec.thresholds(P.force[k].phi); });
    }
    P.rbar.resize(m.num_qp());
    parallel_for(m.num_qp(), threads, [&](std::size_t k) {
        P.rbar[k] = truncated_state(P.pbar[k].squaredNorm(), P.force[k].phi, P.thresholds(k), spec.saturation, gas).excess;
    });
    return P;
}

namespace detail {

/// d^T a(p) d = rho (|d|^2 - eps^2 q_Lambda (p.d)^2 / p'(rho)) at quadrature index k.
inline double hessian_form(const CompressibleProblem& P, std::size_t k, const Eigen::Vector2d& p, const Eigen::Vector2d& d) {
    const GasModel& g = P.gas;
    const double e2 = g.epsilon * g.epsilon;
    const CutoffValue qh = cutoff_q(p.squaredNorm(), P.phi(k), P.thresholds(k), P.spec.saturation);
    const double rho = enthalpy_inv(e2 * (g.q_inf * g.q_inf - qh.value) / 2.0, g);
    const double pd = p.dot(d);
    return rho * (d.squaredNorm() - e2 * qh.d_lambda * pd * pd / g.pressure_d1(rho));
}

inline Eigen::Matrix2d hessian_coeff(const CompressibleProblem& P, std::size_t k, const Eigen::Vector2d& p) {
    const GasModel& g = P.gas;
    const double e2 = g.epsilon * g.epsilon;
    const CutoffValue qh = cutoff_q(p.squaredNorm(), P.phi(k), P.thresholds(k), P.spec.saturation);
    const double rho = enthalpy_inv(e2 * (g.q_inf * g.q_inf - qh.value) / 2.0, g);
    return rho * (Eigen::Matrix2d::Identity() - e2 * qh.d_lambda / g.pressure_d1(rho) * p * p.transpose());
}

/// 0, the t in (0,1) where |p + t s|^2 meets a cut-off threshold, and 1, sorted.
/// The path integrand is only piecewise smooth across those points.
inline std::vector<double> threshold_crossings(const Eigen::Vector2d& p, const Eigen::Vector2d& s,
                                               const CutoffThresholds& thr) {
    std::vector<double> cuts{0.0, 1.0};
    const double a = s.squaredNorm(), b = p.dot(s);
    for (const double level : {thr.lower2, thr.upper2}) {
        const double c = p.squaredNorm() - level;
        const double disc = b * b - a * c;
        if (!(a > 0.0) || disc < 0.0) continue;
        const double root = std::sqrt(disc);
        // stable pair of roots of a t^2 + 2 b t + c
        const double qv = -(b + std::copysign(root, b));
        for (const double t : {qv / a, qv != 0.0 ? c / qv : 0.0})
            if (t > 0.0 && t < 1.0) cuts.push_back(t);
    }
    std::sort(cuts.begin(), cuts.end());
    return cuts;
}

}  // namespace detail

struct FunctionalValue {
    double value = 0.0;
    double magnitude = 0.0;  // sum of |integrand contributions|, the roundoff scale of `value`
};

/// I(phi_tilde) for a nodal field on all mesh nodes; `t_rule` integrates the (1-t) path integral.
inline FunctionalValue discrete_functional_ex(const CompressibleProblem& P, const Eigen::VectorXd& phi_tilde,
                                              const GaussRule& t_rule) {
    const ExteriorMesh& m = *P.mesh;
    const int nq = m.qp_per_cell();
    const double e2 = P.eps() * P.eps();
    std::vector<double> val(m.num_cells()), mag(m.num_cells());
    parallel_for(std::size_t(m.num_cells()), P.threads, [&](std::size_t c) {
        double v = 0.0, a = 0.0;
        for (int q = 0; q < nq; ++q) {
            const std::size_t k = c * nq + q;
            const Eigen::Vector2d d = grad_at_qp(m, phi_tilde, int(c), q);
            double quad = 0.0;
            if (d.squaredNorm() > 0.0) {
                const auto cuts = detail::threshold_crossings(P.pbar[k], e2 * d, P.thresholds(k));
                for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
                    const double t0 = cuts[j], h = cuts[j + 1] - cuts[j];
                    for (std::size_t i = 0; i < t_rule.size(); ++i) {
                        const double t = t0 + h * t_rule.points[i];
                        quad += h * t_rule.weights[i] * (1.0 - t) *
                                detail::hessian_form(P, k, P.pbar[k] + t * e2 * d, d);
                    }
                }
            }
            const double lin = P.rbar[k] * P.pbar[k].dot(d);
            v += m.qp_weight(k) * (quad + lin);
            a += m.qp_weight(k) * (std::abs(quad) + std::abs(lin));
        }
        val[c] = v;
        mag[c] = a;
    });
    FunctionalValue out;
    for (int c = 0; c < m.num_cells(); ++c) {
        out.value += val[c];
        out.magnitude += mag[c];
    }
    return out;
}

inline double discrete_functional(const CompressibleProblem& P, const Eigen::VectorXd& phi_tilde) {
    return discrete_functional_ex(P, phi_tilde, gauss8()).value;
}

/// Per-quadrature-point total state p = p_bar + eps^2 d and the flux r(p) p + d.
inline std::vector<Eigen::Vector2d> functional_flux(const CompressibleProblem& P, const Eigen::VectorXd& phi_tilde) {
    const ExteriorMesh& m = *P.mesh;
    const int nq = m.qp_per_cell();
    const double e2 = P.eps() * P.eps();
    std::vector<Eigen::Vector2d> flux(m.num_qp());
    parallel_for(std::size_t(m.num_cells()), P.threads, [&](std::size_t c) {
        for (int q = 0; q < nq; ++q) {
            const std::size_t k = c * nq + q;
            const Eigen::Vector2d d = grad_at_qp(m, phi_tilde, int(c), q);
            const Eigen::Vector2d p = P.pbar[k] + e2 * d;
            const double r =
                truncated_state(p.squaredNorm(), P.phi(k), P.thresholds(k), P.spec.saturation, P.gas).excess;
            flux[k] = r * p + d;
        }
    });
    return flux;
}

/// dI/d(phi_k) for every mesh node k (constrained nodes included).
inline Eigen::VectorXd functional_gradient(const CompressibleProblem& P, const Eigen::VectorXd& phi_tilde) {
    const auto flux = functional_flux(P, phi_tilde);
    return assemble_flux_vector(*P.mesh, [&](std::size_t k) { return flux[k]; }, P.threads);
}

/// Hessian restricted to the unknowns.
inline SpMat functional_hessian(const CompressibleProblem& P, const Eigen::VectorXd& phi_tilde) {
    const ExteriorMesh& m = *P.mesh;
    const auto d = grad_all_qp(m, phi_tilde, P.threads);
    const double e2 = P.eps() * P.eps();
    return assemble_matrix(
        m, P.dofs, [&](std::size_t k) { return detail::hessian_coeff(P, k, P.pbar[k] + e2 * d[k]); }, P.threads);
}

struct MinimizeOptions {
    double tol = 1e-10;  // on |grad| / |grad at the initial guess|
    int max_newton = 50;
    int max_backtracks = 40;
    double floor_tol = 1e-8;
    double armijo = 1e-4;
    std::optional<Eigen::VectorXd> initial;  // nodal, all nodes; far-field values are ignored
};

struct MinimizeResult {
    PotentialField phi_tilde;
    std::vector<double> grad_history;    // |grad| per iterate, restricted to unknowns
    std::vector<double> value_history;
    std::vector<int> backtracks;
    double min_pivot = std::numeric_limits<double>::infinity();  // smallest LDL^T pivot seen
    int iterations = 0;
    bool converged = false;
    bool roundoff_floor = false;  // stopped above tol because the gradient stagnated at roundoff level
};

/// Damped Newton with Armijo backtracking on I.
///
/// A step whose energy change is below the roundoff of I is accepted when it reduces the
/// gradient norm; this is the regime of the last one or two quadratic steps. Once the
/// gradient is below floor_tol * |g0| and a full step no longer halves it, the iteration
/// stops at the roundoff floor.
inline MinimizeResult minimize(const CompressibleProblem& P, const MinimizeOptions& opt = {}) {
    const ExteriorMesh& m = *P.mesh;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(m.num_nodes());
    if (opt.initial) {
        if (opt.initial->size() != m.num_nodes()) throw InputError("minimize: initial guess has the wrong size");
        x = P.dofs.expand(P.dofs.restrict(*opt.initial));
    }
    MinimizeResult res;
    res.phi_tilde = PotentialField{P.mesh, "phi_tilde", x, 0.0, 0};

    Eigen::VectorXd g = P.dofs.restrict(functional_gradient(P, x));
    FunctionalValue f = discrete_functional_ex(P, x, gauss8());
    const double g0 = g.norm();
    res.grad_history.push_back(g0);
    res.value_history.push_back(f.value);

    Eigen::SimplicialLDLT<SpMat> ldlt;
    for (int it = 0; it < opt.max_newton; ++it) {
        if (g.norm() <= opt.tol * g0 || g.norm() == 0.0) {
            res.converged = true;
            break;
        }
        const SpMat H = functional_hessian(P, x);
        if (it == 0) ldlt.analyzePattern(H);
        ldlt.factorize(H);
        if (ldlt.info() != Eigen::Success) throw SolverError("minimize: Hessian factorization failed", res.grad_history);
        const double pivot = ldlt.vectorD().minCoeff();
        res.min_pivot = std::min(res.min_pivot, pivot);
        if (!(pivot > 0.0)) throw SolverError("minimize: Hessian is not positive definite", res.grad_history);
        const Eigen::VectorXd step = P.dofs.expand(ldlt.solve(-g));
        const double slope = -g.dot(ldlt.solve(g));

        double alpha = 1.0;
        bool accepted = false;
        int bt = 0;
        for (; bt <= opt.max_backtracks; ++bt, alpha *= 0.5) {
            const Eigen::VectorXd xn = x + alpha * step;
            const FunctionalValue fn = discrete_functional_ex(P, xn, gauss8());
            const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (f.magnitude + fn.magnitude);
            bool ok = fn.value <= f.value + opt.armijo * alpha * slope;
            Eigen::VectorXd gn;
            if (!ok && std::abs(fn.value - f.value) <= noise) {
                gn = P.dofs.restrict(functional_gradient(P, xn));
                ok = gn.norm() < g.norm();
            }
            if (ok) {
                x = xn;
                f = fn;
                g = gn.size() ? gn : P.dofs.restrict(functional_gradient(P, x));
                accepted = true;
                break;
            }
        }
        res.backtracks.push_back(bt);
        if (!accepted) {
            res.phi_tilde.values = x;
            throw SolverError("minimize: line search failed", res.grad_history);
        }
        res.iterations = it + 1;
        const double prev = res.grad_history.back();
        res.grad_history.push_back(g.norm());
        if (g.norm() > opt.tol * g0 && g.norm() <= opt.floor_tol * g0 && g.norm() > 0.5 * prev) {
            res.converged = true;
            res.roundoff_floor = true;
            break;
        }
        res.value_history.push_back(f.value);
    }
    if (!res.converged && (g.norm() <= opt.tol * g0 || g.norm() == 0.0)) res.converged = true;
    res.phi_tilde.values = x;
    res.phi_tilde.residual = g0 > 0.0 ? g.norm() / g0 : 0.0;
    res.phi_tilde.iterations = res.iterations;
    if (!res.converged) throw SolverError("minimize: Newton iteration limit reached", res.grad_history);
    return res;
}

// ---------------------------------------------------------------------------
// reconstructed flow

struct FlowState {
    double epsilon = 0.0;
    PotentialField psi_bar;
    PotentialField phi_tilde;
    std::vector<Eigen::Vector2d> u_bar;  // per quadrature point
    std::vector<Eigen::Vector2d> u;
    std::vector<double> rho;
    std::vector<double> mach;
    std::vector<Eigen::Vector2d> grad_p;  // rho grad(phi_f - |u|^2/2)
    double cutoff_margin = 0.0;           // min over quadrature points of q_lower - |u|
    double bernoulli_residual = 0.0;      // max pointwise, untruncated regime only
    bool truncated_regime = false;        // margin <= 0: rho is the truncated density

    double max_mach() const { return mach.empty() ? 0.0 : *std::max_element(mach.begin(), mach.end()); }
    double rho_deviation_inf() const {
        double s = 0.0;
        for (double r : rho) s = std::max(s, std::abs(r - 1.0));
        return s;
    }
};

inline FlowState flow_state(const CompressibleProblem& P, const PotentialField& phi_tilde) {
    const ExteriorMesh& m = *P.mesh;
    const double e2 = P.eps() * P.eps();
    const GasModel& g = P.gas;
    FlowState s;
    s.epsilon = P.eps();
    s.psi_bar = P.psi_bar;
    s.phi_tilde = phi_tilde;
    s.u_bar = P.pbar;
    const auto d = grad_all_qp(m, phi_tilde.values, P.threads);
    const std::size_t n = m.num_qp();
    s.u.resize(n);
    s.rho.resize(n);
    s.mach.resize(n);
    std::vector<double> margin(n);
    for (std::size_t k = 0; k < n; ++k) {
        s.u[k] = P.pbar[k] + e2 * d[k];
        margin[k] = std::sqrt(P.thresholds(k).lower2) - s.u[k].norm();
    }
    s.cutoff_margin = n ? *std::min_element(margin.begin(), margin.end()) : 0.0;
    s.truncated_regime = !(s.cutoff_margin > 0.0);
    std::vector<double> bern(n, 0.0);
    parallel_for(n, P.threads, [&](std::size_t k) {
        const double q2 = s.u[k].squaredNorm();
        if (s.truncated_regime) {
            s.rho[k] = truncated_state(q2, P.phi(k), P.thresholds(k), P.spec.saturation, g).rho;
        } else {
            s.rho[k] = density_from_speed(q2, P.force[k], g);
            bern[k] = std::abs(e2 * (q2 - g.q_inf * g.q_inf) / 2.0 + enthalpy(s.rho[k], g) - e2 * P.phi(k));
        }
        s.mach[k] = mach(std::sqrt(q2), s.rho[k], g);
    });
    s.bernoulli_residual = n ? *std::max_element(bern.begin(), bern.end()) : 0.0;

    const Eigen::VectorXd head = l2_project(
        m, [&](std::size_t k) { return P.phi(k) - 0.5 * s.u[k].squaredNorm(); }, 1e-13, P.threads);
    s.grad_p = grad_all_qp(m, head, P.threads);
    for (std::size_t k = 0; k < n; ++k) s.grad_p[k] *= s.rho[k];
    return s;
}

struct CutoffCheck {
    bool removed = false;
    double margin = 0.0;
};

/// The cut-off is inactive when every quadrature-point speed is below q_lower.
inline CutoffCheck cutoff_active_check(const FlowState& s) { return {s.cutoff_margin > 0.0, s.cutoff_margin}; }

/// Weak outward mass flux through radial layer i (between node layers i and i+1), and its scale.
inline std::pair<double, double> layer_mass_flux(const ExteriorMesh& m, const FlowState& s, int layer) {
    const int nq = m.qp_per_cell();
    double flux = 0.0, scale = 0.0;
    for (int j = 0; j < m.n_t(); ++j) {
        const int c = m.cell_index(layer, j);
        for (int q = 0; q < nq; ++q) {
            const std::size_t k = std::size_t(c) * nq + q;
            // chi = 1 on node layer i, 0 on layer i+1: local nodes 0 and 3
            const Eigen::Vector2d gchi = m.qp_grad(k).col(0) + m.qp_grad(k).col(3);
            const double v = m.qp_weight(k) * s.rho[k] * s.u[k].dot(gchi);
            flux -= v;
            scale += std::abs(v);
        }
    }
    return {flux, scale};
}

// ---------------------------------------------------------------------------
// weak pressure-gradient comparison

/// Compactly supported test field w = b(x) e_component with b = (1 - |x-c|^2/s^2)^3.
struct TestField {
    Eigen::Vector2d center;
    double radius = 1.0;
    int component = 0;

    double value(const Eigen::Vector2d& x) const {
        const double z = 1.0 - (x - center).squaredNorm() / (radius * radius);
        return z > 0.0 ? z * z * z : 0.0;
    }
    Eigen::Vector2d grad(const Eigen::Vector2d& x) const {
        const double z = 1.0 - (x - center).squaredNorm() / (radius * radius);
        if (z <= 0.0) return Eigen::Vector2d::Zero();
        return -6.0 * z * z * (x - center) / (radius * radius);
    }
};

/// Seeded panel of test fields supported inside the fluid and away from the symmetry axis.
inline std::vector<TestField> make_test_panel(const ExteriorMesh& m, unsigned seed, int count = 4) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double a = m.shape().max_radius();
    std::vector<TestField> panel;
    for (int i = 0; i < count; ++i) {
        const double r = a * (2.0 + 2.0 * u01(rng));
        const double th = 0.35 + (std::numbers::pi - 0.7) * u01(rng);
        TestField t;
        t.center = Eigen::Vector2d(r * std::cos(th), r * std::sin(th));
        t.radius = std::min(0.5 * (r - a), (m.axisymmetric() ? 0.8 * t.center.y() : 0.5 * (r - a)));
        t.component = i % 2;
        panel.push_back(t);
    }
    return panel;
}

/// <grad p_eps - grad p_bar, w> = -int (u_bar (x) u_bar - rho u (x) u) : grad w + int (rho - 1) grad(phi_f) . w.
inline double weak_pressure_gap(const ExteriorMesh& m, const FlowState& s, const std::vector<ForceValue>& force,
                                const TestField& w) {
    double acc = 0.0;
    for (std::size_t k = 0; k < m.num_qp(); ++k) {
        const Eigen::Vector2d& x = m.qp_x(k);
        const double b = w.value(x);
        if (b == 0.0) continue;
        const Eigen::Vector2d gb = w.grad(x);
        const int c = w.component;
        const double flux = s.u_bar[k][c] * s.u_bar[k].dot(gb) - s.rho[k] * s.u[k][c] * s.u[k].dot(gb);
        acc += m.qp_weight(k) * (-flux + (s.rho[k] - 1.0) * force[k].grad_phi[c] * b);
    }
    return acc;
}

}  // namespace lowmach

namespace lowmach {

struct CompressibleSolution {
    CompressibleProblem problem;
    MinimizeResult minimum;
    FlowState state;
    CutoffCheck cutoff;
};

/// Force-potential samples for the cut-off saturation constant: every node and quadrature point.
inline std::vector<double> force_samples(const ForceField& force) {
    std::vector<double> phis = force.node_potentials();
    for (const auto& f : force.qp) phis.push_back(f.phi);
    return phis;
}

/// Truncated problem at gas.epsilon with the cut-off built at max(eps0, eps), minimized from phi_tilde = 0.
inline CompressibleSolution solve_compressible(const PotentialField& psi_bar, const ForceField& force,
                                               const GasModel& gas, double theta, double eps0,
                                               const MinimizeOptions& opt = {}, int threads = 1) {
    const CutoffSpec spec = make_cutoff(theta, std::max(eps0, gas.epsilon), gas, force_samples(force));
    CompressibleSolution sol;
    sol.problem = make_compressible_problem(psi_bar, force, gas, spec, threads);
    sol.minimum = minimize(sol.problem, opt);
    sol.state = flow_state(sol.problem, sol.minimum.phi_tilde);
    sol.cutoff = cutoff_active_check(sol.state);
    return sol;
}

}  // namespace lowmach
