#pragma once

// Conservative body forces F = grad(phi): none, a linear potential, or the Newtonian
// potential phi(x) = int rho_s(y)/|x-y| dy of a mass distribution inside the obstacle.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "gas_closure.hpp"
#include "geometry.hpp"
#include "numerics.hpp"
#include "parallel.hpp"

namespace lowmach {

enum class ForceKind { None, Newtonian, Analytic };

inline const char* to_string(ForceKind k) {
    switch (k) {
        case ForceKind::None: return "none";
        case ForceKind::Newtonian: return "newtonian";
        default: return "analytic";
    }
}
inline ForceKind parse_force_kind(const std::string& s) {
    if (s == "none") return ForceKind::None;
    if (s == "newtonian") return ForceKind::Newtonian;
    if (s == "analytic") return ForceKind::Analytic;
    throw ConfigError("force.kind must be 'none', 'newtonian' or 'analytic'");
}

struct ForceSpec {
    ForceKind kind = ForceKind::None;
    // newtonian: uniform ball of radius source_radius (0 = point mass) sampled on a
    // (radial, polar, azimuthal) product grid
    double mass = 0.0;
    double source_radius = 0.0;
    std::array<int, 3> source_grid{6, 8, 16};
    // analytic: phi = offset + gradient . x
    double offset = 0.0;
    Eigen::Vector2d gradient = Eigen::Vector2d::Zero();
    // declared admissibility exponents for (1 + |x|^beta) grad(phi) in L^q
    double beta = 1.2;
    double q = 4.0;

    void validate() const {
        if (kind == ForceKind::Newtonian) {
            if (!(mass >= 0.0) || !std::isfinite(mass)) throw ConfigError("force.mass must be finite and >= 0");
            if (!(source_radius >= 0.0) || !std::isfinite(source_radius))
                throw ConfigError("force.source_radius must be >= 0");
            for (int n : source_grid)
                if (n < 1 || n > 256) throw ConfigError("force.source_grid entries must be in [1,256]");
        }
        if (kind == ForceKind::Analytic && !(std::isfinite(offset) && gradient.allFinite()))
            throw ConfigError("force.gradient/offset must be finite");
        if (!std::isfinite(beta) || !std::isfinite(q)) throw ConfigError("force.beta/q must be finite");
    }
};

/// Force potential at every quadrature point and every node of a mesh.
struct ForceField {
    std::vector<ForceValue> qp;
    std::vector<ForceValue> node;
    bool zero = true;

    double phi_star() const {
        double s = 0.0;
        for (const auto& f : qp) s = std::max(s, std::abs(f.phi));
        for (const auto& f : node) s = std::max(s, std::abs(f.phi));
        return s;
    }

    std::vector<double> node_potentials() const {
        std::vector<double> v;
        v.reserve(node.size());
        for (const auto& f : node) v.push_back(f.phi);
        return v;
    }
};

struct PointMass {
    Eigen::Vector3d y;
    double m;
};

/// Mass samples of the source: one point, or a Gauss x Gauss x uniform product grid of a uniform ball.
inline std::vector<PointMass> newtonian_sources(const ForceSpec& s) {
    if (s.source_radius == 0.0) return {{Eigen::Vector3d::Zero(), s.mass}};
    const GaussRule gr = gauss_legendre(s.source_grid[0]);
    const GaussRule gm = gauss_legendre(s.source_grid[1]);
    const int nphi = s.source_grid[2];
    const double R = s.source_radius;
    const double density = s.mass / (4.0 / 3.0 * std::numbers::pi * R * R * R);
    std::vector<PointMass> out;
    for (std::size_t i = 0; i < gr.size(); ++i) {
        const double rho = R * gr.points[i];
        for (std::size_t j = 0; j < gm.size(); ++j) {
            const double mu = 2.0 * gm.points[j] - 1.0;
            const double st = std::sqrt(std::max(0.0, 1.0 - mu * mu));
            for (int k = 0; k < nphi; ++k) {
                const auto [c, sn] = detail::trig_of_fraction(k, nphi);
                // volume element rho^2 d rho d mu d phi
                const double w = density * R * gr.weights[i] * rho * rho * 2.0 * gm.weights[j] * 2.0 *
                                 std::numbers::pi / nphi;
                out.push_back({Eigen::Vector3d(rho * mu, rho * st * c, rho * st * sn), w});
            }
        }
    }
    return out;
}

/// Potential and gradient at a meridional point (x, r) by direct summation.
inline ForceValue newtonian_at(const std::vector<PointMass>& src, const Eigen::Vector2d& p) {
    const Eigen::Vector3d x(p.x(), p.y(), 0.0);
    ForceValue f;
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (const auto& s : src) {
        const Eigen::Vector3d d = x - s.y;
        const double r = d.norm();
        f.phi += s.m / r;
        g -= s.m * d / (r * r * r);
    }
    f.grad_phi = g.head<2>();
    return f;
}

inline ForceField newtonian_potential(const ForceSpec& spec, const ExteriorMesh& mesh, int threads = 1) {
    if (!mesh.axisymmetric()) throw ConfigError("force: the Newtonian potential needs axisymmetric (n = 3) mode");
    if (!(spec.source_radius < mesh.shape().min_radius()))
        throw ConfigError("force.source_radius: source overlaps the fluid domain");
    const auto src = newtonian_sources(spec);
    ForceField ff;
    ff.zero = spec.mass == 0.0;
    ff.qp.resize(mesh.num_qp());
    ff.node.resize(mesh.num_nodes());
    parallel_for(mesh.num_qp(), threads, [&](std::size_t k) { ff.qp[k] = newtonian_at(src, mesh.qp_x(k)); });
    parallel_for(std::size_t(mesh.num_nodes()), threads,
                 [&](std::size_t k) { ff.node[k] = newtonian_at(src, mesh.nodes()[k]); });
    return ff;
}

inline ForceField make_force_field(const ForceSpec& spec, const ExteriorMesh& mesh, int threads = 1) {
    spec.validate();
    switch (spec.kind) {
        case ForceKind::Newtonian: return newtonian_potential(spec, mesh, threads);
        case ForceKind::Analytic: {
            ForceField ff;
            ff.zero = spec.offset == 0.0 && spec.gradient.isZero(0.0);
            auto at = [&](const Eigen::Vector2d& x) { return ForceValue{spec.offset + spec.gradient.dot(x), spec.gradient}; };
            for (std::size_t k = 0; k < mesh.num_qp(); ++k) ff.qp.push_back(at(mesh.qp_x(k)));
            for (const auto& x : mesh.nodes()) ff.node.push_back(at(x));
            return ff;
        }
        default: {
            ForceField ff;
            ff.qp.assign(mesh.num_qp(), ForceValue{});
            ff.node.assign(mesh.num_nodes(), ForceValue{});
            return ff;
        }
    }
}

/// Decay exponent of the difference velocity allowed by a force in the (beta, q) class.
inline double beta_prime(int n, double beta, double q) { return std::min(0.5 * n, beta + n / q - 1.0); }

struct ForceAdmissibility {
    bool preconditions_ok = true;
    std::string reason;
    double phi_star = 0.0;
    double grad_decay = 0.0;  // fitted k in |grad phi| ~ r^-k on the outer shell
    double phi_decay = 0.0;
    double grad_integral_domain = 0.0;
    double grad_integral_tail = 0.0;  // +inf when divergent
    double grad_tail_exponent = 0.0;  // radial power of the tail integrand including r^(n-1)
    bool grad_condition_finite = true;
    double phi_l2_domain = 0.0;
    double phi_l2_tail = 0.0;
    bool phi_l2_finite = true;
    double beta_prime = 0.0;
    bool admissible = true;
};

namespace detail {

/// Least-squares fit log y = c - k log r over the samples; returns (k, c).
inline std::pair<double, double> fit_power_decay(const std::vector<double>& r, const std::vector<double>& y) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(y[i] > 0.0)) continue;
        const double lx = std::log(r[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) return {0.0, -std::numeric_limits<double>::infinity()};
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {-slope, (sy - slope * sx) / n};
}

/// int_R^inf C r^e dr (times the unit-sphere measure), +inf unless e < -1.
inline double power_tail(double C, double e, double R, double sphere) {
    if (C == 0.0) return 0.0;
    if (!(e < -1.0)) return std::numeric_limits<double>::infinity();
    return sphere * C * std::pow(R, e + 1.0) / (-(e + 1.0));
}

}  // namespace detail

/// Integrates the admissibility quantities on the truncated domain and extrapolates the
/// radial tail with power laws fitted on the outer half of the shell.
///
/// The verdict combines the weighted-gradient condition with boundedness of phi; the
/// L^2 norm of phi is reported separately (it is infinite for a Newtonian potential in
/// three dimensions).
inline ForceAdmissibility validate_force(const ForceField& ff, double beta, double q, const ExteriorMesh& mesh) {
    ForceAdmissibility r;
    const int n = mesh.dimension();
    r.phi_star = ff.phi_star();
    r.beta_prime = 0.5 * n;
    if (ff.zero) return r;
    if (!(q > n)) {
        r.preconditions_ok = false;
        r.reason = "q must exceed the dimension";
    } else if (!(beta > 1.0 - double(n) / q)) {
        r.preconditions_ok = false;
        r.reason = "beta must exceed 1 - n/q";
    }
    if (r.preconditions_ok) r.beta_prime = beta_prime(n, beta, q);

    const double R = mesh.R_far();
    std::vector<double> rr, gg, pp;
    for (std::size_t k = 0; k < mesh.num_qp(); ++k) {
        const double rad = mesh.qp_x(k).norm();
        const ForceValue& f = ff.qp[k];
        r.grad_integral_domain += mesh.qp_weight(k) * std::pow((1.0 + std::pow(rad, beta)) * f.grad_phi.norm(), q);
        r.phi_l2_domain += mesh.qp_weight(k) * f.phi * f.phi;
        if (rad >= 0.5 * R) {
            rr.push_back(rad);
            gg.push_back(f.grad_phi.norm());
            pp.push_back(std::abs(f.phi));
        }
    }
    const double sphere = n == 3 ? 4.0 * std::numbers::pi : 2.0 * std::numbers::pi;
    const auto [kg, cg] = detail::fit_power_decay(rr, gg);
    const auto [kp, cp] = detail::fit_power_decay(rr, pp);
    r.grad_decay = kg;
    r.phi_decay = kp;
    // (1 + r^beta)^q |grad phi|^q ~ e^{q cg} r^{q(beta - kg)}
    r.grad_tail_exponent = q * (beta - kg) + (n - 1);
    r.grad_integral_tail = detail::power_tail(std::isfinite(cg) ? std::exp(q * cg) : 0.0, r.grad_tail_exponent, R, sphere);
    r.grad_condition_finite = std::isfinite(r.grad_integral_tail) && std::isfinite(r.grad_integral_domain);
    r.phi_l2_tail = detail::power_tail(std::isfinite(cp) ? std::exp(2.0 * cp) : 0.0, -2.0 * kp + (n - 1), R, sphere);
    r.phi_l2_finite = std::isfinite(r.phi_l2_tail);
    const bool bounded = std::isfinite(r.phi_star) && kp >= 0.0;
    if (r.preconditions_ok && !r.grad_condition_finite) r.reason = "weighted gradient integral diverges";
    if (r.preconditions_ok && !bounded) r.reason = "force potential is unbounded";
    r.admissible = r.preconditions_ok && r.grad_condition_finite && bounded;
    return r;
}

}  // namespace lowmach
