#pragma once

// Isentropic gamma-law closure in the eps-scaled variables.
//
// Pressure law p(rho) = rho^gamma, enthalpy h(rho) = int_1^rho p'(s)/s ds
// (so h(1) = 0), Bernoulli level eps^2 (q_inf^2 - |u|^2)/2 + eps^2 phi.
// Everything in this header is a pure function of its arguments.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numerics.hpp"

namespace lowmach {

struct GasModel {
    double gamma = 1.4;
    double epsilon = 0.1;
    double q_inf = 1.0;

    void validate() const {
        if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ConfigError("gas.gamma must be >= 1");
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("gas.epsilon must be > 0");
        if (!(q_inf > 0.0) || !std::isfinite(q_inf)) throw ConfigError("gas.q_inf must be > 0");
    }

    bool isothermal() const noexcept { return gamma == 1.0; }

    double pressure(double rho) const { return std::pow(rho, gamma); }
    double pressure_d1(double rho) const { return gamma * std::pow(rho, gamma - 1.0); }
    double pressure_d2(double rho) const {
        return isothermal() ? 0.0 : gamma * (gamma - 1.0) * std::pow(rho, gamma - 2.0);
    }

    /// Infimum of the enthalpy range (-inf for gamma = 1).
    double enthalpy_floor() const {
        return isothermal() ? -std::numeric_limits<double>::infinity() : -gamma / (gamma - 1.0);
    }

    GasModel with_epsilon(double eps) const {
        GasModel g = *this;
        g.epsilon = eps;
        return g;
    }
};

/// Checks p' > 0 and 2p' + rho p'' > 0 on a logarithmic density grid.
inline bool pressure_law_admissible(const GasModel& gas, double rho_min = 1e-3, double rho_max = 1e3,
                                    int samples = 400) {
    for (int i = 0; i <= samples; ++i) {
        const double rho = rho_min * std::pow(rho_max / rho_min, double(i) / samples);
        if (!(gas.pressure_d1(rho) > 0.0)) return false;
        if (!(2.0 * gas.pressure_d1(rho) + rho * gas.pressure_d2(rho) > 0.0)) return false;
    }
    return true;
}

/// Conservative body-force potential and its gradient in the computational plane.
struct ForceValue {
    double phi = 0.0;
    Eigen::Vector2d grad_phi = Eigen::Vector2d::Zero();
};

// ---------------------------------------------------------------------------
// enthalpy and its inverse

inline double enthalpy(double rho, const GasModel& gas) {
    if (!(rho > 0.0)) throw DomainError("enthalpy: density must be positive");
    if (gas.isothermal()) return std::log(rho);
    const double gm1 = gas.gamma - 1.0;
    return gas.gamma / gm1 * std::expm1(gm1 * std::log(rho));
}

inline double enthalpy_derivative(double rho, const GasModel& gas) {
    return gas.pressure_d1(rho) / rho;
}

inline double enthalpy_inv(double y, const GasModel& gas) {
    if (gas.isothermal()) {
        if (!std::isfinite(y)) throw DomainError("enthalpy_inv: non-finite argument");
        return std::exp(y);
    }
    if (!(y > gas.enthalpy_floor())) {
        std::ostringstream os;
        os << "enthalpy_inv: argument " << y << " below the enthalpy range infimum " << gas.enthalpy_floor();
        throw DomainError(os.str());
    }
    const double gm1 = gas.gamma - 1.0;
    return std::exp(std::log1p(gm1 / gas.gamma * y) / gm1);
}

/// d(h^-1)/dy = rho / p'(rho) at rho = h^-1(y).
inline double enthalpy_inv_derivative(double y, const GasModel& gas) {
    const double rho = enthalpy_inv(y, gas);
    return rho / gas.pressure_d1(rho);
}

/// (h^-1(eps^2 s) - 1) / eps^2 by the integral form s * int_0^1 (h^-1)'(t eps^2 s) dt.
inline double enthalpy_inv_excess(double s, const GasModel& gas) {
    const double e2 = gas.epsilon * gas.epsilon;
    const auto& rule = gauss8();
    double acc = 0.0;
    for (std::size_t k = 0; k < rule.size(); ++k)
        acc += rule.weights[k] * enthalpy_inv_derivative(rule.points[k] * e2 * s, gas);
    return s * acc;
}

// ---------------------------------------------------------------------------
// Bernoulli density, Mach number, critical state

inline double bernoulli_level(double q2, const ForceValue& f, const GasModel& gas) {
    const double e2 = gas.epsilon * gas.epsilon;
    return e2 * (gas.q_inf * gas.q_inf - q2) / 2.0 + e2 * f.phi;
}

inline double density_from_speed(double q2, const ForceValue& f, const GasModel& gas) {
    const double y = bernoulli_level(q2, f, gas);
    if (!(y > gas.enthalpy_floor())) {
        std::ostringstream os;
        os << "density_from_speed: Bernoulli level out of range (vacuum) at q^2 = " << q2;
        throw DomainError(os.str());
    }
    return enthalpy_inv(y, gas);
}

inline double mach(double q, double rho, const GasModel& gas) {
    if (q < 0.0 || !(rho > 0.0)) throw DomainError("mach: need q >= 0 and rho > 0");
    return gas.epsilon * q / std::sqrt(gas.pressure_d1(rho));
}

/// H(rho) = p'(rho)/2 + h(rho); strictly increasing under the pressure-law conditions.
inline double sonic_level(double rho, const GasModel& gas) {
    return gas.pressure_d1(rho) / 2.0 + enthalpy(rho, gas);
}

inline double sonic_level_inv(double level, const GasModel& gas) {
    if (!(level > gas.enthalpy_floor()))
        throw ConfigError("sonic_level_inv: level below the range of H (epsilon too large for this phi)");
    double lo = 1.0, hi = 1.0;
    while (sonic_level(lo, gas) > level) lo *= 0.5;
    while (sonic_level(hi, gas) < level) hi *= 2.0;
    auto fdf = [&](double rho) {
        const double d = gas.pressure_d2(rho) / 2.0 + enthalpy_derivative(rho, gas);
        return std::pair{sonic_level(rho, gas) - level, d};
    };
    return solve_increasing(fdf, lo, hi);
}

inline double critical_density(const ForceValue& f, const GasModel& gas) {
    const double e2 = gas.epsilon * gas.epsilon;
    const double level = e2 * gas.q_inf * gas.q_inf / 2.0 + e2 * f.phi;
    if (!(level > gas.enthalpy_floor())) throw ConfigError("critical_density: epsilon too large for this phi");
    return sonic_level_inv(level, gas);
}

inline double critical_speed(const ForceValue& f, const GasModel& gas) {
    return std::sqrt(gas.pressure_d1(critical_density(f, gas))) / gas.epsilon;
}

/// Speed at which the local Mach number equals theta on the subsonic branch.
inline double theta_speed(double theta, const ForceValue& f, const GasModel& gas) {
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("theta_speed: theta must lie in (0,1)");
    const double q_cr = critical_speed(f, gas);
    const double e2 = gas.epsilon * gas.epsilon;
    auto fdf = [&](double q) {
        const double rho = density_from_speed(q * q, f, gas);
        const double c2 = gas.pressure_d1(rho);
        const double c = std::sqrt(c2);
        const double drho_dq = -e2 * q * rho / c2;
        const double dc_dq = gas.pressure_d2(rho) / (2.0 * c) * drho_dq;
        const double m = gas.epsilon * q / c;
        return std::pair{m - theta, gas.epsilon / c - m / c * dc_dq};
    };
    return solve_increasing(fdf, 0.0, q_cr);
}

/// d(q_theta^2)/d(phi), eps-independent: theta^2 k / (1 + theta^2 k / 2), k = rho p''/p'.
inline double theta_speed2_dphi(double theta, double q_theta, const ForceValue& f, const GasModel& gas) {
    const double rho = density_from_speed(q_theta * q_theta, f, gas);
    const double k = rho * gas.pressure_d2(rho) / gas.pressure_d1(rho);
    return theta * theta * k / (1.0 + theta * theta * k / 2.0);
}

// ---------------------------------------------------------------------------
// Phase-plane cut-off

/// Squared-speed thresholds of the cut-off at one force-potential value.
struct CutoffThresholds {
    double lower2 = 0.0;  ///< identity branch ends here
    double upper2 = 0.0;  ///< saturation starts here
    double dlower2_dphi = 0.0;
    double dupper2_dphi = 0.0;
};

struct CutoffValue {
    double value = 0.0;     ///< q-hat
    double d_lambda = 0.0;  ///< d q-hat / d(q^2)
    double d_phi = 0.0;     ///< d q-hat / d phi
};

/// Cubic Hermite bridge in t = (q^2 - L)/(U - L): q-hat = c0 + c1 t + c2 t^2 + c3 t^3.
struct HermiteBridge {
    std::array<double, 4> coeffs{};
};

struct CutoffSpec {
    double theta = 0.8;
    double eps0 = 0.5;
    double gamma = 1.4;
    double q_inf = 1.0;
    double phi_star = 0.0;
    double eps_star = 0.5;    ///< grid argmin of theta_speed over (0, eps0]
    double q_lower = 0.0;     ///< at phi = 0
    double q_upper = 0.0;     ///< at phi = 0
    double saturation = 0.0;  ///< constant value of q-hat past q_upper
    HermiteBridge blend;      ///< at phi = 0
    std::vector<double> eps_grid;
    // ellipticity constants of the truncated coefficients
    double lambda_lo = 0.0;
    double lambda_hi = 0.0;
    double b_bound = 0.0;

    GasModel gas_at(double eps) const { return GasModel{gamma, eps, q_inf}; }

    CutoffThresholds thresholds(double phi) const {
        const GasModel g = gas_at(eps_star);
        const ForceValue f{phi, Eigen::Vector2d::Zero()};
        const double mid = 0.5 * (theta + 1.0);
        const double ql = theta_speed(theta, f, g);
        const double qu = theta_speed(mid, f, g);
        return {ql * ql, qu * qu, theta_speed2_dphi(theta, ql, f, g), theta_speed2_dphi(mid, qu, f, g)};
    }
};

inline CutoffValue cutoff_q(double q2, double phi, const CutoffThresholds& thr, double saturation) {
    const double L = thr.lower2, U = thr.upper2;
    if (q2 <= L) return {q2 - 2.0 * phi, 1.0, -2.0};
    if (q2 >= U) return {saturation, 0.0, 0.0};
    const double h = U - L;
    const double t = (q2 - L) / h;
    const double t2 = t * t, t3 = t2 * t;
    // Hermite basis
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2;
    const double d00 = 6 * t2 - 6 * t, d10 = 3 * t2 - 4 * t + 1, d01 = -6 * t2 + 6 * t;
    const double y0 = L - 2.0 * phi;  // value at L, slope 1; value S at U, slope 0
    const double value = h00 * y0 + h10 * h + h01 * saturation;
    const double dvalue_dt = d00 * y0 + d10 * h + d01 * saturation;
    const double dL = thr.dlower2_dphi, dU = thr.dupper2_dphi;
    const double dt_dphi = ((t - 1.0) * dL - t * dU) / h;
    const double d_phi = h00 * (dL - 2.0) + dvalue_dt * dt_dphi + h10 * (dU - dL);
    return {value, dvalue_dt / h, d_phi};
}

inline CutoffValue cutoff_q(double q2, const ForceValue& f, const CutoffSpec& spec) {
    return cutoff_q(q2, f.phi, spec.thresholds(f.phi), spec.saturation);
}

inline HermiteBridge hermite_bridge(const CutoffThresholds& thr, double phi, double saturation) {
    const double h = thr.upper2 - thr.lower2;
    const double y0 = thr.lower2 - 2.0 * phi;
    // expand y0 h00 + h h10 + S h01 in powers of t
    return {{y0, h, -3 * y0 - 2 * h + 3 * saturation, 2 * y0 + h - 2 * saturation}};
}

/// Truncated density and the quantities the discretization needs at one state.
struct TruncatedState {
    double rho = 1.0;     ///< rho-hat
    double excess = 0.0;  ///< (rho-hat - 1) / eps^2, eps-stable
    CutoffValue qhat;
};

inline TruncatedState truncated_state(double q2, double phi, const CutoffThresholds& thr, double saturation,
                                      const GasModel& gas) {
    TruncatedState st;
    st.qhat = cutoff_q(q2, phi, thr, saturation);
    const double s = (gas.q_inf * gas.q_inf - st.qhat.value) / 2.0;
    const double y = gas.epsilon * gas.epsilon * s;
    if (!(y > gas.enthalpy_floor())) {
        std::ostringstream os;
        os << "truncated_density: epsilon = " << gas.epsilon
           << " pushes the saturated Bernoulli level out of the enthalpy range";
        throw ConfigError(os.str());
    }
    st.rho = enthalpy_inv(y, gas);
    st.excess = enthalpy_inv_excess(s, gas);
    return st;
}

inline double truncated_density(double q2, const ForceValue& f, const GasModel& gas, const CutoffSpec& spec) {
    return truncated_state(q2, f.phi, spec.thresholds(f.phi), spec.saturation, gas).rho;
}

/// Two-sided a-priori density bound (H^-1(-phi*), h^-1(q_inf^2/2 + phi*)].
struct DensityBounds {
    double lower = 0.0;
    double upper = 0.0;
};

inline DensityBounds density_bounds(const GasModel& gas, double phi_star) {
    return {sonic_level_inv(-phi_star, gas), enthalpy_inv(gas.q_inf * gas.q_inf / 2.0 + phi_star, gas)};
}

/// G(Lambda, phi) = 1/2 int_0^Lambda rho-hat(lambda, phi) d lambda, piecewise 64-point Gauss.
inline double energy_density_G(double lambda, double phi, const CutoffThresholds& thr, double saturation,
                               const GasModel& gas) {
    if (lambda < 0.0) throw DomainError("energy_density_G: Lambda must be >= 0");
    static const GaussRule rule = gauss_legendre(64);
    std::array<double, 4> cuts{0.0, std::min(lambda, thr.lower2), std::min(lambda, thr.upper2), lambda};
    double total = 0.0;
    for (int piece = 0; piece < 3; ++piece) {
        const double a = cuts[piece], b = cuts[piece + 1];
        if (b <= a) continue;
        double acc = 0.0;
        for (std::size_t k = 0; k < rule.size(); ++k)
            acc += rule.weights[k] * truncated_state(a + (b - a) * rule.points[k], phi, thr, saturation, gas).rho;
        total += (b - a) * acc;
    }
    return 0.5 * total;
}

inline double energy_density_G(double lambda, const ForceValue& f, const GasModel& gas, const CutoffSpec& spec) {
    return energy_density_G(lambda, f.phi, spec.thresholds(f.phi), spec.saturation, gas);
}

template <int Dim>
struct EllipticCoefficients {
    Eigen::Matrix<double, Dim, Dim> a;
    Eigen::Matrix<double, Dim, 1> b;
    double lambda_lo = 0.0;
    double lambda_hi = 0.0;
};

/// a_ij = rho(delta_ij - eps^2 qhat_L p_i p_j / p'(rho)),  b_i = eps^2 rho qhat_phi d_i phi / p'(rho).
template <int Dim>
EllipticCoefficients<Dim> elliptic_coeffs(const Eigen::Matrix<double, Dim, 1>& grad, double phi,
                                          const Eigen::Matrix<double, Dim, 1>& grad_force,
                                          const CutoffThresholds& thr, const CutoffSpec& spec,
                                          const GasModel& gas) {
    const TruncatedState st = truncated_state(grad.squaredNorm(), phi, thr, spec.saturation, gas);
    const double e2 = gas.epsilon * gas.epsilon;
    const double c2 = gas.pressure_d1(st.rho);
    EllipticCoefficients<Dim> out;
    out.a = st.rho * (Eigen::Matrix<double, Dim, Dim>::Identity() - (e2 * st.qhat.d_lambda / c2) * grad * grad.transpose());
    out.b = (e2 * st.rho * st.qhat.d_phi / c2) * grad_force;
    out.lambda_lo = spec.lambda_lo;
    out.lambda_hi = spec.lambda_hi;
    return out;
}

template <int Dim>
EllipticCoefficients<Dim> elliptic_coeffs(const Eigen::Matrix<double, Dim, 1>& grad, const ForceValue& f,
                                          const Eigen::Matrix<double, Dim, 1>& grad_force,
                                          const CutoffSpec& spec, const GasModel& gas) {
    return elliptic_coeffs<Dim>(grad, f.phi, grad_force, spec.thresholds(f.phi), spec, gas);
}

// ---------------------------------------------------------------------------
// construction of the cut-off

namespace detail {

inline std::vector<double> epsilon_grid(double eps0, int n = 64) {
    std::vector<double> grid(n);
    for (int k = 0; k < n; ++k) grid[k] = eps0 * std::pow(10.0, -3.0 * (n - 1 - k) / (n - 1));
    return grid;  // increasing, last entry eps0
}

inline std::size_t grid_argmin_theta_speed(double theta, double phi, const GasModel& base,
                                           const std::vector<double>& grid) {
    std::size_t best = 0;
    double best_q = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double q = theta_speed(theta, ForceValue{phi, {}}, base.with_epsilon(grid[k]));
        if (q < best_q) {
            best_q = q;
            best = k;
        }
    }
    return best;
}

}  // namespace detail

/// True when q_theta^eps(phi) is non-increasing along the eps grid (so the inf sits at eps0).
inline bool theta_speed_monotone(double theta, double phi, const GasModel& base, const std::vector<double>& grid) {
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : grid) {
        const double q = theta_speed(theta, ForceValue{phi, {}}, base.with_epsilon(eps));
        if (q > prev * (1.0 + 1e-12)) return false;
        prev = q;
    }
    return true;
}

/// Scans (eps grid) x (phi samples) x (Lambda grid) for the ellipticity constants of a-hat and b-hat.
inline void compute_ellipticity_bounds(CutoffSpec& spec, int lambda_samples = 1000) {
    const std::array<double, 5> phis{-spec.phi_star, -0.5 * spec.phi_star, 0.0, 0.5 * spec.phi_star, spec.phi_star};
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, cb = 0.0;
    for (double phi : phis) {
        const CutoffThresholds thr = spec.thresholds(phi);
        const double top = 1.05 * thr.upper2;
        for (double eps : spec.eps_grid) {
            const GasModel g = spec.gas_at(eps);
            for (int i = 0; i <= lambda_samples; ++i) {
                const double lam = top * i / lambda_samples;
                const CutoffValue qh = cutoff_q(lam, phi, thr, spec.saturation);
                const double rho = enthalpy_inv(eps * eps * (g.q_inf * g.q_inf - qh.value) / 2.0, g);
                const double c2 = g.pressure_d1(rho);
                const double radial = rho * (1.0 - eps * eps * qh.d_lambda * lam / c2);
                lo = std::min({lo, rho, radial});
                hi = std::max({hi, rho, radial});
                cb = std::max(cb, eps * eps * rho * std::abs(qh.d_phi) / c2);
            }
        }
    }
    // grid resolution pad
    spec.lambda_lo = lo * (1.0 - 1e-3);
    spec.lambda_hi = hi * (1.0 + 1e-3);
    spec.b_bound = cb * (1.0 + 1e-3);
}

/// Builds the cut-off for (theta, eps0) given the force-potential values present on the active domain.
///
/// The infimum over eps in (0, eps0) is taken on a 64-point geometric grid; the saturation
/// constant is the max over the supplied samples of q_upper^2(phi) - 2 phi.
inline CutoffSpec make_cutoff(double theta, double eps0, const GasModel& gas, std::span<const double> phi_samples = {}) {
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("cutoff.theta must lie in (0,1)");
    if (!(eps0 > 0.0) || !std::isfinite(eps0)) throw ConfigError("cutoff.eps0 must be > 0");
    CutoffSpec spec;
    spec.theta = theta;
    spec.eps0 = eps0;
    spec.gamma = gas.gamma;
    spec.q_inf = gas.q_inf;
    spec.eps_grid = detail::epsilon_grid(eps0);

    double phi_min = 0.0, phi_max = 0.0;
    for (double p : phi_samples) {
        phi_min = std::min(phi_min, p);
        phi_max = std::max(phi_max, p);
    }
    spec.phi_star = std::max(std::abs(phi_min), std::abs(phi_max));

    const double mid = 0.5 * (theta + 1.0);
    std::size_t arg = detail::grid_argmin_theta_speed(theta, 0.0, gas, spec.eps_grid);
    for (double phi : {phi_min, phi_max}) {
        for (double th : {theta, mid}) {
            if (!theta_speed_monotone(th, phi, gas, spec.eps_grid) ||
                detail::grid_argmin_theta_speed(th, phi, gas, spec.eps_grid) != arg)
                throw ConfigError("cutoff: infimum of theta_speed over eps is not attained at a common grid point");
        }
    }
    spec.eps_star = spec.eps_grid[arg];

    const CutoffThresholds thr0 = spec.thresholds(0.0);
    spec.q_lower = std::sqrt(thr0.lower2);
    spec.q_upper = std::sqrt(thr0.upper2);

    // d(q_upper^2)/d(phi) < 2, so q_upper^2 - 2 phi is decreasing and the sup sits at phi_min
    double sat = thr0.upper2;
    for (double p : {phi_min, phi_max}) {
        const CutoffThresholds t = spec.thresholds(p);
        sat = std::max(sat, t.upper2 - 2.0 * p);
    }
    spec.saturation = sat;
    spec.blend = hermite_bridge(thr0, 0.0, sat);

    compute_ellipticity_bounds(spec);
    if (!(spec.lambda_lo > 0.0))
        throw ConfigError("cutoff: (theta, eps0) do not give a uniformly elliptic truncated problem");
    return spec;
}

}  // namespace lowmach
