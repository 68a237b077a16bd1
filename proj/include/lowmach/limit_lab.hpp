#pragma once

// eps-sweeps of the compressible solver: norms, log-log rates, decay profiles and
// sensitivity to the far-field radius and the mesh.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "compressible.hpp"
#include "errors.hpp"
#include "force.hpp"
#include "geometry.hpp"
#include "incompressible.hpp"

namespace lowmach {

namespace detail {
inline bool same_value(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }
}  // namespace detail

// ---------------------------------------------------------------------------
// rate fitting

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double ci95 = std::numeric_limits<double>::quiet_NaN();  // half-width of the 95% slope interval; NaN for 2 points
    int points = 0;

    bool valid() const { return std::isfinite(slope); }
    friend bool operator==(const RateFit& a, const RateFit& b) {
        return detail::same_value(a.slope, b.slope) && detail::same_value(a.intercept, b.intercept) &&
               detail::same_value(a.r2, b.r2) && detail::same_value(a.ci95, b.ci95) && a.points == b.points;
    }
};

/// Least squares log(value) = intercept + slope log(eps).
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 2) throw InputError("fit_rate: at least two (eps, value) pairs are required");
    const int n = int(pairs.size());
    double sx = 0, sy = 0;
    for (const auto& [e, v] : pairs) {
        if (!(e > 0.0) || !(v > 0.0) || !std::isfinite(e) || !std::isfinite(v))
            throw InputError("fit_rate: eps and value must be positive and finite");
        sx += std::log(e);
        sy += std::log(v);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [e, v] : pairs) {
        const double dx = std::log(e) - mx, dy = std::log(v) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw InputError("fit_rate: eps values must not all coincide");
    RateFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    const double sse = std::max(0.0, syy - f.slope * sxy);
    f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    if (n > 2) {
        const boost::math::students_t dist(n - 2);
        f.ci95 = boost::math::quantile(boost::math::complement(dist, 0.025)) * std::sqrt(sse / (n - 2) / sxx);
    }
    return f;
}

// ---------------------------------------------------------------------------
// decay along a ray

struct DecayFit {
    bool resolved = false;
    double exponent = std::numeric_limits<double>::quiet_NaN();  // k in |field| ~ (1 + r)^-k
    double r2 = std::numeric_limits<double>::quiet_NaN();
    double r_lo = 0.0, r_hi = 0.0;
    int samples = 0;

    friend bool operator==(const DecayFit& a, const DecayFit& b) {
        return a.resolved == b.resolved && detail::same_value(a.exponent, b.exponent) && detail::same_value(a.r2, b.r2) &&
               a.r_lo == b.r_lo && a.r_hi == b.r_hi && a.samples == b.samples;
    }
};

/// Default fit window (2a, 0.8 R_far) with a the largest obstacle radius.
inline std::pair<double, double> default_decay_window(const ExteriorMesh& m) {
    return {2.0 * m.shape().max_radius(), 0.8 * m.R_far()};
}

/// Fits |grad(nodal)| along the ray at polar angle theta on geometric samples of the window.
inline DecayFit decay_fit(const ExteriorMesh& m, const Eigen::VectorXd& nodal, std::pair<double, double> window,
                          double theta = std::numbers::pi / 2, int samples = 24) {
    const auto [lo, hi] = window;
    if (!(lo > m.shape().max_radius() && hi <= m.R_far() && lo < hi))
        throw InputError("decay_fit: window must lie inside the fluid shell");
    if (samples < 3) throw InputError("decay_fit: need at least 3 samples");
    DecayFit fit;
    fit.r_lo = lo;
    fit.r_hi = hi;
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < samples; ++i) {
        const double r = lo * std::pow(hi / lo, double(i) / (samples - 1));
        const auto [c, xi, eta] = m.locate(m.w_at_radius(r, theta), theta);
        const double g = grad_at(m, nodal, c, xi, eta).norm();
        if (g > 0.0 && std::isfinite(g)) pairs.emplace_back(1.0 + r, g);
    }
    fit.samples = int(pairs.size());
    // values at roundoff level are not a profile
    double gmax = 0.0;
    for (const auto& pr : pairs) gmax = std::max(gmax, pr.second);
    if (fit.samples < 3 || gmax < 1e-13) return fit;
    const RateFit rf = fit_rate(pairs);
    fit.resolved = true;
    fit.exponent = -rf.slope;
    fit.r2 = rf.r2;
    return fit;
}

// ---------------------------------------------------------------------------
// sweep

struct RateTolerances {
    double rho = 0.1;
    double u_l2 = 0.15;
    double mach = 0.05;
    double gap = 0.2;
    friend bool operator==(const RateTolerances&, const RateTolerances&) = default;
};

struct SweepConfig {
    MeshParams mesh;
    double gamma = 1.4;
    double q_inf = 1.0;
    double theta = 0.7;
    double eps0 = 0.42;
    ForceSpec force;
    MinimizeOptions solver;
    std::vector<double> eps{0.4, 0.2, 0.1, 0.05};
    RateTolerances tolerances;
    unsigned seed = 42;
    int panel_size = 4;
    int threads = 1;
    bool sensitivity = true;
};

struct SweepRow {
    double eps = 0.0;
    bool converged = false;
    std::string error;  // empty when the solve succeeded
    int iterations = 0;
    int backtracks = 0;
    bool roundoff_floor = false;
    double u_diff_l2 = 0.0;
    double u_diff_inf = 0.0;
    double u_diff_inf_scaled = 0.0;  // u_diff_inf / eps^2
    double rho_dev_inf = 0.0;
    double max_mach = 0.0;
    std::vector<double> pressure_gap;  // one per panel field
    double cutoff_margin = 0.0;
    bool cutoff_removed = false;
    double energy = 0.0;          // int |grad phi_tilde|^2
    double grad_tilde_inf = 0.0;  // max |grad phi_tilde| at quadrature points
    double bernoulli_residual = 0.0;
    double functional_value = 0.0;

    friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SensitivityDelta {
    std::string label;  // "R_far x2" or "refined"
    std::map<std::string, double> slope_delta;
    double max_delta = 0.0;
    bool ok = false;  // every headline slope moved < 0.1
    friend bool operator==(const SensitivityDelta&, const SensitivityDelta&) = default;
};

struct ConvergenceReport {
    static constexpr int schema_version = 1;
    std::string mode;  // "axisymmetric-3d" or "planar-2d-outside-theory"
    std::vector<double> eps;
    std::vector<SweepRow> rows;
    std::map<std::string, RateFit> slopes;
    DecayFit decay_psi_bar;
    DecayFit decay_phi_tilde;  // at the smallest eps
    double beta_prime = 0.0;
    double eps_c_estimate = 0.0;           // largest eps with the cut-off removed; 0 if none
    double u_scaled_variation = 0.0;       // relative spread of u_diff_inf / eps^2 over the two smallest eps
    bool u_scaled_bounded = false;         // variation < 25%
    bool energy_bounded = false;           // max energy <= 2 x energy at the largest eps
    bool all_converged = false;
    std::vector<SensitivityDelta> sensitivity;

    friend bool operator==(const ConvergenceReport&, const ConvergenceReport&) = default;
};

/// Slope names whose values are asserted against RateTolerances.
inline std::vector<std::string> headline_slopes(const ConvergenceReport& r) {
    std::vector<std::string> names{"rho_dev_inf", "u_diff_l2", "max_mach"};
    for (const auto& [name, fit] : r.slopes)
        if (name.rfind("pressure_gap_", 0) == 0) names.push_back(name);
    return names;
}

namespace detail {

inline SweepRow sweep_row(const PotentialField& psi, const ForceField& force, const SweepConfig& cfg, double eps,
                          const std::vector<TestField>& panel, Eigen::VectorXd* phi_tilde_out = nullptr) {
    SweepRow row;
    row.eps = eps;
    const ExteriorMesh& m = *psi.mesh;
    try {
        const GasModel gas{cfg.gamma, eps, cfg.q_inf};
        const CompressibleSolution sol = solve_compressible(psi, force, gas, cfg.theta, cfg.eps0, cfg.solver, cfg.threads);
        const FlowState& st = sol.state;
        row.converged = sol.minimum.converged;
        row.iterations = sol.minimum.iterations;
        for (int b : sol.minimum.backtracks) row.backtracks += b;
        row.roundoff_floor = sol.minimum.roundoff_floor;
        row.functional_value = sol.minimum.value_history.back();
        const auto d = grad_all_qp(m, sol.minimum.phi_tilde.values, cfg.threads);
        double l2 = 0.0;
        for (std::size_t k = 0; k < st.u.size(); ++k) {
            const double du = (st.u[k] - st.u_bar[k]).norm();
            l2 += m.qp_weight(k) * du * du;
            row.u_diff_inf = std::max(row.u_diff_inf, du);
            row.energy += m.qp_weight(k) * d[k].squaredNorm();
            row.grad_tilde_inf = std::max(row.grad_tilde_inf, d[k].norm());
        }
        row.u_diff_l2 = std::sqrt(l2);
        row.u_diff_inf_scaled = row.u_diff_inf / (eps * eps);
        row.rho_dev_inf = st.rho_deviation_inf();
        row.max_mach = st.max_mach();
        for (const auto& w : panel) row.pressure_gap.push_back(weak_pressure_gap(m, st, force.qp, w));
        row.cutoff_margin = sol.cutoff.margin;
        row.cutoff_removed = sol.cutoff.removed;
        row.bernoulli_residual = st.bernoulli_residual;
        if (phi_tilde_out) *phi_tilde_out = sol.minimum.phi_tilde.values;
    } catch (const SolverError& e) {
        row.error = e.what();
    } catch (const ConfigError& e) {
        row.error = e.what();
    } catch (const DomainError& e) {
        row.error = e.what();
    }
    return row;
}

inline std::optional<RateFit> slope_of(const std::vector<SweepRow>& rows, auto&& value) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& r : rows) {
        if (!r.error.empty() || !r.converged) continue;
        const double v = std::abs(value(r));
        if (v > 0.0 && std::isfinite(v)) pairs.emplace_back(r.eps, v);
    }
    if (pairs.size() < 4) return std::nullopt;
    return fit_rate(pairs);
}

inline ConvergenceReport sweep_single(const SweepConfig& cfg, const MeshParams& params) {
    if (cfg.eps.empty()) throw ConfigError("sweep.eps must not be empty");
    for (std::size_t i = 0; i < cfg.eps.size(); ++i) {
        if (!(cfg.eps[i] > 0.0) || !std::isfinite(cfg.eps[i])) throw ConfigError("sweep.eps entries must be > 0");
        if (i > 0 && !(cfg.eps[i] < cfg.eps[i - 1])) throw ConfigError("sweep.eps must be strictly decreasing");
    }
    const MeshPtr mesh = std::make_shared<const ExteriorMesh>(build_mesh(params));
    IncompressibleOptions iopt;
    iopt.threads = cfg.threads;
    const PotentialField psi = solve_incompressible(mesh, cfg.q_inf, iopt);
    const ForceField force = make_force_field(cfg.force, *mesh, cfg.threads);
    const auto panel = make_test_panel(*mesh, cfg.seed, cfg.panel_size);

    ConvergenceReport rep;
    rep.mode = mesh->axisymmetric() ? "axisymmetric-3d" : "planar-2d-outside-theory";
    rep.eps = cfg.eps;
    Eigen::VectorXd smallest;  // phi_tilde of the smallest successful eps
    for (double e : cfg.eps) {
        Eigen::VectorXd phi;
        rep.rows.push_back(sweep_row(psi, force, cfg, e, panel, &phi));
        if (rep.rows.back().error.empty()) smallest = phi;
    }

    auto put = [&](const std::string& name, auto&& fn) {
        if (auto f = slope_of(rep.rows, fn)) rep.slopes[name] = *f;
    };
    put("rho_dev_inf", [](const SweepRow& r) { return r.rho_dev_inf; });
    put("u_diff_l2", [](const SweepRow& r) { return r.u_diff_l2; });
    put("u_diff_inf", [](const SweepRow& r) { return r.u_diff_inf; });
    put("max_mach", [](const SweepRow& r) { return r.max_mach; });
    for (std::size_t j = 0; j < panel.size(); ++j)
        put("pressure_gap_" + std::to_string(j), [j](const SweepRow& r) {
            return j < r.pressure_gap.size() ? r.pressure_gap[j] : 0.0;
        });

    rep.all_converged = std::all_of(rep.rows.begin(), rep.rows.end(), [](const SweepRow& r) { return r.error.empty() && r.converged; });
    for (const auto& r : rep.rows)
        if (r.error.empty() && r.cutoff_removed) rep.eps_c_estimate = std::max(rep.eps_c_estimate, r.eps);

    const std::size_t n = rep.rows.size();
    if (n >= 2 && rep.rows[n - 1].error.empty() && rep.rows[n - 2].error.empty()) {
        const double a = rep.rows[n - 1].u_diff_inf_scaled, b = rep.rows[n - 2].u_diff_inf_scaled;
        rep.u_scaled_variation = std::abs(a - b) / std::max(a, b);
        rep.u_scaled_bounded = rep.u_scaled_variation < 0.25;
    }
    if (rep.rows[0].error.empty()) {
        double emax = 0.0;
        for (const auto& r : rep.rows) emax = std::max(emax, r.energy);
        rep.energy_bounded = emax <= 2.0 * rep.rows[0].energy;
    }

    const auto window = default_decay_window(*mesh);
    rep.decay_psi_bar = decay_fit(*mesh, psi.values, window);
    rep.beta_prime = cfg.force.kind == ForceKind::None || force.zero
                         ? 0.5 * mesh->dimension()
                         : beta_prime(mesh->dimension(), cfg.force.beta, cfg.force.q);
    if (smallest.size()) rep.decay_phi_tilde = decay_fit(*mesh, smallest, window);
    return rep;
}

}  // namespace detail

/// Runs the sweep on cfg.mesh and, when cfg.sensitivity is set, again with R_far doubled and
/// with one refinement, reporting the movement of every headline slope.
inline ConvergenceReport sweep(const SweepConfig& cfg) {
    ConvergenceReport rep = detail::sweep_single(cfg, cfg.mesh);
    if (!cfg.sensitivity) return rep;
    MeshParams far = cfg.mesh;
    far.R_far *= 2.0;
    for (const auto& [label, params] : {std::pair<std::string, MeshParams>{"R_far x2", far}, {"refined", cfg.mesh.refined()}}) {
        const ConvergenceReport alt = detail::sweep_single(cfg, params);
        SensitivityDelta d;
        d.label = label;
        d.ok = true;
        for (const auto& name : headline_slopes(rep)) {
            const auto a = std::as_const(rep.slopes).find(name), b = alt.slopes.find(name);
            const double delta = (a != rep.slopes.end() && b != alt.slopes.end())
                                     ? std::abs(a->second.slope - b->second.slope)
                                     : std::numeric_limits<double>::infinity();
            d.slope_delta[name] = delta;
            d.max_delta = std::max(d.max_delta, delta);
            d.ok = d.ok && delta < 0.1;
        }
        rep.sensitivity.push_back(d);
    }
    return rep;
}

struct RateCheck {
    std::string name;
    double slope = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool ok = false;
};

/// Headline slopes against their expected values: 2 for rho, u (L2) and the pressure gaps, 1 for the Mach number.
inline std::vector<RateCheck> check_rates(const ConvergenceReport& rep, const RateTolerances& tol) {
    std::vector<RateCheck> out;
    for (const auto& name : headline_slopes(rep)) {
        RateCheck c;
        c.name = name;
        if (name == "rho_dev_inf") c = {name, 0.0, 2.0, tol.rho};
        else if (name == "u_diff_l2") c = {name, 0.0, 2.0, tol.u_l2};
        else if (name == "max_mach") c = {name, 0.0, 1.0, tol.mach};
        else c = {name, 0.0, 2.0, tol.gap};
        const auto it = rep.slopes.find(name);
        c.slope = it != rep.slopes.end() ? it->second.slope : std::numeric_limits<double>::quiet_NaN();
        c.ok = std::abs(c.slope - c.expected) <= c.tolerance;
        out.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// report output

/// One row per eps. Numbers are written with 17 significant digits.
inline void write_report_csv(const ConvergenceReport& rep, std::ostream& os) {
    os << "# lowmach-report v" << ConvergenceReport::schema_version << " mode=" << rep.mode << "\n";
    os << "eps,converged,error,iterations,backtracks,roundoff_floor,u_diff_l2,u_diff_inf,u_diff_inf_scaled,"
          "rho_dev_inf,max_mach,cutoff_margin,cutoff_removed,energy,grad_tilde_inf,bernoulli_residual,functional";
    const std::size_t ngap = rep.rows.empty() ? 0 : rep.rows[0].pressure_gap.size();
    for (std::size_t j = 0; j < ngap; ++j) os << ",pressure_gap_" << j;
    for (const auto& name : headline_slopes(rep)) os << ",slope_" << name;
    os << "\n";
    for (const auto& r : rep.rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        os << format_double(r.eps) << ',' << int(r.converged) << ',' << err << ',' << r.iterations << ',' << r.backtracks
           << ',' << int(r.roundoff_floor) << ',' << format_double(r.u_diff_l2) << ',' << format_double(r.u_diff_inf) << ','
           << format_double(r.u_diff_inf_scaled) << ',' << format_double(r.rho_dev_inf) << ','
           << format_double(r.max_mach) << ',' << format_double(r.cutoff_margin) << ',' << int(r.cutoff_removed) << ','
           << format_double(r.energy) << ',' << format_double(r.grad_tilde_inf) << ','
           << format_double(r.bernoulli_residual) << ',' << format_double(r.functional_value);
        for (std::size_t j = 0; j < ngap; ++j) os << ',' << (j < r.pressure_gap.size() ? format_double(r.pressure_gap[j]) : "");
        for (const auto& name : headline_slopes(rep)) {
            const auto it = rep.slopes.find(name);
            os << ',' << (it != rep.slopes.end() ? format_double(it->second.slope) : "nan");
        }
        os << "\n";
    }
}

namespace detail {

// JSON has no NaN/inf; they travel as null
inline nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
inline double num(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
inline double num_inf(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline nlohmann::json to_json(const RateFit& f) {
    return {{"slope", num(f.slope)}, {"intercept", num(f.intercept)}, {"r2", num(f.r2)}, {"ci95", num(f.ci95)}, {"points", f.points}};
}
inline RateFit rate_from_json(const nlohmann::json& j) {
    return {num(j.at("slope")), num(j.at("intercept")), num(j.at("r2")), num(j.at("ci95")), j.at("points").get<int>()};
}
inline nlohmann::json to_json(const DecayFit& f) {
    return {{"resolved", f.resolved}, {"exponent", num(f.exponent)}, {"r2", num(f.r2)},
            {"r_lo", f.r_lo},         {"r_hi", f.r_hi},               {"samples", f.samples}};
}
inline DecayFit decay_from_json(const nlohmann::json& j) {
    return {j.at("resolved").get<bool>(), num(j.at("exponent")), num(j.at("r2")),
            j.at("r_lo").get<double>(),   j.at("r_hi").get<double>(), j.at("samples").get<int>()};
}

}  // namespace detail

inline nlohmann::json report_json(const ConvergenceReport& rep) {
    using detail::num;
    using detail::to_json;
    nlohmann::json j;
    j["schema"] = "lowmach-report";
    j["version"] = ConvergenceReport::schema_version;
    j["mode"] = rep.mode;
    j["eps"] = rep.eps;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        nlohmann::json gaps = nlohmann::json::array();
        for (double g : r.pressure_gap) gaps.push_back(num(g));
        rows.push_back({{"eps", r.eps},
                        {"converged", r.converged},
                        {"error", r.error},
                        {"iterations", r.iterations},
                        {"backtracks", r.backtracks},
                        {"roundoff_floor", r.roundoff_floor},
                        {"u_diff_l2", num(r.u_diff_l2)},
                        {"u_diff_inf", num(r.u_diff_inf)},
                        {"u_diff_inf_scaled", num(r.u_diff_inf_scaled)},
                        {"rho_dev_inf", num(r.rho_dev_inf)},
                        {"max_mach", num(r.max_mach)},
                        {"pressure_gap", gaps},
                        {"cutoff_margin", num(r.cutoff_margin)},
                        {"cutoff_removed", r.cutoff_removed},
                        {"energy", num(r.energy)},
                        {"grad_tilde_inf", num(r.grad_tilde_inf)},
                        {"bernoulli_residual", num(r.bernoulli_residual)},
                        {"functional", num(r.functional_value)}});
    }
    j["rows"] = rows;
    nlohmann::json slopes = nlohmann::json::object();
    for (const auto& [name, f] : rep.slopes) slopes[name] = to_json(f);
    j["slopes"] = slopes;
    j["decay_psi_bar"] = to_json(rep.decay_psi_bar);
    j["decay_phi_tilde"] = to_json(rep.decay_phi_tilde);
    j["beta_prime"] = rep.beta_prime;
    j["eps_c_estimate"] = rep.eps_c_estimate;
    j["u_scaled_variation"] = num(rep.u_scaled_variation);
    j["u_scaled_bounded"] = rep.u_scaled_bounded;
    j["energy_bounded"] = rep.energy_bounded;
    j["all_converged"] = rep.all_converged;
    nlohmann::json sens = nlohmann::json::array();
    for (const auto& d : rep.sensitivity) {
        nlohmann::json deltas = nlohmann::json::object();
        for (const auto& [name, v] : d.slope_delta) deltas[name] = num(v);
        sens.push_back({{"label", d.label}, {"slope_delta", deltas}, {"max_delta", num(d.max_delta)}, {"ok", d.ok}});
    }
    j["sensitivity"] = sens;
    return j;
}

inline ConvergenceReport report_from_json(const nlohmann::json& j) {
    using detail::num;
    try {
        if (j.at("schema").get<std::string>() != "lowmach-report" || j.at("version").get<int>() != ConvergenceReport::schema_version)
            throw InputError("report: unknown schema or version");
        ConvergenceReport rep;
        rep.mode = j.at("mode").get<std::string>();
        rep.eps = j.at("eps").get<std::vector<double>>();
        for (const auto& r : j.at("rows")) {
            SweepRow row;
            row.eps = r.at("eps").get<double>();
            row.converged = r.at("converged").get<bool>();
            row.error = r.at("error").get<std::string>();
            row.iterations = r.at("iterations").get<int>();
            row.backtracks = r.at("backtracks").get<int>();
            row.roundoff_floor = r.at("roundoff_floor").get<bool>();
            row.u_diff_l2 = num(r.at("u_diff_l2"));
            row.u_diff_inf = num(r.at("u_diff_inf"));
            row.u_diff_inf_scaled = num(r.at("u_diff_inf_scaled"));
            row.rho_dev_inf = num(r.at("rho_dev_inf"));
            row.max_mach = num(r.at("max_mach"));
            for (const auto& g : r.at("pressure_gap")) row.pressure_gap.push_back(num(g));
            row.cutoff_margin = num(r.at("cutoff_margin"));
            row.cutoff_removed = r.at("cutoff_removed").get<bool>();
            row.energy = num(r.at("energy"));
            row.grad_tilde_inf = num(r.at("grad_tilde_inf"));
            row.bernoulli_residual = num(r.at("bernoulli_residual"));
            row.functional_value = num(r.at("functional"));
            rep.rows.push_back(row);
        }
        for (const auto& [name, f] : j.at("slopes").items()) rep.slopes[name] = detail::rate_from_json(f);
        rep.decay_psi_bar = detail::decay_from_json(j.at("decay_psi_bar"));
        rep.decay_phi_tilde = detail::decay_from_json(j.at("decay_phi_tilde"));
        rep.beta_prime = j.at("beta_prime").get<double>();
        rep.eps_c_estimate = j.at("eps_c_estimate").get<double>();
        rep.u_scaled_variation = num(j.at("u_scaled_variation"));
        rep.u_scaled_bounded = j.at("u_scaled_bounded").get<bool>();
        rep.energy_bounded = j.at("energy_bounded").get<bool>();
        rep.all_converged = j.at("all_converged").get<bool>();
        for (const auto& s : j.at("sensitivity")) {
            SensitivityDelta d;
            d.label = s.at("label").get<std::string>();
            for (const auto& [name, v] : s.at("slope_delta").items()) d.slope_delta[name] = detail::num_inf(v);
            d.max_delta = detail::num_inf(s.at("max_delta"));
            d.ok = s.at("ok").get<bool>();
            rep.sensitivity.push_back(d);
        }
        return rep;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("report: malformed JSON: ") + e.what());
    }
}

}  // namespace lowmach
