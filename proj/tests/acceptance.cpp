// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lowmach/cli.hpp"
#include "lowmach/lowmach.hpp"

using namespace lowmach;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) ok = false;
        if (!detail.empty()) detail += "; ";
        detail += (cond ? "" : "!") + what;
    }
};

std::string fmt(double v, int prec = 6) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& body, double limit_s) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v.ok = false;
        v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0) v.require(secs < limit_s, "runtime " + fmt(secs, 3) + " s < " + fmt(limit_s) + " s");
    if (!v.ok) ++failures;
    std::cout << (v.ok ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << v.detail << std::endl;
}

SweepConfig sweep_config(int threads) {
    SweepConfig c;
    c.mesh.shape = ObstacleShape::sphere(1.0);
    c.mesh.R_far = 20.0;
    c.mesh.n_r = 64;
    c.mesh.n_t = 64;
    c.eps = {0.4, 0.2, 0.1, 0.05};
    c.threads = threads;
    c.seed = 42;
    c.sensitivity = true;
    return c;
}

// Independent oracle: bisection on H(rho) = gamma rho^(gamma-1)/2 + gamma/(gamma-1) (rho^(gamma-1) - 1) = level.
double bisect_critical_density(double gamma, double level) {
    auto H = [&](double r) {
        const double s = std::pow(r, gamma - 1.0);
        return gamma * s / 2.0 + gamma / (gamma - 1.0) * (s - 1.0) - level;
    };
    double lo = 1e-6, hi = 10.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (H(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

int run_cli(std::vector<std::string> args, std::string& out) {
    args.insert(args.begin(), "lowmach");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = cli::run(int(argv.size()), argv.data(), o, e);
    out = o.str() + e.str();
    return code;
}

double grad_norm2(const ExteriorMesh& m, const Eigen::VectorXd& v) {
    const auto g = grad_all_qp(m, v);
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += m.qp_weight(k) * g[k].squaredNorm();
    return s;
}

}  // namespace

int main() {
    const int threads = 2;

    report(1, "closure exactness", [] {
        Verdict v;
        const double gamma = 1.4;
        const GasModel gas{gamma, 1e-4, 1.0};
        const ForceValue f{};
        const double rho = critical_density(f, gas);
        const double level = gas.epsilon * gas.epsilon * gas.q_inf * gas.q_inf / 2.0;
        const double oracle = bisect_critical_density(gamma, level);
        const double eq = gas.epsilon * critical_speed(f, gas);
        const double eq_oracle = std::sqrt(gamma * std::pow(oracle, gamma - 1.0));
        v.require(std::abs(rho - 0.63394) <= 1e-4, "rho_cr " + fmt(rho, 8) + " vs 0.63394");
        v.require(std::abs(rho - oracle) <= 1e-10, "bisection oracle " + fmt(oracle, 10));
        v.require(std::abs(eq - 1.08012) <= 1e-4, "eps q_cr " + fmt(eq, 8) + " vs 1.08012");
        v.require(std::abs(eq - eq_oracle) <= 1e-10, "oracle " + fmt(eq_oracle, 10));
        return v;
    }, 1.0);

    report(2, "incompressible oracle", [] {
        Verdict v;
        MeshParams p;
        p.shape = ObstacleShape::sphere(1.0);
        p.R_far = 20.0;
        p.n_r = p.n_t = 64;
        const auto mesh = std::make_shared<const ExteriorMesh>(build_mesh(p));
        const PotentialField psi = solve_incompressible(mesh, 1.0);
        const double vmax = max_surface_speed(psi, 1.0), stag = stagnation_cell_speed(psi, 1.0);
        v.require(vmax >= 1.47 && vmax <= 1.53, "max surface speed " + fmt(vmax) + " in [1.47, 1.53]");
        v.require(stag < 0.05, "stagnation-cell speed " + fmt(stag) + " < 0.05");
        return v;
    }, 30.0);

    ConvergenceReport rep;
    double sweep_seconds = 0.0;
    {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            rep = sweep(sweep_config(threads));
        } catch (const std::exception& e) {
            std::cout << "sweep failed: " << e.what() << std::endl;
        }
        sweep_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    report(3, "low-Mach rates", [&] {
        Verdict v;
        v.require(rep.all_converged, "all solves converged");
        const auto slope = [&](const std::string& k) {
            const auto it = rep.slopes.find(k);
            return it == rep.slopes.end() ? std::nan("") : it->second.slope;
        };
        const double s_rho = slope("rho_dev_inf"), s_u = slope("u_diff_l2"), s_m = slope("max_mach");
        v.require(std::abs(s_rho - 2.0) <= 0.1, "rho slope " + fmt(s_rho, 4));
        v.require(std::abs(s_u - 2.0) <= 0.15, "u L2 slope " + fmt(s_u, 4));
        v.require(std::abs(s_m - 1.0) <= 0.05, "Mach slope " + fmt(s_m, 4));
        int gaps = 0;
        for (const auto& [name, fit] : rep.slopes) {
            if (name.rfind("pressure_gap_", 0) != 0) continue;
            ++gaps;
            v.require(std::abs(fit.slope - 2.0) <= 0.2, name + " slope " + fmt(fit.slope, 4));
        }
        v.require(gaps > 0, std::to_string(gaps) + " test fields");
        v.require(sweep_seconds < 600.0, "sweep incl. sensitivity " + fmt(sweep_seconds, 3) + " s < 600 s");
        return v;
    }, 0.0);

    report(4, "uniform difference bound", [&] {
        Verdict v;
        v.require(rep.rows.size() >= 2, "rows present");
        v.require(rep.u_scaled_variation < 0.25, "variation of |u-ubar|_inf/eps^2 " + fmt(rep.u_scaled_variation, 4) +
                                                     " < 0.25");
        return v;
    }, 0.0);

    report(5, "variational properties", [] {
        Verdict v;
        MeshParams p;
        p.shape = ObstacleShape::sphere(1.0);
        p.R_far = 20.0;
        p.n_r = p.n_t = 64;
        const auto mesh = std::make_shared<const ExteriorMesh>(build_mesh(p));
        const PotentialField psi = solve_incompressible(mesh, 1.0, {.threads = 2});
        const ForceField ff = make_force_field(ForceSpec{}, *mesh);
        const double eps = 0.4;
        const GasModel gas{1.4, eps, 1.0};
        const CutoffSpec spec = make_cutoff(0.7, 0.42, gas, force_samples(ff));
        const CompressibleProblem P = make_compressible_problem(psi, ff, gas, spec, 2);
        const double lam = spec.lambda_lo;
        const ExteriorMesh& m = *mesh;

        // assembled bound: |r p|^2 <= K (|grad psi|^2 + phi_f^2) integrated, C = K / lambda
        double rp2 = 0.0, psi2 = 0.0, phi2 = 0.0;
        const auto gpsi = grad_all_qp(m, psi.values);
        for (std::size_t k = 0; k < m.num_qp(); ++k) {
            rp2 += m.qp_weight(k) * (P.rbar[k] * P.pbar[k]).squaredNorm();
            psi2 += m.qp_weight(k) * gpsi[k].squaredNorm();
            phi2 += m.qp_weight(k) * ff.qp[k].phi * ff.qp[k].phi;
        }
        const double C = rp2 / (psi2 + phi2) / lam;

        auto random_field = [&](std::mt19937_64& rng, double scale) {
            std::normal_distribution<double> nd(0.0, scale);
            Eigen::VectorXd x(m.num_nodes());
            for (int i = 0; i < x.size(); ++i) x[i] = nd(rng);
            return Eigen::VectorXd(P.dofs.expand(P.dofs.restrict(x)));
        };

        std::mt19937_64 rng(42);
        std::uniform_real_distribution<double> log_amp(-3.0, 2.0);
        int convex_bad = 0, coercive_bad = 0;
        double worst_convex = 1e300;
        for (int t = 0; t < 100; ++t) {
            const double sa = std::pow(10.0, log_amp(rng)), sb = std::pow(10.0, log_amp(rng));
            const Eigen::VectorXd a = random_field(rng, sa), b = random_field(rng, sb);
            const double Ia = discrete_functional(P, a), Ib = discrete_functional(P, b);
            const double gap = Ia + Ib - 2.0 * discrete_functional(P, 0.5 * (a + b));
            const double bound = 0.5 * lam * grad_norm2(m, a - b);
            worst_convex = std::min(worst_convex, gap / bound);
            if (!(gap >= bound)) ++convex_bad;
            for (const auto* x : {&a, &b}) {
                const double I = x == &a ? Ia : Ib;
                if (!(I >= 0.5 * lam * grad_norm2(m, *x) - C * (psi2 + phi2))) ++coercive_bad;
            }
        }
        v.require(convex_bad == 0, "convexity on 100 pairs (min gap/bound " + fmt(worst_convex, 4) + ", lambda " +
                                       fmt(lam, 6) + ")");
        v.require(coercive_bad == 0, "coercivity on 200 fields (C " + fmt(C, 4) + ")");

        const Eigen::VectorXd x = random_field(rng, 0.3);
        const Eigen::VectorXd g = functional_gradient(P, x);
        double worst_fd = 0.0;
        for (int t = 0; t < 20; ++t) {
            const Eigen::VectorXd dir = random_field(rng, 1.0);
            // central differences at h and h/2, Richardson-extrapolated
            auto central = [&](double h) {
                return (discrete_functional(P, x + h * dir) - discrete_functional(P, x - h * dir)) / (2.0 * h);
            };
            const double h = 1e-5;
            const double fd = (4.0 * central(0.5 * h) - central(h)) / 3.0;
            const double an = g.dot(dir);
            worst_fd = std::max(worst_fd, std::abs(an - fd) / std::abs(an));
        }
        v.require(worst_fd <= 1e-6, "gradient vs FD on 20 directions, max rel " + fmt(worst_fd, 3));
        const double I0 = discrete_functional(P, Eigen::VectorXd::Zero(m.num_nodes()));
        v.require(I0 == 0.0, "I(0) = " + fmt(I0));
        return v;
    }, 120.0);

    report(6, "cut-off removal", [&] {
        Verdict v;
        bool all = !rep.rows.empty();
        double min_margin = 1e300;
        for (const auto& row : rep.rows) {
            all = all && row.cutoff_removed && row.cutoff_margin > 0.0;
            min_margin = std::min(min_margin, row.cutoff_margin);
        }
        v.require(all, "removed at every sweep eps, min margin " + fmt(min_margin, 4));

        const fs::path dir = fs::temp_directory_path() / "lowmach-acceptance-eps5";
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::ofstream(dir / "config.json") << R"({"geometry": {"n_r": 64, "n_t": 64, "R_far": 20}})";
        std::string out;
        const int code = run_cli({"solve-compressible", "--config", (dir / "config.json").string(), "--out",
                                  (dir / "out").string(), "--epsilon", "5", "--threads", "2"},
                                 out);
        bool removed = true;
        try {
            removed = nlohmann::json::parse(out.substr(0, out.find('\n'))).at("cutoff_removed").get<bool>();
        } catch (const std::exception&) {
        }
        fs::remove_all(dir);
        v.require(!removed, "eps=5 reports removed=false");
        v.require(code == 4, "eps=5 exit code " + std::to_string(code));
        return v;
    }, 0.0);

    report(7, "decay bounds", [&] {
        Verdict v;
        v.require(rep.decay_psi_bar.resolved && rep.decay_psi_bar.exponent >= 1.4,
                  "psi_bar exponent " + fmt(rep.decay_psi_bar.exponent, 4) + " >= 1.4");
        v.require(rep.decay_phi_tilde.resolved && rep.decay_phi_tilde.exponent >= 1.4,
                  "phi_tilde exponent " + fmt(rep.decay_phi_tilde.exponent, 4) + " >= 1.4");
        SweepConfig c = sweep_config(threads);
        c.sensitivity = false;
        c.force.kind = ForceKind::Newtonian;
        c.force.mass = 0.05;
        c.force.source_radius = 0.5;
        c.force.beta = 1.2;
        c.force.q = 4.0;
        const ConvergenceReport nr = sweep(c);
        v.require(nr.all_converged, "Newtonian sweep converged");
        v.require(std::abs(nr.beta_prime - 0.95) < 1e-12, "beta' " + fmt(nr.beta_prime));
        v.require(nr.decay_phi_tilde.resolved && nr.decay_phi_tilde.exponent >= nr.beta_prime - 0.1,
                  "Newtonian phi_tilde exponent " + fmt(nr.decay_phi_tilde.exponent, 4) + " >= 0.85");
        return v;
    }, 0.0);

    report(8, "force admissibility", [] {
        Verdict v;
        MeshParams p;
        p.shape = ObstacleShape::sphere(1.0);
        p.R_far = 20.0;
        p.n_r = p.n_t = 64;
        const ExteriorMesh m = build_mesh(p);
        ForceSpec s;
        s.kind = ForceKind::Newtonian;
        s.mass = 0.05;
        s.source_radius = 0.5;
        const ForceField ff = newtonian_potential(s, m, 2);
        const ForceAdmissibility newton = validate_force(ff, 1.2, 4.0, m);
        v.require(newton.admissible && std::abs(newton.beta_prime - 0.95) < 1e-12,
                  "Newtonian beta=1.2 q=4 admissible, beta' " + fmt(newton.beta_prime) + ", tail exponent " +
                      fmt(newton.grad_tail_exponent, 4));
        const ForceAdmissibility zero = validate_force(make_force_field(ForceSpec{}, m), 1.2, 4.0, m);
        v.require(zero.admissible && zero.grad_integral_domain == 0.0 && zero.grad_integral_tail == 0.0 &&
                      zero.phi_l2_domain == 0.0 && zero.phi_star == 0.0,
                  "zero force admissible with zero residuals");
        const ForceAdmissibility steep = validate_force(ff, 2.0, 4.0, m);
        v.require(!steep.admissible && std::isinf(steep.grad_integral_tail),
                  "beta=2 inadmissible, tail exponent " + fmt(steep.grad_tail_exponent, 4));

        ForceSpec ball = s;
        ball.source_grid = {8, 12, 24};
        const auto src = newtonian_sources(ball);
        double worst = 0.0;
        for (std::size_t k = 0; k < m.num_qp(); k += 97) {
            const Eigen::Vector2d x = m.qp_x(k);
            const double r = x.norm();
            const ForceValue f = newtonian_at(src, x);
            worst = std::max(worst, std::abs(f.phi - s.mass / r) / (s.mass / r));
            worst = std::max(worst, (f.grad_phi + s.mass * x / (r * r * r)).norm() / (s.mass / (r * r)));
        }
        v.require(worst <= 1e-4, "shell theorem max rel deviation " + fmt(worst, 3));
        return v;
    }, 0.0);

    report(9, "robustness and determinism", [&] {
        Verdict v;
        v.require(rep.sensitivity.size() == 2, std::to_string(rep.sensitivity.size()) + " sensitivity runs");
        for (const auto& d : rep.sensitivity)
            v.require(d.ok && d.max_delta < 0.1, d.label + " max slope change " + fmt(d.max_delta, 3));
        const ConvergenceReport again = sweep(sweep_config(threads));
        std::ostringstream a, b;
        write_report_csv(rep, a);
        write_report_csv(again, b);
        v.require(a.str() == b.str() && report_json(rep).dump() == report_json(again).dump(),
                  "rerun byte-identical at " + std::to_string(threads) + " threads, seed 42");
        return v;
    }, 0.0);

    std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
