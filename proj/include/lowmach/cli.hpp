#pragma once

// Command-line front end. Exit codes: 0 ok, 2 config, 3 solver, 4 cut-off not removed,
// 5 rate assertion failed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "compressible.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "force.hpp"
#include "geometry.hpp"
#include "incompressible.hpp"
#include "io.hpp"
#include "limit_lab.hpp"

namespace lowmach::cli {

enum ExitCode : int { Ok = 0, ConfigFailure = 2, SolverFailure = 3, CutoffActive = 4, RateFailure = 5 };

struct Options {
    std::string command;
    std::string config_path;
    std::string out_dir;  // overrides output.directory
    int threads = 1;
    std::optional<unsigned> seed;
    double epsilon = 0.0;
    bool assert_rates = false;
};

namespace detail {

namespace fs = std::filesystem;

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("output: cannot write '" + p.string() + "'");
    os << text;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Epsilon as it appears in file names: shortest round-trip decimal.
inline std::string eps_tag(double eps) { return nlohmann::json(eps).dump(); }

struct Run {
    RunConfig cfg;
    std::string hash;
    fs::path dir;
    int threads = 1;
};

inline Run prepare(const Options& o) {
    Run r;
    r.cfg = load_config(o.config_path);
    if (o.seed) r.cfg.seed = *o.seed;
    if (!o.out_dir.empty()) r.cfg.output_directory = o.out_dir;
    if (o.threads < 1) throw ConfigError("--threads must be >= 1");
    r.threads = o.threads;
    r.hash = config_hash(r.cfg);
    r.dir = fs::path(r.cfg.output_directory) / r.hash;
    std::error_code ec;
    fs::create_directories(r.dir, ec);
    if (ec) throw ConfigError("output.directory: cannot create '" + r.dir.string() + "'");
    write_text(r.dir / "config.json", canonical_json(r.cfg).dump(2) + "\n");
    return r;
}

inline MeshPtr make_mesh(const Run& r) { return std::make_shared<const ExteriorMesh>(build_mesh(r.cfg.geometry)); }

inline PotentialField solve_psi(const Run& r, const MeshPtr& mesh) {
    IncompressibleOptions opt;
    opt.far_field = r.cfg.far_field;
    opt.tol = r.cfg.tol;
    opt.threads = r.threads;
    return solve_incompressible(mesh, r.cfg.q_inf, opt);
}

inline std::string field_text(const PotentialField& f, const std::string& hash) {
    std::ostringstream os;
    write_field(os, f, hash);
    return os.str();
}

inline int cmd_solve_incompressible(const Options& o, std::ostream& out) {
    const Run r = prepare(o);
    const MeshPtr mesh = make_mesh(r);
    const PotentialField psi = solve_psi(r, mesh);
    write_text(r.dir / "psi_bar.field", field_text(psi, r.hash));
    std::ostringstream csv;
    csv << "# lowmach-surface v1 hash=" << r.hash << "\ntheta,x,r,speed,tangential\n";
    for (const auto& s : surface_profile(psi, r.cfg.q_inf))
        csv << format_double(s.theta) << ',' << format_double(s.x.x()) << ',' << format_double(s.x.y()) << ','
            << format_double(s.speed) << ',' << format_double(s.tangential) << '\n';
    write_text(r.dir / "surface.csv", csv.str());
    const nlohmann::json summary = {{"command", "solve-incompressible"},
                                    {"config_hash", r.hash},
                                    {"residual", psi.residual},
                                    {"iterations", psi.iterations},
                                    {"nodes", mesh->num_nodes()},
                                    {"max_surface_speed", max_surface_speed(psi, r.cfg.q_inf)},
                                    {"stagnation_cell_speed", stagnation_cell_speed(psi, r.cfg.q_inf)},
                                    {"normal_orientation", ExteriorMesh::normal_orientation}};
    write_text(r.dir / "summary_incompressible.json", summary.dump() + "\n");
    out << summary.dump() << "\n";
    return psi.residual < r.cfg.tol ? Ok : SolverFailure;
}

inline int cmd_solve_compressible(const Options& o, std::ostream& out) {
    if (!(o.epsilon > 0.0) || !std::isfinite(o.epsilon)) throw ConfigError("--epsilon must be > 0");
    const Run r = prepare(o);
    const MeshPtr mesh = make_mesh(r);
    const fs::path psi_path = r.dir / "psi_bar.field";
    std::optional<PotentialField> psi;
    bool reused = false;
    if (fs::exists(psi_path)) {
        std::ifstream in(psi_path);
        try {
            psi = read_field(in, mesh);
            reused = true;
        } catch (const InputError&) {
            psi.reset();  // stale or foreign dump: recompute
        }
    }
    if (!psi) {
        psi = solve_psi(r, mesh);
        write_text(psi_path, field_text(*psi, r.hash));
    }
    const ForceField force = make_force_field(r.cfg.force, *mesh, r.threads);
    const CompressibleSolution sol = solve_compressible(*psi, force, r.cfg.gas(o.epsilon), r.cfg.theta, r.cfg.eps0,
                                                        r.cfg.minimize_options(), r.threads);
    const std::string tag = eps_tag(o.epsilon);
    write_text(r.dir / ("phi_tilde_eps" + tag + ".field"), field_text(sol.minimum.phi_tilde, r.hash));
    std::ostringstream flow;
    write_flow(flow, *mesh, sol.state, r.hash);
    nlohmann::json summary = flow_summary(sol, r.hash);
    summary["command"] = "solve-compressible";
    summary["incompressible"] = reused ? "reused existing psi_bar dump" : "computed (no prerequisite dump found)";
    flow << "# summary " << summary.dump() << "\n";
    write_text(r.dir / ("flow_eps" + tag + ".txt"), flow.str());
    write_text(r.dir / ("summary_compressible_eps" + tag + ".json"), summary.dump() + "\n");
    out << summary.dump() << "\n";
    return sol.cutoff.removed ? Ok : CutoffActive;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
    const Run r = prepare(o);
    if (r.cfg.sweep_eps.empty()) throw ConfigError("sweep.eps must not be empty");
    const ConvergenceReport rep = sweep(r.cfg.sweep_config(r.threads));
    nlohmann::json j = report_json(rep);
    j["config_hash"] = r.hash;
    const auto checks = check_rates(rep, r.cfg.rate_tolerances);
    nlohmann::json verdicts = nlohmann::json::array();
    bool rates_ok = true;
    for (const auto& c : checks) {
        verdicts.push_back({{"name", c.name},
                            {"slope", ::lowmach::detail::num(c.slope)},
                            {"expected", c.expected},
                            {"tolerance", c.tolerance},
                            {"ok", c.ok}});
        rates_ok = rates_ok && c.ok;
    }
    j["rate_checks"] = verdicts;
    if (r.cfg.wants("csv")) {
        std::ostringstream csv;
        csv << "# hash=" << r.hash << "\n";
        write_report_csv(rep, csv);
        write_text(r.dir / "report.csv", csv.str());
    }
    if (r.cfg.wants("json")) write_text(r.dir / "report.json", j.dump(2) + "\n");
    out << "sweep: " << rep.rows.size() << " eps values, all converged: " << (rep.all_converged ? "yes" : "no")
        << ", rates " << (rates_ok ? "within" : "outside") << " tolerance\n";
    if (!rep.all_converged) return SolverFailure;
    if (o.assert_rates && !rates_ok) return RateFailure;
    return Ok;
}

inline int cmd_validate_force(const Options& o, std::ostream& out) {
    const Run r = prepare(o);
    const MeshPtr mesh = make_mesh(r);
    const ForceField ff = make_force_field(r.cfg.force, *mesh, r.threads);
    const ForceAdmissibility a = validate_force(ff, r.cfg.force.beta, r.cfg.force.q, *mesh);
    using ::lowmach::detail::num;
    const nlohmann::json j = {{"command", "validate-force"},
                              {"config_hash", r.hash},
                              {"kind", to_string(r.cfg.force.kind)},
                              {"beta", r.cfg.force.beta},
                              {"q", r.cfg.force.q},
                              {"preconditions_ok", a.preconditions_ok},
                              {"reason", a.reason},
                              {"phi_star", num(a.phi_star)},
                              {"grad_decay", num(a.grad_decay)},
                              {"phi_decay", num(a.phi_decay)},
                              {"grad_integral_domain", num(a.grad_integral_domain)},
                              {"grad_integral_tail", num(a.grad_integral_tail)},
                              {"grad_tail_exponent", num(a.grad_tail_exponent)},
                              {"grad_condition_finite", a.grad_condition_finite},
                              {"phi_l2_domain", num(a.phi_l2_domain)},
                              {"phi_l2_tail", num(a.phi_l2_tail)},
                              {"phi_l2_finite", a.phi_l2_finite},
                              {"beta_prime", num(a.beta_prime)},
                              {"admissible", a.admissible}};
    write_text(r.dir / "force_verdict.json", j.dump(2) + "\n");
    out << j.dump() << "\n";
    return Ok;
}

inline int cmd_dump_mesh(const Options& o, std::ostream& out) {
    const Run r = prepare(o);
    const ExteriorMesh m = build_mesh(r.cfg.geometry);
    std::ostringstream os;
    write_mesh(os, m);
    write_text(r.dir / "mesh.txt", os.str());
    out << "mesh: " << m.num_nodes() << " nodes, " << m.num_cells() << " cells -> " << (r.dir / "mesh.txt").string() << "\n";
    return Ok;
}

}  // namespace detail

/// Parses arguments and runs one subcommand. Errors are reported on `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"lowmach: low Mach number limit of steady potential flow past an obstacle"};
    app.require_subcommand(1);
    Options o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON run configuration")->required();
        sub->add_option("--out", o.out_dir, "output root (overrides output.directory)");
        sub->add_option("--threads", o.threads, "worker threads for assembly")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "seed for the test-field panel (overrides config seed)");
    };
    auto* inc = app.add_subcommand("solve-incompressible", "solve for the incompressible potential");
    auto* com = app.add_subcommand("solve-compressible", "minimize the difference functional at one eps");
    auto* swp = app.add_subcommand("sweep", "eps sweep with rate fits");
    auto* vf = app.add_subcommand("validate-force", "admissibility of the configured force");
    auto* dm = app.add_subcommand("dump-mesh", "write the mesh");
    for (auto* s : {inc, com, swp, vf, dm}) common(s);
    com->add_option("--epsilon", o.epsilon, "compressibility parameter")->required();
    swp->add_flag("--assert-rates", o.assert_rates, "exit 5 unless every headline slope is within tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return Ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return ConfigFailure;
    }
    try {
        if (inc->parsed()) return detail::cmd_solve_incompressible(o, out);
        if (com->parsed()) return detail::cmd_solve_compressible(o, out);
        if (swp->parsed()) return detail::cmd_sweep(o, out);
        if (vf->parsed()) return detail::cmd_validate_force(o, out);
        return detail::cmd_dump_mesh(o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return ConfigFailure;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return ConfigFailure;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << "\n";
        return SolverFailure;
    } catch (const DomainError& e) {
        err << "solver error: " << e.what() << "\n";
        return SolverFailure;
    }
}

}  // namespace lowmach::cli
