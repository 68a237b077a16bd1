#pragma once

// Run configuration: strict JSON (unknown keys and wrong types are errors naming the
// field), range validation, and the FNV-1a content hash that names output directories.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "fem.hpp"
#include "force.hpp"
#include "geometry.hpp"
#include "limit_lab.hpp"

namespace lowmach {

struct RunConfig {
    MeshParams geometry;
    double gamma = 1.4;
    double q_inf = 1.0;
    double theta = 0.7;
    double eps0 = 0.42;
    ForceSpec force;
    double tol = 1e-10;
    int max_newton = 50;
    int max_backtracks = 40;
    FarFieldBC far_field = FarFieldBC::Dirichlet;
    std::vector<double> sweep_eps{0.4, 0.2, 0.1, 0.05};
    RateTolerances rate_tolerances;
    int panel_size = 4;
    bool sensitivity = true;
    std::string output_directory = "lowmach-out";
    std::vector<std::string> formats{"csv", "json"};
    unsigned seed = 42;

    GasModel gas(double eps) const { return GasModel{gamma, eps, q_inf}; }

    MinimizeOptions minimize_options() const {
        MinimizeOptions o;
        o.tol = tol;
        o.max_newton = max_newton;
        o.max_backtracks = max_backtracks;
        return o;
    }

    SweepConfig sweep_config(int threads) const {
        SweepConfig s;
        s.mesh = geometry;
        s.gamma = gamma;
        s.q_inf = q_inf;
        s.theta = theta;
        s.eps0 = eps0;
        s.force = force;
        s.solver = minimize_options();
        s.eps = sweep_eps;
        s.tolerances = rate_tolerances;
        s.seed = seed;
        s.panel_size = panel_size;
        s.threads = threads;
        s.sensitivity = sensitivity;
        return s;
    }

    bool wants(const std::string& format) const {
        for (const auto& f : formats)
            if (f == format) return true;
        return false;
    }
};

namespace detail {

class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
    }

    /// Rejects keys outside `allowed`.
    void only(std::initializer_list<const char*> allowed) const {
        for (const auto& [key, value] : j_.items()) {
            bool ok = false;
            for (const char* a : allowed) ok = ok || key == a;
            if (!ok) throw ConfigError("unknown key '" + join(key) + "'");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    ConfigReader section(const char* key) const { return ConfigReader(j_.at(key), join(key)); }

    void get(const char* key, double& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ConfigError(join(key) + ": expected a number");
        out = v.get<double>();
    }
    void get(const char* key, int& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer()) throw ConfigError(join(key) + ": expected an integer");
        const auto x = v.get<std::int64_t>();
        if (x < -(1LL << 31) || x >= (1LL << 31)) throw ConfigError(join(key) + ": integer out of range");
        out = int(x);
    }
    void get(const char* key, unsigned& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0 || v.get<std::int64_t>() > 0xffffffffLL)
            throw ConfigError(join(key) + ": expected a non-negative 32-bit integer");
        out = unsigned(v.get<std::int64_t>());
    }
    void get(const char* key, bool& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ConfigError(join(key) + ": expected true or false");
        out = v.get<bool>();
    }
    void get(const char* key, std::string& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ConfigError(join(key) + ": expected a string");
        out = v.get<std::string>();
    }
    void get(const char* key, std::vector<double>& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(join(key) + ": expected an array of numbers");
        out.clear();
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError(join(key) + ": expected an array of numbers");
            out.push_back(x.get<double>());
        }
    }
    void get(const char* key, std::vector<std::string>& out) const {
        if (!has(key)) return;
        const auto& v = j_.at(key);
        if (!v.is_array()) throw ConfigError(join(key) + ": expected an array of strings");
        out.clear();
        for (const auto& x : v) {
            if (!x.is_string()) throw ConfigError(join(key) + ": expected an array of strings");
            out.push_back(x.get<std::string>());
        }
    }

    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const nlohmann::json& j_;
    std::string path_;
};

}  // namespace detail

/// Range checks that need no mesh; messages name the offending field.
inline void validate(const RunConfig& c) {
    validate(c.geometry);
    if (!(c.gamma >= 1.0) || !std::isfinite(c.gamma)) throw ConfigError("gas.gamma must be >= 1");
    if (!(c.q_inf > 0.0) || !std::isfinite(c.q_inf)) throw ConfigError("gas.q_inf must be > 0");
    if (!(c.theta > 0.0 && c.theta < 1.0)) throw ConfigError("cutoff.theta must lie in (0,1)");
    if (!(c.eps0 > 0.0 && c.eps0 < 1.0)) throw ConfigError("cutoff.eps0 must lie in (0,1)");
    c.force.validate();
    if (c.force.kind == ForceKind::Newtonian && c.geometry.mode != DimensionMode::Axisymmetric)
        throw ConfigError("force.kind: the Newtonian potential needs axisymmetric mode");
    if (c.force.kind == ForceKind::Newtonian && !(c.force.source_radius < c.geometry.shape.min_radius()))
        throw ConfigError("force.source_radius: source overlaps the fluid domain");
    if (!(c.tol > 0.0 && c.tol < 1.0)) throw ConfigError("solver.tol must lie in (0,1)");
    if (c.max_newton < 1) throw ConfigError("solver.max_newton must be >= 1");
    if (c.max_backtracks < 0) throw ConfigError("solver.max_backtracks must be >= 0");
    for (std::size_t i = 0; i < c.sweep_eps.size(); ++i) {
        if (!(c.sweep_eps[i] > 0.0) || !std::isfinite(c.sweep_eps[i])) throw ConfigError("sweep.eps entries must be > 0");
        if (i > 0 && !(c.sweep_eps[i] < c.sweep_eps[i - 1])) throw ConfigError("sweep.eps must be strictly decreasing");
    }
    for (double t : {c.rate_tolerances.rho, c.rate_tolerances.u_l2, c.rate_tolerances.mach, c.rate_tolerances.gap})
        if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("sweep.rate_tolerances entries must be > 0");
    if (c.panel_size < 1 || c.panel_size > 64) throw ConfigError("sweep.panel_size must be in [1,64]");
    if (c.output_directory.empty()) throw ConfigError("output.directory must not be empty");
    for (const auto& f : c.formats)
        if (f != "csv" && f != "json") throw ConfigError("output.formats: unknown format '" + f + "'");
}

inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig c;
    const detail::ConfigReader root(j, "");
    root.only({"geometry", "gas", "cutoff", "force", "solver", "sweep", "output", "seed"});
    root.get("seed", c.seed);
    if (root.has("geometry")) {
        const auto g = root.section("geometry");
        g.only({"kind", "radius", "axes", "R_far", "n_r", "n_t", "grading", "mode", "quadrature_order"});
        std::string kind = "sphere", mode;
        g.get("kind", kind);
        c.geometry.shape.kind = parse_shape(kind);
        // sphere and disk default to their own mode
        c.geometry.mode = c.geometry.shape.kind == ShapeKind::Disk ? DimensionMode::Planar : DimensionMode::Axisymmetric;
        g.get("mode", mode);
        if (!mode.empty()) c.geometry.mode = parse_mode(mode);
        double radius = 1.0;
        g.get("radius", radius);
        c.geometry.shape.a = c.geometry.shape.b = radius;
        if (g.has("axes")) {
            if (c.geometry.shape.kind != ShapeKind::Ellipse) throw ConfigError("geometry.axes: only an ellipse has axes");
            if (g.has("radius")) throw ConfigError("geometry.radius: give either radius or axes for an ellipse");
            std::vector<double> axes;
            g.get("axes", axes);
            if (axes.size() != 2) throw ConfigError("geometry.axes: expected [a, b]");
            c.geometry.shape.a = axes[0];
            c.geometry.shape.b = axes[1];
        }
        g.get("R_far", c.geometry.R_far);
        g.get("n_r", c.geometry.n_r);
        g.get("n_t", c.geometry.n_t);
        g.get("grading", c.geometry.grading);
        g.get("quadrature_order", c.geometry.quad_order);
    }
    if (root.has("gas")) {
        const auto g = root.section("gas");
        g.only({"gamma", "q_inf"});
        g.get("gamma", c.gamma);
        g.get("q_inf", c.q_inf);
    }
    if (root.has("cutoff")) {
        const auto g = root.section("cutoff");
        g.only({"theta", "eps0"});
        g.get("theta", c.theta);
        g.get("eps0", c.eps0);
    }
    if (root.has("force")) {
        const auto g = root.section("force");
        g.only({"kind", "mass", "source_radius", "source_grid", "offset", "gradient", "beta", "q"});
        std::string kind = "none";
        g.get("kind", kind);
        c.force.kind = parse_force_kind(kind);
        g.get("mass", c.force.mass);
        g.get("source_radius", c.force.source_radius);
        if (g.has("source_grid")) {
            std::vector<double> grid;
            g.get("source_grid", grid);
            if (grid.size() != 3) throw ConfigError("force.source_grid: expected three integers");
            for (int i = 0; i < 3; ++i) {
                if (grid[i] != std::floor(grid[i])) throw ConfigError("force.source_grid: expected three integers");
                c.force.source_grid[i] = int(grid[i]);
            }
        }
        g.get("offset", c.force.offset);
        if (g.has("gradient")) {
            std::vector<double> grad;
            g.get("gradient", grad);
            if (grad.size() != 2) throw ConfigError("force.gradient: expected [gx, gr]");
            c.force.gradient = Eigen::Vector2d(grad[0], grad[1]);
        }
        g.get("beta", c.force.beta);
        g.get("q", c.force.q);
    }
    if (root.has("solver")) {
        const auto g = root.section("solver");
        g.only({"tol", "max_newton", "max_backtracks", "far_field"});
        g.get("tol", c.tol);
        g.get("max_newton", c.max_newton);
        g.get("max_backtracks", c.max_backtracks);
        std::string ff;
        g.get("far_field", ff);
        if (!ff.empty()) c.far_field = parse_far_field(ff);
    }
    if (root.has("sweep")) {
        const auto g = root.section("sweep");
        g.only({"eps", "rate_tolerances", "panel_size", "sensitivity"});
        g.get("eps", c.sweep_eps);
        g.get("panel_size", c.panel_size);
        g.get("sensitivity", c.sensitivity);
        if (g.has("rate_tolerances")) {
            const auto t = g.section("rate_tolerances");
            t.only({"rho", "u_l2", "mach", "gap"});
            t.get("rho", c.rate_tolerances.rho);
            t.get("u_l2", c.rate_tolerances.u_l2);
            t.get("mach", c.rate_tolerances.mach);
            t.get("gap", c.rate_tolerances.gap);
        }
    }
    if (root.has("output")) {
        const auto g = root.section("output");
        g.only({"directory", "formats"});
        g.get("directory", c.output_directory);
        g.get("formats", c.formats);
    }
    validate(c);
    return c;
}

inline RunConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/false);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Normalized form with every default filled in; the output section is left out.
inline nlohmann::json canonical_json(const RunConfig& c) {
    nlohmann::json j;
    j["geometry"] = {{"kind", to_string(c.geometry.shape.kind)},
                     {"axes", {c.geometry.shape.a, c.geometry.shape.b}},
                     {"R_far", c.geometry.R_far},
                     {"n_r", c.geometry.n_r},
                     {"n_t", c.geometry.n_t},
                     {"grading", c.geometry.grading},
                     {"mode", to_string(c.geometry.mode)},
                     {"quadrature_order", c.geometry.quad_order}};
    j["gas"] = {{"gamma", c.gamma}, {"q_inf", c.q_inf}};
    j["cutoff"] = {{"theta", c.theta}, {"eps0", c.eps0}};
    j["force"] = {{"kind", to_string(c.force.kind)},
                  {"mass", c.force.mass},
                  {"source_radius", c.force.source_radius},
                  {"source_grid", c.force.source_grid},
                  {"offset", c.force.offset},
                  {"gradient", {c.force.gradient.x(), c.force.gradient.y()}},
                  {"beta", c.force.beta},
                  {"q", c.force.q}};
    j["solver"] = {{"tol", c.tol},
                   {"max_newton", c.max_newton},
                   {"max_backtracks", c.max_backtracks},
                   {"far_field", to_string(c.far_field)}};
    j["sweep"] = {{"eps", c.sweep_eps},
                  {"rate_tolerances",
                   {{"rho", c.rate_tolerances.rho},
                    {"u_l2", c.rate_tolerances.u_l2},
                    {"mach", c.rate_tolerances.mach},
                    {"gap", c.rate_tolerances.gap}}},
                  {"panel_size", c.panel_size},
                  {"sensitivity", c.sensitivity}};
    j["seed"] = c.seed;
    return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const RunConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(c).dump())));
    return buf;
}

}  // namespace lowmach
