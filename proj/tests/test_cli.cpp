#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "lowmach/cli.hpp"

using namespace lowmach;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("lowmach-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                            "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const fs::path& dir, const std::string& text, const std::string& name = "config.json") {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p.string();
}

int run(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
    args.insert(args.begin(), "lowmach");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = cli::run(int(argv.size()), argv.data(), o, e);
    if (out) *out = o.str();
    if (err) *err = e.str();
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kSmall = R"({"geometry": {"n_r": 16, "n_t": 16}, "sweep": {"sensitivity": false}})";

}  // namespace

TEST(Config, Defaults) {
    const RunConfig c = parse_config_text("{}");
    EXPECT_EQ(c.geometry.shape.kind, ShapeKind::Sphere);
    EXPECT_EQ(c.geometry.mode, DimensionMode::Axisymmetric);
    EXPECT_DOUBLE_EQ(c.theta, 0.7);
    EXPECT_EQ(c.sweep_eps, (std::vector<double>{0.4, 0.2, 0.1, 0.05}));
    EXPECT_EQ(parse_config_text(R"({"geometry": {"kind": "disk"}})").geometry.mode, DimensionMode::Planar);
}

TEST(Config, StrictSchema) {
    auto msg = [](const std::string& text) {
        try {
            parse_config_text(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("accepted");
    };
    EXPECT_NE(msg(R"({"geometry": {"radius": -1}})").find("geometry.radius"), std::string::npos);
    EXPECT_NE(msg(R"({"geometry": {"radiu": 1}})").find("geometry.radiu"), std::string::npos);
    EXPECT_NE(msg(R"({"extra": 1})").find("extra"), std::string::npos);
    EXPECT_NE(msg(R"({"gas": {"gamma": "1.4"}})").find("gas.gamma"), std::string::npos);
    EXPECT_NE(msg(R"({"geometry": {"n_r": 16.5}})").find("geometry.n_r"), std::string::npos);
    EXPECT_NE(msg(R"({"cutoff": {"theta": 1.2}})").find("cutoff.theta"), std::string::npos);
    EXPECT_NE(msg(R"({"sweep": {"eps": [0.1, 0.2]}})").find("sweep.eps"), std::string::npos);
    EXPECT_NE(msg(R"({"sweep": {"rate_tolerances": {"rh": 1}}})").find("sweep.rate_tolerances.rh"), std::string::npos);
    EXPECT_NE(msg(R"({"force": {"kind": "newtonian", "source_radius": 1.5}})").find("force.source_radius"), std::string::npos);
    EXPECT_NE(msg(R"({"geometry": {"kind": "disk", "mode": "axisymmetric"}})").find("geometry"), std::string::npos);
    EXPECT_NE(msg("{\"gas\": {} // comment\n}").find("invalid JSON"), std::string::npos);
    EXPECT_NE(msg(R"({"output": {"formats": ["xml"]}})").find("output.formats"), std::string::npos);
}

TEST(Config, HashIgnoresOutputAndSpelling) {
    const RunConfig a = parse_config_text(R"({"gas": {"gamma": 1.4}})");
    const RunConfig b = parse_config_text(R"({"output": {"directory": "elsewhere"}})");
    const RunConfig c = parse_config_text(R"({"gas": {"gamma": 1.3}})");
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_NE(config_hash(a), config_hash(c));
    EXPECT_EQ(config_hash(a).size(), 16u);
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    // canonical form re-parses to the same hash
    nlohmann::json canon = canonical_json(a);
    canon["geometry"].erase("axes");
    canon["geometry"]["radius"] = 1.0;
    EXPECT_EQ(config_hash(parse_config(canon)), config_hash(a));
}

TEST(Cli, SolveIncompressibleArtifactsAndDeterminism) {
    TempDir t;
    const std::string cfg = write_config(t.path, kSmall);
    std::string out;
    ASSERT_EQ(run({"solve-incompressible", "--config", cfg, "--out", (t.path / "a").string()}, &out), 0);
    ASSERT_EQ(run({"solve-incompressible", "--config", cfg, "--out", (t.path / "b").string()}), 0);
    const std::string hash = config_hash(load_config(cfg));
    for (const char* f : {"psi_bar.field", "surface.csv", "summary_incompressible.json", "config.json"}) {
        ASSERT_TRUE(fs::exists(t.path / "a" / hash / f)) << f;
        EXPECT_EQ(slurp(t.path / "a" / hash / f), slurp(t.path / "b" / hash / f)) << f;
    }
    const auto summary = nlohmann::json::parse(slurp(t.path / "a" / hash / "summary_incompressible.json"));
    EXPECT_LT(summary["residual"].get<double>(), 1e-10);
    EXPECT_NE(slurp(t.path / "a" / hash / "psi_bar.field").find("hash=" + hash), std::string::npos);
}

TEST(Cli, ConfigErrorsExitTwo) {
    TempDir t;
    std::string err;
    EXPECT_EQ(run({"solve-incompressible", "--config", write_config(t.path, R"({"geometry": {"radius": -1}})"), "--out",
                   t.path.string()}, nullptr, &err), 2);
    EXPECT_NE(err.find("geometry.radius"), std::string::npos);
    EXPECT_EQ(run({"solve-incompressible", "--config", (t.path / "missing.json").string()}), 2);
    EXPECT_EQ(run({"solve-incompressible"}), 2);
    EXPECT_EQ(run({"frobnicate", "--config", "x"}), 2);
    EXPECT_EQ(run({"sweep", "--config", write_config(t.path, R"({"sweep": {"eps": []}})", "e.json"), "--out", t.path.string()}), 2);
    EXPECT_EQ(run({"solve-compressible", "--config", write_config(t.path, kSmall, "s.json"), "--epsilon", "-1", "--out",
                   t.path.string()}), 2);
}

TEST(Cli, SolveCompressibleRunsPrerequisiteAndFlagsCutoff) {
    TempDir t;
    const std::string cfg = write_config(t.path, kSmall);
    const std::string root = (t.path / "o").string();
    std::string out;
    ASSERT_EQ(run({"solve-compressible", "--config", cfg, "--out", root, "--epsilon", "0.1"}, &out), 0);
    auto s = nlohmann::json::parse(out);
    EXPECT_TRUE(s["cutoff_removed"].get<bool>());
    EXPECT_NE(s["incompressible"].get<std::string>().find("computed"), std::string::npos);
    ASSERT_EQ(run({"solve-compressible", "--config", cfg, "--out", root, "--epsilon", "0.2"}, &out), 0);
    EXPECT_NE(nlohmann::json::parse(out)["incompressible"].get<std::string>().find("reused"), std::string::npos);
    ASSERT_EQ(run({"solve-compressible", "--config", cfg, "--out", root, "--epsilon", "5"}, &out), 4);
    s = nlohmann::json::parse(out);
    EXPECT_FALSE(s["cutoff_removed"].get<bool>());
    const std::string hash = config_hash(load_config(cfg));
    EXPECT_TRUE(fs::exists(fs::path(root) / hash / "flow_eps5.0.txt"));
}

TEST(Cli, SweepAssertRates) {
    TempDir t;
    const std::string good = write_config(t.path, kSmall);
    const std::string bad = write_config(
        t.path,
        R"({"geometry": {"n_r": 16, "n_t": 16}, "sweep": {"sensitivity": false,
            "rate_tolerances": {"rho": 0.0001, "u_l2": 0.0001, "mach": 0.0001, "gap": 0.0001}}})",
        "bad.json");
    EXPECT_EQ(run({"sweep", "--config", good, "--out", t.path.string(), "--assert-rates"}), 0);
    EXPECT_EQ(run({"sweep", "--config", bad, "--out", t.path.string()}), 0);
    EXPECT_EQ(run({"sweep", "--config", bad, "--out", t.path.string(), "--assert-rates"}), 5);
    const fs::path dir = t.path / config_hash(load_config(good));
    const ConvergenceReport rep = report_from_json(nlohmann::json::parse(slurp(dir / "report.json")));
    EXPECT_NEAR(rep.slopes.at("rho_dev_inf").slope, 2.0, 0.1);
    EXPECT_NE(slurp(dir / "report.csv").find("slope_rho_dev_inf"), std::string::npos);
}

TEST(Cli, SeedChangesPanelAndHash) {
    TempDir t;
    const std::string cfg = write_config(t.path, kSmall);
    ASSERT_EQ(run({"sweep", "--config", cfg, "--out", t.path.string(), "--seed", "7"}), 0);
    RunConfig c = load_config(cfg);
    c.seed = 7;
    EXPECT_TRUE(fs::exists(t.path / config_hash(c) / "report.json"));
    EXPECT_NE(config_hash(c), config_hash(load_config(cfg)));
}

TEST(Cli, ValidateForceVerdicts) {
    TempDir t;
    auto verdict = [&](const std::string& force) {
        const std::string cfg = write_config(t.path, R"({"geometry": {"n_r": 32, "n_t": 32}, "force": )" + force + "}");
        std::string out;
        EXPECT_EQ(run({"validate-force", "--config", cfg, "--out", t.path.string()}, &out), 0);
        return nlohmann::json::parse(out);
    };
    const auto newton = verdict(R"({"kind": "newtonian", "mass": 0.05, "source_radius": 0.5})");
    EXPECT_TRUE(newton["admissible"].get<bool>());
    EXPECT_NEAR(newton["beta_prime"].get<double>(), 0.95, 1e-15);
    EXPECT_TRUE(verdict(R"({"kind": "none"})")["admissible"].get<bool>());
    EXPECT_FALSE(verdict(R"({"kind": "newtonian", "mass": 0.05, "source_radius": 0.5, "beta": 2.0})")["admissible"].get<bool>());
}

TEST(Cli, DumpsRoundTrip) {
    TempDir t;
    const std::string cfg = write_config(t.path, kSmall);
    ASSERT_EQ(run({"dump-mesh", "--config", cfg, "--out", t.path.string()}), 0);
    ASSERT_EQ(run({"solve-compressible", "--config", cfg, "--out", t.path.string(), "--epsilon", "0.2"}), 0);
    const RunConfig c = load_config(cfg);
    const fs::path dir = t.path / config_hash(c);
    std::ifstream mesh_in(dir / "mesh.txt");
    const MeshPtr mesh = std::make_shared<const ExteriorMesh>(read_mesh(mesh_in));
    EXPECT_TRUE(*mesh == build_mesh(c.geometry));
    std::ifstream psi_in(dir / "psi_bar.field");
    const PotentialField psi = read_field(psi_in, mesh);
    EXPECT_EQ(psi.values, solve_incompressible(mesh, 1.0).values);
    const ForceField ff = make_force_field(c.force, *mesh);
    const CompressibleSolution sol = solve_compressible(psi, ff, c.gas(0.2), c.theta, c.eps0, c.minimize_options());
    std::ifstream phi_in(dir / "phi_tilde_eps0.2.field");
    EXPECT_EQ(read_field(phi_in, mesh).values, sol.minimum.phi_tilde.values);
    std::ifstream flow_in(dir / "flow_eps0.2.txt");
    EXPECT_TRUE(read_flow(flow_in, *mesh) == flow_table(sol.state));
}
