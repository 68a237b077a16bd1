#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lowmach/compressible.hpp"

using namespace lowmach;

namespace {

MeshPtr sphere_mesh(int n = 16, double R = 20.0) {
    MeshParams p;
    p.shape = ObstacleShape::sphere(1.0);
    p.R_far = R;
    p.n_r = n;
    p.n_t = n;
    return std::make_shared<const ExteriorMesh>(build_mesh(p));
}

struct Case {
    MeshPtr mesh;
    PotentialField psi;
    ForceField force;
    GasModel gas;
    CutoffSpec spec;
    CompressibleProblem P;
};

Case make_case(double eps, int n = 16, double mass = 0.0) {
    Case s;
    s.mesh = sphere_mesh(n);
    s.gas = GasModel{1.4, eps, 1.0};
    s.psi = solve_incompressible(s.mesh, 1.0);
    ForceSpec fs;
    if (mass > 0.0) {
        fs.kind = ForceKind::Newtonian;
        fs.mass = mass;
        fs.source_radius = 0.5;
    }
    s.force = make_force_field(fs, *s.mesh);
    const auto phis = s.force.node_potentials();
    s.spec = make_cutoff(0.7, std::max(0.42, eps), s.gas, phis);
    s.P = make_compressible_problem(s.psi, s.force, s.gas, s.spec);
    return s;
}

Eigen::VectorXd random_field(const CompressibleProblem& P, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::VectorXd v(P.mesh->num_nodes());
    for (int i = 0; i < v.size(); ++i) v[i] = nd(rng);
    return P.dofs.expand(P.dofs.restrict(v));
}

double grad_norm2(const CompressibleProblem& P, const Eigen::VectorXd& v) {
    const auto g = grad_all_qp(*P.mesh, v);
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += P.mesh->qp_weight(k) * g[k].squaredNorm();
    return s;
}

}  // namespace

TEST(Functional, ZeroAtIncompressibleState) {
    const Case s = make_case(0.3);
    EXPECT_EQ(discrete_functional(s.P, Eigen::VectorXd::Zero(s.mesh->num_nodes())), 0.0);
}

TEST(Functional, GaugeInvariance) {
    const Case s = make_case(0.3);
    std::mt19937_64 rng(7);
    const Eigen::VectorXd v = random_field(s.P, rng, 0.3);
    const Eigen::VectorXd shifted = (v.array() + 2.5).matrix();
    EXPECT_NEAR(discrete_functional(s.P, shifted), discrete_functional(s.P, v), 1e-12 * std::abs(discrete_functional(s.P, v)));
    EXPECT_NEAR(discrete_functional(s.P, Eigen::VectorXd::Constant(s.mesh->num_nodes(), 3.0)), 0.0, 1e-14);
    const Eigen::VectorXd g1 = functional_gradient(s.P, v), g2 = functional_gradient(s.P, shifted);
    EXPECT_LT((g1 - g2).norm(), 1e-12 * g1.norm());
}

TEST(Functional, HigherOrderQuadratureAgrees) {
    const Case s = make_case(0.3);
    std::mt19937_64 rng(11);
    const Eigen::VectorXd v = random_field(s.P, rng, 0.5);
    const double a = discrete_functional_ex(s.P, v, gauss8()).value;
    const double b = discrete_functional_ex(s.P, v, gauss_legendre(24)).value;
    EXPECT_NEAR(a, b, 1e-8 * std::abs(b));
}

TEST(Functional, MatchesDirectEnergyDifference) {
    // at moderate eps the cancelling form eps^-4 [G(p) - G(p_bar) - p_bar.(p - p_bar)] is still accurate
    const Case s = make_case(0.3);
    std::mt19937_64 rng(3);
    const Eigen::VectorXd v = random_field(s.P, rng, 0.2);
    const ExteriorMesh& m = *s.mesh;
    const double e2 = 0.09;
    const auto d = grad_all_qp(m, v);
    double direct = 0.0;
    for (std::size_t k = 0; k < m.num_qp(); ++k) {
        const Eigen::Vector2d pb = s.P.pbar[k], p = pb + e2 * d[k];
        const auto& thr = s.P.thresholds(k);
        const double Gp = energy_density_G(p.squaredNorm(), 0.0, thr, s.spec.saturation, s.gas);
        const double Gb = energy_density_G(pb.squaredNorm(), 0.0, thr, s.spec.saturation, s.gas);
        direct += m.qp_weight(k) * (Gp - Gb - pb.dot(p - pb)) / (e2 * e2);
    }
    const double I = discrete_functional(s.P, v);
    EXPECT_GT(I, 0.0);
    EXPECT_NEAR(I, direct, 1e-6 * std::abs(I));
}

TEST(Functional, GradientMatchesFiniteDifferences) {
    for (double mass : {0.0, 0.03}) {
        const Case s = make_case(0.3, 12, mass);
        std::mt19937_64 rng(5);
        const Eigen::VectorXd x = random_field(s.P, rng, 0.4);
        const Eigen::VectorXd g = functional_gradient(s.P, x);
        for (int t = 0; t < 5; ++t) {
            const Eigen::VectorXd dir = random_field(s.P, rng, 1.0);
            const double h = 1e-5;
            const double fd = (discrete_functional(s.P, x + h * dir) - discrete_functional(s.P, x - h * dir)) / (2 * h);
            const double an = g.dot(dir);
            EXPECT_NEAR(an, fd, 1e-6 * std::abs(an)) << "mass " << mass;
        }
    }
}

TEST(Functional, GradientConsistentAcrossCutoffKinks) {
    // fields large enough that the path p_bar + t eps^2 d crosses both thresholds
    const Case s = make_case(0.4, 32);
    std::mt19937_64 rng(9);
    const Eigen::VectorXd x = random_field(s.P, rng, 0.5);
    const Eigen::VectorXd g = functional_gradient(s.P, x);
    int crossed = 0;
    const auto d = grad_all_qp(*s.mesh, x);
    for (std::size_t k = 0; k < s.mesh->num_qp(); ++k)
        crossed += detail::threshold_crossings(s.P.pbar[k], 0.16 * d[k], s.P.thresholds(k)).size() > 2;
    EXPECT_GT(crossed, 0);
    for (int t = 0; t < 5; ++t) {
        const Eigen::VectorXd dir = random_field(s.P, rng, 1.0);
        auto central = [&](double h) {
            return (discrete_functional(s.P, x + h * dir) - discrete_functional(s.P, x - h * dir)) / (2 * h);
        };
        const double fd = (4.0 * central(5e-6) - central(1e-5)) / 3.0;
        EXPECT_NEAR(g.dot(dir), fd, 1e-6 * std::abs(g.dot(dir)));
    }
}

TEST(Functional, ThresholdCrossings) {
    CutoffThresholds thr;
    thr.lower2 = 1.0;
    thr.upper2 = 4.0;
    const auto c = detail::threshold_crossings({0.0, 0.0}, {3.0, 0.0}, thr);
    ASSERT_EQ(c.size(), 4u);
    EXPECT_DOUBLE_EQ(c[1], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(c[2], 2.0 / 3.0);
    EXPECT_EQ(detail::threshold_crossings({0.5, 0.0}, {0.0, 0.0}, thr).size(), 2u);
}

TEST(Functional, HessianMatchesGradientDifferences) {
    const Case s = make_case(0.3, 12);
    std::mt19937_64 rng(9);
    const Eigen::VectorXd x = random_field(s.P, rng, 0.4);
    const Eigen::VectorXd dir = random_field(s.P, rng, 1.0);
    const SpMat H = functional_hessian(s.P, x);
    const double h = 1e-5;
    const Eigen::VectorXd fd = s.P.dofs.restrict(functional_gradient(s.P, x + h * dir) - functional_gradient(s.P, x - h * dir)) / (2 * h);
    const Eigen::VectorXd an = H * s.P.dofs.restrict(dir);
    EXPECT_LT((an - fd).norm(), 1e-6 * an.norm());
    EXPECT_LT((SpMat(H.transpose()) - H).norm(), 1e-14 * H.norm());
}

TEST(Functional, ConvexityAndCoercivity) {
    const Case s = make_case(0.4, 12);
    const double lam = s.spec.lambda_lo;
    ASSERT_GT(lam, 0.0);
    double rp2 = 0.0;
    for (std::size_t k = 0; k < s.mesh->num_qp(); ++k)
        rp2 += s.mesh->qp_weight(k) * (s.P.rbar[k] * s.P.pbar[k]).squaredNorm();
    std::mt19937_64 rng(21);
    for (int t = 0; t < 20; ++t) {
        const double scale = std::pow(10.0, -1.0 + 0.15 * t);
        const Eigen::VectorXd a = random_field(s.P, rng, scale), b = random_field(s.P, rng, scale);
        const double gap = discrete_functional(s.P, a) + discrete_functional(s.P, b) -
                           2.0 * discrete_functional(s.P, 0.5 * (a + b));
        EXPECT_GE(gap, 0.25 * lam * grad_norm2(s.P, a - b));
        EXPECT_GE(discrete_functional(s.P, a), 0.25 * lam * grad_norm2(s.P, a) - rp2 / lam);
    }
}

TEST(Minimize, ConvergesQuadratically) {
    const Case s = make_case(0.2);
    const MinimizeResult r = minimize(s.P);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(r.value_history.back(), 0.0);
    EXPECT_GT(r.min_pivot, 0.0);
    const auto& h = r.grad_history;
    ASSERT_GE(h.size(), 3u);
    EXPECT_LE(h.back(), 1e-10 * h.front());
    for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LT(h[i], h[i - 1]);
    // quadratic tail: log-ratio of successive reductions approaches 2
    const std::size_t n = h.size();
    if (n >= 4 && h[n - 2] < 1e-3 * h[0]) {
        const double ratio = std::log(h[n - 1] / h[n - 2]) / std::log(h[n - 2] / h[n - 3]);
        EXPECT_GT(ratio, 1.5);
    }
}

TEST(Minimize, UniqueFromRandomStarts) {
    const Case s = make_case(0.3);
    const MinimizeResult ref = minimize(s.P);
    std::mt19937_64 rng(13);
    for (int t = 0; t < 3; ++t) {
        MinimizeOptions opt;
        opt.initial = random_field(s.P, rng, 1.0);
        const MinimizeResult r = minimize(s.P, opt);
        EXPECT_LT((r.phi_tilde.values - ref.phi_tilde.values).lpNorm<Eigen::Infinity>(), 1e-8);
    }
}

TEST(Minimize, EulerLagrangeResidual) {
    const Case s = make_case(0.2);
    const MinimizeResult r = minimize(s.P);
    const Eigen::VectorXd g = s.P.dofs.restrict(functional_gradient(s.P, r.phi_tilde.values));
    const Eigen::VectorXd g0 = s.P.dofs.restrict(functional_gradient(s.P, Eigen::VectorXd::Zero(s.mesh->num_nodes())));
    EXPECT_LT(g.norm(), 1e-10 * g0.norm());
}

TEST(Minimize, TinyEpsilon) {
    const Case s = make_case(1e-4);
    const MinimizeResult r = minimize(s.P);
    const FlowState st = flow_state(s.P, r.phi_tilde);
    double du = 0.0;
    for (std::size_t k = 0; k < st.u.size(); ++k) du = std::max(du, (st.u[k] - st.u_bar[k]).norm());
    EXPECT_LE(du, 1e-6);
    EXPECT_TRUE(cutoff_active_check(st).removed);
}

TEST(FlowState, Invariants) {
    const Case s = make_case(0.2);
    const FlowState st = flow_state(s.P, minimize(s.P).phi_tilde);
    ASSERT_FALSE(st.truncated_regime);
    EXPECT_LT(st.bernoulli_residual, 1e-10);
    const DensityBounds db = density_bounds(s.gas, 0.0);
    for (std::size_t k = 0; k < st.rho.size(); ++k) {
        EXPECT_GT(st.rho[k], db.lower);
        EXPECT_LE(st.rho[k], db.upper * (1 + 1e-14));
        EXPECT_LT(st.mach[k], 1.0);
    }
    // near rho = 1 the Mach number is eps |u| / sqrt(gamma)
    double umax = 0.0;
    for (const auto& u : st.u) umax = std::max(umax, u.norm());
    EXPECT_NEAR(st.max_mach(), 0.2 * umax / std::sqrt(1.4), 0.05 * st.max_mach());
}

TEST(FlowState, MassFluxConserved) {
    const Case s = make_case(0.3);
    const FlowState st = flow_state(s.P, minimize(s.P).phi_tilde);
    const auto [f1, s1] = layer_mass_flux(*s.mesh, st, 3);
    const auto [f2, s2] = layer_mass_flux(*s.mesh, st, 10);
    // both vanish: no net flux through any sphere around a closed body
    EXPECT_LT(std::abs(f1), 1e-6 * s1);
    EXPECT_LT(std::abs(f2), 1e-6 * s2);
}

TEST(CutoffCheck, RemovedAtSmallEpsilon) {
    const Case s = make_case(0.1);
    const FlowState st = flow_state(s.P, minimize(s.P).phi_tilde);
    const CutoffCheck c = cutoff_active_check(st);
    EXPECT_TRUE(c.removed);
    EXPECT_GT(c.margin, 0.0);
}

TEST(CutoffCheck, NotRemovedAtLargeEpsilon) {
    const Case s = make_case(5.0);
    const FlowState st = flow_state(s.P, minimize(s.P).phi_tilde);
    const CutoffCheck c = cutoff_active_check(st);
    EXPECT_FALSE(c.removed);
    EXPECT_TRUE(st.truncated_regime);
}

TEST(CutoffCheck, MarginShrinksWithEpsilon) {
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.05, 0.1, 0.2, 0.4}) {
        const Case s = make_case(eps);
        const double margin = cutoff_active_check(flow_state(s.P, minimize(s.P).phi_tilde)).margin;
        EXPECT_LT(margin, prev);
        prev = margin;
    }
}

TEST(WeakPressure, PanelAndGap) {
    const Case s = make_case(0.2);
    const auto panel = make_test_panel(*s.mesh, 42);
    ASSERT_EQ(panel.size(), 4u);
    for (const auto& w : panel) {
        EXPECT_GT(w.center.norm() - w.radius, 1.0);
        EXPECT_GT(w.center.y() - w.radius, 0.0);
    }
    EXPECT_EQ(make_test_panel(*s.mesh, 42)[2].center, panel[2].center);
    // with phi_tilde = 0 and eps -> 0 the states coincide and the gap vanishes
    const Case t = make_case(1e-5);
    const FlowState st = flow_state(t.P, PotentialField{t.mesh, "phi_tilde", Eigen::VectorXd::Zero(t.mesh->num_nodes())});
    for (const auto& w : panel) EXPECT_LT(std::abs(weak_pressure_gap(*t.mesh, st, t.force.qp, w)), 1e-8);
}
