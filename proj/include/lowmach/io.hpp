#pragma once

// Flow-state dump: quadrature-point table in the field-dump style plus a JSON summary line.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "compressible.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace lowmach {

inline void write_flow(std::ostream& os, const ExteriorMesh& m, const FlowState& s, const std::string& config_hash = "") {
    os << "lowmach-flow v1 eps=" << format_double(s.epsilon) << " hash=" << (config_hash.empty() ? "-" : config_hash)
       << " points=" << m.num_qp() << " truncated=" << int(s.truncated_regime) << "\n";
    os << "# x y weight rho u_x u_r mach gradp_x gradp_r\n";
    for (std::size_t k = 0; k < m.num_qp(); ++k) {
        const auto& x = m.qp_x(k);
        os << format_double(x.x()) << ' ' << format_double(x.y()) << ' ' << format_double(m.qp_weight(k)) << ' '
           << format_double(s.rho[k]) << ' ' << format_double(s.u[k].x()) << ' ' << format_double(s.u[k].y()) << ' '
           << format_double(s.mach[k]) << ' ' << format_double(s.grad_p[k].x()) << ' '
           << format_double(s.grad_p[k].y()) << '\n';
    }
}

/// Pointwise part of a flow dump, checked against the mesh quadrature points.
struct FlowTable {
    double epsilon = 0.0;
    bool truncated = false;
    std::vector<double> rho;
    std::vector<Eigen::Vector2d> u;
    std::vector<double> mach;
    std::vector<Eigen::Vector2d> grad_p;
};

inline FlowTable read_flow(std::istream& is, const ExteriorMesh& m) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("lowmach-flow v1", 0) != 0)
        throw InputError("flow dump: missing 'lowmach-flow v1' header");
    FlowTable t;
    t.epsilon = std::stod(detail::header_value(header, "eps"));
    t.truncated = detail::header_value(header, "truncated") == "1";
    const std::size_t n = std::stoul(detail::header_value(header, "points"));
    if (n != m.num_qp()) throw InputError("flow dump: point count does not match the mesh");
    for (std::size_t k = 0; k < n; ++k) {
        std::istringstream ls(detail::next_data_line(is));
        double x, y, w, rho, ux, ur, mach, gx, gr;
        if (!(ls >> x >> y >> w >> rho >> ux >> ur >> mach >> gx >> gr) || x != m.qp_x(k).x() || y != m.qp_x(k).y())
            throw InputError("flow dump: point table does not match the mesh");
        t.rho.push_back(rho);
        t.u.emplace_back(ux, ur);
        t.mach.push_back(mach);
        t.grad_p.emplace_back(gx, gr);
    }
    return t;
}

inline FlowTable flow_table(const FlowState& s) {
    return {s.epsilon, s.truncated_regime, s.rho, s.u, s.mach, s.grad_p};
}

inline bool operator==(const FlowTable& a, const FlowTable& b) {
    return a.epsilon == b.epsilon && a.truncated == b.truncated && a.rho == b.rho && a.u == b.u && a.mach == b.mach &&
           a.grad_p == b.grad_p;
}

/// One-line summary of a compressible solve.
inline nlohmann::json flow_summary(const CompressibleSolution& sol, const std::string& config_hash) {
    const FlowState& s = sol.state;
    const ExteriorMesh& m = *sol.problem.mesh;
    const auto d = grad_all_qp(m, sol.minimum.phi_tilde.values);
    double energy = 0.0, dinf = 0.0, l2 = 0.0, uinf = 0.0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        energy += m.qp_weight(k) * d[k].squaredNorm();
        dinf = std::max(dinf, d[k].norm());
        const double du = (s.u[k] - s.u_bar[k]).norm();
        l2 += m.qp_weight(k) * du * du;
        uinf = std::max(uinf, du);
    }
    return {{"epsilon", s.epsilon},
            {"config_hash", config_hash},
            {"functional", sol.minimum.value_history.back()},
            {"newton_iterations", sol.minimum.iterations},
            {"gradient_history", sol.minimum.grad_history},
            {"roundoff_floor", sol.minimum.roundoff_floor},
            {"cutoff_removed", sol.cutoff.removed},
            {"cutoff_margin", sol.cutoff.margin},
            {"q_lower", sol.problem.spec.q_lower},
            {"truncated_regime", s.truncated_regime},
            {"energy", energy},
            {"grad_phi_tilde_inf", dinf},
            {"u_diff_l2", std::sqrt(l2)},
            {"u_diff_inf", uinf},
            {"rho_dev_inf", s.rho_deviation_inf()},
            {"max_mach", s.max_mach()},
            {"bernoulli_residual", s.bernoulli_residual}};
}

}  // namespace lowmach
