#pragma once

// Truncated exterior domains: a structured quadrilateral shell between the obstacle
// boundary and a circle/sphere of radius R_far.
//
// Cells live in parameter space (w, theta), w in [0,1] radial, and are mapped to the
// physical plane by X(w,theta) = (1-w) B(theta) + w R e(theta), where B is the obstacle
// boundary. For a circle this is exact polar geometry. Quadrature uses this map
// directly, so curved boundaries are represented without geometric error.
//
// Axisymmetric mode works in the meridional half-plane (x, r), r >= 0, with the x-axis
// as symmetry axis and theta in [0, pi]; every integral carries the weight 2 pi r so the
// discrete problem is the three-dimensional one. Planar mode is periodic in theta.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "numerics.hpp"

namespace lowmach {

enum class DimensionMode { Planar, Axisymmetric };
enum class ShapeKind { Sphere, Disk, Ellipse };
enum class BoundaryTag { Obstacle, FarField, Axis };

inline const char* to_string(DimensionMode m) { return m == DimensionMode::Planar ? "planar" : "axisymmetric"; }
inline const char* to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::Sphere: return "sphere";
        case ShapeKind::Disk: return "disk";
        default: return "ellipse";
    }
}
inline const char* to_string(BoundaryTag t) {
    switch (t) {
        case BoundaryTag::Obstacle: return "obstacle";
        case BoundaryTag::FarField: return "farfield";
        default: return "axis";
    }
}

inline DimensionMode parse_mode(const std::string& s) {
    if (s == "planar" || s == "planar-2d") return DimensionMode::Planar;
    if (s == "axisymmetric" || s == "axisymmetric-3d") return DimensionMode::Axisymmetric;
    throw ConfigError("geometry.mode: unknown mode '" + s + "'");
}
inline ShapeKind parse_shape(const std::string& s) {
    if (s == "sphere") return ShapeKind::Sphere;
    if (s == "disk") return ShapeKind::Disk;
    if (s == "ellipse") return ShapeKind::Ellipse;
    throw ConfigError("geometry.kind: unknown obstacle '" + s + "'");
}

/// Obstacle centred at the origin. `a` is the semi-axis along x (the flow direction),
/// `b` the one across it; sphere and disk have a == b.
struct ObstacleShape {
    ShapeKind kind = ShapeKind::Sphere;
    double a = 1.0;
    double b = 1.0;

    static ObstacleShape sphere(double radius) { return {ShapeKind::Sphere, radius, radius}; }
    static ObstacleShape disk(double radius) { return {ShapeKind::Disk, radius, radius}; }
    static ObstacleShape ellipse(double ax, double by) { return {ShapeKind::Ellipse, ax, by}; }

    double max_radius() const { return std::max(a, b); }
    double min_radius() const { return std::min(a, b); }

    void validate() const {
        if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("geometry.radius must be > 0");
        if (!(b > 0.0) || !std::isfinite(b)) throw ConfigError("geometry.radius must be > 0");
        if (kind != ShapeKind::Ellipse && a != b) throw ConfigError("geometry: circular obstacle needs equal semi-axes");
    }

    /// Exact boundary normal pointing away from the obstacle (gradient of x^2/a^2 + y^2/b^2).
    Eigen::Vector2d outward_normal(const Eigen::Vector2d& x) const {
        Eigen::Vector2d g(x.x() / (a * a), x.y() / (b * b));
        return g.normalized();
    }
};

namespace detail {

/// cos and sin of 2 pi num/den, reduced so that mirror-image angles give bit-exact mirror values.
inline std::pair<double, double> trig_of_fraction(long num, long den) {
    num %= den;
    if (num < 0) num += den;
    double sgn_s = 1.0;
    if (2 * num > den) {  // theta -> 2 pi - theta
        num = den - num;
        sgn_s = -1.0;
    }
    if (2 * num == den) return {-1.0, 0.0};
    double sgn_c = 1.0;
    if (den % 2 == 0 && 4 * num > den) {  // theta -> pi - theta
        num = den / 2 - num;
        sgn_c = -1.0;
    }
    if (4 * num == den) return {0.0, sgn_s};
    const double t = 2.0 * std::numbers::pi * double(num) / double(den);
    return {sgn_c * std::cos(t), sgn_s * std::sin(t)};
}

}  // namespace detail

/// Boundary facet of the shell. `side` 0: w = 0, 1: w = 1, 2: theta = theta_j, 3: theta = theta_{j+1}.
struct BoundaryFacet {
    int cell = 0;
    int side = 0;
    BoundaryTag tag = BoundaryTag::Obstacle;
    std::array<int, 2> nodes{};

    bool operator==(const BoundaryFacet&) const = default;
};

/// Point of the facet quadrature; `normal` is the unit normal pointing out of the fluid region.
struct FacetPoint {
    int facet = 0;
    Eigen::Vector2d x;
    Eigen::Vector2d normal;
    double weight = 0.0;  // arc length (times 2 pi r in axisymmetric mode)
    double xi = 0.0, eta = 0.0;
};

struct MeshParams {
    ObstacleShape shape;
    double R_far = 20.0;
    int n_r = 32;
    int n_t = 32;
    double grading = 1.15;
    DimensionMode mode = DimensionMode::Axisymmetric;
    int quad_order = 4;

    bool operator==(const MeshParams& o) const {
        return shape.kind == o.shape.kind && shape.a == o.shape.a && shape.b == o.shape.b && R_far == o.R_far &&
               n_r == o.n_r && n_t == o.n_t && grading == o.grading && mode == o.mode && quad_order == o.quad_order;
    }

    /// Parameters of the mesh with twice the cells in each direction; radial levels nest.
    MeshParams refined() const {
        MeshParams p = *this;
        p.n_r *= 2;
        p.n_t *= 2;
        p.grading = std::sqrt(grading);
        return p;
    }
};

using Matrix24 = Eigen::Matrix<double, 2, 4>;

/// Structured exterior shell. Immutable after construction.
class ExteriorMesh {
public:
    /// Normals are stored pointing out of the fluid; on the obstacle that is into the body.
    static constexpr const char* normal_orientation = "outward_from_fluid";

    const MeshParams& params() const { return p_; }
    DimensionMode mode() const { return p_.mode; }
    bool axisymmetric() const { return p_.mode == DimensionMode::Axisymmetric; }
    int dimension() const { return axisymmetric() ? 3 : 2; }
    int n_r() const { return p_.n_r; }
    int n_t() const { return p_.n_t; }
    double R_far() const { return p_.R_far; }
    const ObstacleShape& shape() const { return p_.shape; }

    /// Angular node count per radial level.
    int ring_size() const { return axisymmetric() ? p_.n_t + 1 : p_.n_t; }
    int num_nodes() const { return int(nodes_.size()); }
    int num_cells() const { return int(cells_.size()); }
    int qp_per_cell() const { return int(local_shape_.cols()); }
    std::size_t num_qp() const { return qp_w_.size(); }

    int node_index(int i, int j) const {
        if (!axisymmetric()) j = ((j % p_.n_t) + p_.n_t) % p_.n_t;
        return i * ring_size() + j;
    }
    int node_layer(int k) const { return k / ring_size(); }
    bool on_obstacle(int k) const { return node_layer(k) == 0; }
    bool on_far_field(int k) const { return node_layer(k) == p_.n_r; }

    const std::vector<Eigen::Vector2d>& nodes() const { return nodes_; }
    const std::vector<std::array<int, 4>>& cells() const { return cells_; }
    const std::vector<BoundaryFacet>& facets() const { return facets_; }
    const std::vector<FacetPoint>& facet_points() const { return facet_pts_; }
    const std::vector<double>& w_levels() const { return w_; }
    const std::vector<double>& theta_levels() const { return theta_; }

    int cell_index(int i, int j) const { return i * p_.n_t + j; }
    int cell_layer(int c) const { return c / p_.n_t; }
    int cell_sector(int c) const { return c % p_.n_t; }

    // quadrature-point data, indexed by c * qp_per_cell() + q
    const Eigen::Vector2d& qp_x(std::size_t k) const { return qp_x_[k]; }
    double qp_weight(std::size_t k) const { return qp_w_[k]; }
    const Matrix24& qp_grad(std::size_t k) const { return qp_grad_[k]; }
    /// Values of the four cell basis functions at local point q.
    Eigen::Vector4d qp_shape(int q) const { return local_shape_.col(q); }

    double dtheta() const { return (axisymmetric() ? std::numbers::pi : 2.0 * std::numbers::pi) / p_.n_t; }

    Eigen::Vector2d map(double w, double theta) const {
        const double rx = (1.0 - w) * p_.shape.a + w * p_.R_far;
        const double ry = (1.0 - w) * p_.shape.b + w * p_.R_far;
        return {rx * std::cos(theta), ry * std::sin(theta)};
    }

    /// Columns d/dw and d/dtheta of the parameter map.
    Eigen::Matrix2d map_jacobian(double w, double theta) const {
        const double c = std::cos(theta), s = std::sin(theta);
        const double rx = (1.0 - w) * p_.shape.a + w * p_.R_far;
        const double ry = (1.0 - w) * p_.shape.b + w * p_.R_far;
        Eigen::Matrix2d J;
        J << (p_.R_far - p_.shape.a) * c, -rx * s, (p_.R_far - p_.shape.b) * s, ry * c;
        return J;
    }

    double measure_weight(const Eigen::Vector2d& x) const {
        return axisymmetric() ? 2.0 * std::numbers::pi * x.y() : 1.0;
    }

    /// Local coordinates (xi, eta) of cell c to physical point, Jacobian of (xi, eta) -> x.
    Eigen::Vector2d cell_point(int c, double xi, double eta) const {
        const auto [w, th] = cell_param(c, xi, eta);
        if (eta == 0.0 || eta == 1.0) {
            // node-aligned angle: use the exact reduced trig so axis points have r == 0
            const int j = cell_sector(c) + int(eta);
            const auto [cs, sn] = axisymmetric() ? detail::trig_of_fraction(j, 2L * p_.n_t)
                                                 : detail::trig_of_fraction(j, p_.n_t);
            const double rx = (1.0 - w) * p_.shape.a + w * p_.R_far;
            const double ry = (1.0 - w) * p_.shape.b + w * p_.R_far;
            return {rx * cs, ry * sn};
        }
        return map(w, th);
    }

    Eigen::Matrix2d cell_jacobian(int c, double xi, double eta) const {
        const auto [w, th] = cell_param(c, xi, eta);
        const int i = cell_layer(c);
        Eigen::Matrix2d J = map_jacobian(w, th);
        J.col(0) *= w_[i + 1] - w_[i];
        J.col(1) *= dtheta();
        return J;
    }

    /// Physical gradients of the four bilinear basis functions of cell c at (xi, eta).
    Matrix24 basis_gradients(int c, double xi, double eta) const {
        Eigen::Matrix<double, 2, 4> ref;
        ref << -(1 - eta), (1 - eta), eta, -eta,  //
            -(1 - xi), -xi, xi, (1 - xi);
        const Eigen::Matrix2d J = cell_jacobian(c, xi, eta);
        return J.transpose().inverse() * ref;
    }

    static Eigen::Vector4d basis_values(double xi, double eta) {
        return {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
    }

    /// Locates parameter point (w, theta); returns cell and local coordinates.
    std::tuple<int, double, double> locate(double w, double theta) const {
        if (!(w >= 0.0 && w <= 1.0)) throw InputError("locate: w outside [0,1]");
        const double span = axisymmetric() ? std::numbers::pi : 2.0 * std::numbers::pi;
        if (!axisymmetric()) theta = theta - span * std::floor(theta / span);
        if (!(theta >= 0.0 && theta <= span)) throw InputError("locate: theta outside the mesh range");
        int i = int(std::upper_bound(w_.begin(), w_.end(), w) - w_.begin()) - 1;
        i = std::clamp(i, 0, p_.n_r - 1);
        int j = std::clamp(int(std::floor(theta / dtheta())), 0, p_.n_t - 1);
        const double xi = (w - w_[i]) / (w_[i + 1] - w_[i]);
        const double eta = theta / dtheta() - j;
        return {cell_index(i, j), xi, eta};
    }

    /// Radial parameter of the point at distance r from the origin along direction theta.
    double w_at_radius(double r, double theta) const {
        const double c = std::cos(theta), s = std::sin(theta);
        // |X(w)|^2 is increasing in w; solve by safeguarded Newton
        auto fdf = [&](double w) {
            const Eigen::Vector2d x = map(w, theta);
            const Eigen::Vector2d dx((p_.R_far - p_.shape.a) * c, (p_.R_far - p_.shape.b) * s);
            return std::pair{x.squaredNorm() - r * r, 2.0 * x.dot(dx)};
        };
        return solve_increasing(fdf, 0.0, 1.0);
    }

    double cell_volume(int c) const {
        double v = 0.0;
        for (int q = 0; q < qp_per_cell(); ++q) v += qp_w_[std::size_t(c) * qp_per_cell() + q];
        return v;
    }

    double total_volume() const {
        double v = 0.0;
        for (double w : qp_w_) v += w;
        return v;
    }

    /// Volume (area in planar mode) of the exact region between obstacle and far boundary.
    double exact_volume() const {
        const double R = p_.R_far, A = p_.shape.a, B = p_.shape.b;
        if (axisymmetric()) return 4.0 / 3.0 * std::numbers::pi * (R * R * R - A * B * B);
        return std::numbers::pi * (R * R - A * B);
    }

    bool operator==(const ExteriorMesh& o) const {
        return p_ == o.p_ && nodes_ == o.nodes_ && cells_ == o.cells_ && facets_ == o.facets_;
    }

private:
    friend ExteriorMesh build_mesh(const MeshParams&);

    std::pair<double, double> cell_param(int c, double xi, double eta) const {
        const int i = cell_layer(c), j = cell_sector(c);
        return {w_[i] + xi * (w_[i + 1] - w_[i]), (j + eta) * dtheta()};
    }

    MeshParams p_;
    std::vector<double> w_;
    std::vector<double> theta_;
    std::vector<Eigen::Vector2d> nodes_;
    std::vector<std::array<int, 4>> cells_;
    std::vector<BoundaryFacet> facets_;
    std::vector<FacetPoint> facet_pts_;
    std::vector<Eigen::Vector2d> qp_x_;
    std::vector<double> qp_w_;
    std::vector<Matrix24> qp_grad_;
    Eigen::Matrix<double, 4, Eigen::Dynamic> local_shape_;
};

/// Radial parameter levels: geometric cell sizes with ratio `grading`, w_0 = 0, w_n = 1.
inline std::vector<double> radial_levels(int n_r, double grading) {
    std::vector<double> w(n_r + 1);
    for (int i = 0; i <= n_r; ++i)
        w[i] = grading == 1.0 ? double(i) / n_r : std::expm1(i * std::log(grading)) / std::expm1(n_r * std::log(grading));
    w[0] = 0.0;
    w[n_r] = 1.0;
    return w;
}

inline void validate(const MeshParams& p) {
    p.shape.validate();
    if (p.shape.kind == ShapeKind::Sphere && p.mode != DimensionMode::Axisymmetric)
        throw ConfigError("geometry: a sphere needs axisymmetric mode (use disk for planar)");
    if (p.shape.kind == ShapeKind::Disk && p.mode != DimensionMode::Planar)
        throw ConfigError("geometry: a disk needs planar mode (use sphere for axisymmetric)");
    if (!(p.R_far >= 5.0 * p.shape.max_radius()) || !std::isfinite(p.R_far))
        throw ConfigError("geometry.R_far must be at least 5 obstacle radii");
    if (p.n_r < 4 || p.n_r > 4096) throw ConfigError("geometry.n_r must be in [4,4096]");
    if (p.n_t < 4 || p.n_t > 4096) throw ConfigError("geometry.n_t must be in [4,4096]");
    if (!(p.grading >= 1.0) || !std::isfinite(p.grading)) throw ConfigError("geometry.grading must be >= 1");
    if (p.quad_order < 2 || p.quad_order > 16) throw ConfigError("geometry.quadrature_order must be in [2,16]");
}

inline ExteriorMesh build_mesh(const MeshParams& params) {
    const MeshParams& p = params;
    validate(p);

    ExteriorMesh m;
    m.p_ = p;
    m.w_ = radial_levels(p.n_r, p.grading);
    for (int i = 0; i < p.n_r; ++i)
        if (!(m.w_[i + 1] > m.w_[i])) throw ConfigError("geometry: grading too strong, radial levels collapse");

    const bool axi = m.axisymmetric();
    const int ring = m.ring_size();
    m.theta_.resize(ring);
    std::vector<std::pair<double, double>> trig(ring);
    for (int j = 0; j < ring; ++j) {
        m.theta_[j] = j * m.dtheta();
        trig[j] = axi ? detail::trig_of_fraction(j, 2L * p.n_t) : detail::trig_of_fraction(j, p.n_t);
    }

    m.nodes_.reserve(std::size_t(p.n_r + 1) * ring);
    for (int i = 0; i <= p.n_r; ++i) {
        const double w = m.w_[i];
        const double rx = (1.0 - w) * p.shape.a + w * p.R_far;
        const double ry = (1.0 - w) * p.shape.b + w * p.R_far;
        for (int j = 0; j < ring; ++j) m.nodes_.emplace_back(rx * trig[j].first, ry * trig[j].second);
    }
    for (int i = 0; i < p.n_r; ++i)
        for (int j = 0; j < p.n_t; ++j)
            m.cells_.push_back({m.node_index(i, j), m.node_index(i + 1, j), m.node_index(i + 1, j + 1),
                                m.node_index(i, j + 1)});

    const GaussRule g = gauss_legendre(p.quad_order);
    const int nq1 = int(g.size());
    const int nq = nq1 * nq1;
    m.local_shape_.resize(4, nq);
    for (int a = 0; a < nq1; ++a)
        for (int b = 0; b < nq1; ++b) m.local_shape_.col(a * nq1 + b) = ExteriorMesh::basis_values(g.points[a], g.points[b]);

    const std::size_t total = std::size_t(m.num_cells()) * nq;
    m.qp_x_.resize(total);
    m.qp_w_.resize(total);
    m.qp_grad_.resize(total);
    for (int c = 0; c < m.num_cells(); ++c) {
        for (int a = 0; a < nq1; ++a) {
            for (int b = 0; b < nq1; ++b) {
                const double xi = g.points[a], eta = g.points[b];
                const std::size_t k = std::size_t(c) * nq + a * nq1 + b;
                const Eigen::Matrix2d J = m.cell_jacobian(c, xi, eta);
                const double det = J.determinant();
                if (!(det > 0.0)) throw ConfigError("geometry: non-positive cell Jacobian");
                m.qp_x_[k] = m.cell_point(c, xi, eta);
                m.qp_w_[k] = g.weights[a] * g.weights[b] * det * m.measure_weight(m.qp_x_[k]);
                m.qp_grad_[k] = m.basis_gradients(c, xi, eta);
            }
        }
    }

    // boundary facets: obstacle and far field for every sector, axis edges in axisymmetric mode
    for (int j = 0; j < p.n_t; ++j) {
        const int c0 = m.cell_index(0, j), c1 = m.cell_index(p.n_r - 1, j);
        m.facets_.push_back({c0, 0, BoundaryTag::Obstacle, {m.node_index(0, j), m.node_index(0, j + 1)}});
        m.facets_.push_back({c1, 1, BoundaryTag::FarField, {m.node_index(p.n_r, j), m.node_index(p.n_r, j + 1)}});
    }
    if (axi) {
        for (int i = 0; i < p.n_r; ++i) {
            m.facets_.push_back({m.cell_index(i, 0), 2, BoundaryTag::Axis, {m.node_index(i, 0), m.node_index(i + 1, 0)}});
            m.facets_.push_back({m.cell_index(i, p.n_t - 1), 3, BoundaryTag::Axis,
                                 {m.node_index(i, p.n_t), m.node_index(i + 1, p.n_t)}});
        }
    }

    for (int f = 0; f < int(m.facets_.size()); ++f) {
        const BoundaryFacet& bf = m.facets_[f];
        for (int a = 0; a < nq1; ++a) {
            FacetPoint fp;
            fp.facet = f;
            const double s = g.points[a];
            if (bf.side <= 1) {
                fp.xi = bf.side == 0 ? 0.0 : 1.0;
                fp.eta = s;
            } else {
                fp.xi = s;
                fp.eta = bf.side == 2 ? 0.0 : 1.0;
            }
            const Eigen::Matrix2d J = m.cell_jacobian(bf.cell, fp.xi, fp.eta);
            fp.x = m.cell_point(bf.cell, fp.xi, fp.eta);
            Eigen::Vector2d t = bf.side <= 1 ? J.col(1) : J.col(0);
            // t runs with increasing theta (sides 0/1) or increasing w (sides 2/3)
            Eigen::Vector2d n;
            switch (bf.side) {
                case 0: n = Eigen::Vector2d(-t.y(), t.x()); break;
                case 1: n = Eigen::Vector2d(t.y(), -t.x()); break;
                case 2: n = Eigen::Vector2d(t.y(), -t.x()); break;
                default: n = Eigen::Vector2d(-t.y(), t.x()); break;
            }
            const double len = t.norm();
            fp.normal = n / len;
            fp.weight = g.weights[a] * len * m.measure_weight(fp.x);
            m.facet_pts_.push_back(fp);
        }
    }
    return m;
}

/// Unit normal of a boundary facet, evaluated at its parametric midpoint.
struct FacetNormal {
    int facet = 0;
    BoundaryTag tag = BoundaryTag::Obstacle;
    Eigen::Vector2d x;
    Eigen::Vector2d normal;  // out of the fluid region
};

inline Eigen::Vector2d boundary_normal(const ExteriorMesh& m, BoundaryTag tag, double theta) {
    const double w = tag == BoundaryTag::Obstacle ? 0.0 : 1.0;
    if (tag == BoundaryTag::Axis) throw InputError("boundary_normal: axis normal is (0,-1) everywhere");
    const Eigen::Vector2d t = m.map_jacobian(w, theta).col(1);
    const Eigen::Vector2d away_from_body(t.y(), -t.x());
    return (tag == BoundaryTag::Obstacle ? -away_from_body : away_from_body).normalized();
}

inline std::vector<FacetNormal> boundary_normals(const ExteriorMesh& m) {
    std::vector<FacetNormal> out;
    out.reserve(m.facets().size());
    for (int f = 0; f < int(m.facets().size()); ++f) {
        const BoundaryFacet& bf = m.facets()[f];
        FacetNormal fn{f, bf.tag, {}, {}};
        const double xi = bf.side == 0 ? 0.0 : bf.side == 1 ? 1.0 : 0.5;
        const double eta = bf.side == 2 ? 0.0 : bf.side == 3 ? 1.0 : 0.5;
        fn.x = m.cell_point(bf.cell, xi, eta);
        if (bf.tag == BoundaryTag::Axis) {
            fn.normal = Eigen::Vector2d(0.0, -1.0);
        } else {
            const double theta = (m.cell_sector(bf.cell) + 0.5) * m.dtheta();
            fn.normal = boundary_normal(m, bf.tag, theta);
        }
        out.push_back(fn);
    }
    return out;
}

// ---------------------------------------------------------------------------
// plain-text dump

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_mesh(std::ostream& os, const ExteriorMesh& m) {
    const MeshParams& p = m.params();
    os << "lowmach-mesh v1 mode=" << to_string(p.mode) << " shape=" << to_string(p.shape.kind)
       << " a=" << format_double(p.shape.a) << " b=" << format_double(p.shape.b) << " R_far=" << format_double(p.R_far)
       << " n_r=" << p.n_r << " n_t=" << p.n_t << " grading=" << format_double(p.grading) << " quad=" << p.quad_order
       << " nodes=" << m.num_nodes() << " cells=" << m.num_cells() << " facets=" << m.facets().size() << "\n";
    os << "# nodes: x y\n";
    for (const auto& x : m.nodes()) os << format_double(x.x()) << ' ' << format_double(x.y()) << '\n';
    os << "# cells: n0 n1 n2 n3\n";
    for (const auto& c : m.cells()) os << c[0] << ' ' << c[1] << ' ' << c[2] << ' ' << c[3] << '\n';
    os << "# facets: cell side tag n0 n1\n";
    for (const auto& f : m.facets())
        os << f.cell << ' ' << f.side << ' ' << to_string(f.tag) << ' ' << f.nodes[0] << ' ' << f.nodes[1] << '\n';
}

namespace detail {

inline std::string header_value(const std::string& header, const std::string& key) {
    const std::string pat = " " + key + "=";
    const auto pos = header.find(pat);
    if (pos == std::string::npos) throw InputError("mesh dump: header lacks '" + key + "'");
    const auto start = pos + pat.size();
    return header.substr(start, header.find(' ', start) - start);
}

inline std::string next_data_line(std::istream& is) {
    std::string line;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '#') return line;
    throw InputError("mesh dump: truncated file");
}

}  // namespace detail

/// Reads a dump, rebuilds the mesh from its header and checks every table bit-for-bit.
inline ExteriorMesh read_mesh(std::istream& is) {
    std::string header;
    if (!std::getline(is, header) || header.rfind("lowmach-mesh v1", 0) != 0)
        throw InputError("mesh dump: missing 'lowmach-mesh v1' header");
    MeshParams p;
    try {
        p.mode = parse_mode(detail::header_value(header, "mode"));
        p.shape.kind = parse_shape(detail::header_value(header, "shape"));
        p.shape.a = std::stod(detail::header_value(header, "a"));
        p.shape.b = std::stod(detail::header_value(header, "b"));
        p.R_far = std::stod(detail::header_value(header, "R_far"));
        p.n_r = std::stoi(detail::header_value(header, "n_r"));
        p.n_t = std::stoi(detail::header_value(header, "n_t"));
        p.grading = std::stod(detail::header_value(header, "grading"));
        p.quad_order = std::stoi(detail::header_value(header, "quad"));
    } catch (const std::logic_error& e) {
        if (dynamic_cast<const InputError*>(&e)) throw;
        throw InputError(std::string("mesh dump: bad header value: ") + e.what());
    }
    ExteriorMesh m = build_mesh(p);
    for (const auto& x : m.nodes()) {
        std::istringstream ls(detail::next_data_line(is));
        double a, b;
        if (!(ls >> a >> b) || a != x.x() || b != x.y()) throw InputError("mesh dump: node table does not match header");
    }
    for (const auto& c : m.cells()) {
        std::istringstream ls(detail::next_data_line(is));
        std::array<int, 4> r{};
        if (!(ls >> r[0] >> r[1] >> r[2] >> r[3]) || r != c) throw InputError("mesh dump: cell table does not match header");
    }
    for (const auto& f : m.facets()) {
        std::istringstream ls(detail::next_data_line(is));
        int cell, side, n0, n1;
        std::string tag;
        if (!(ls >> cell >> side >> tag >> n0 >> n1) || cell != f.cell || side != f.side || tag != to_string(f.tag) ||
            n0 != f.nodes[0] || n1 != f.nodes[1])
            throw InputError("mesh dump: facet table does not match header");
    }
    return m;
}

}  // namespace lowmach
