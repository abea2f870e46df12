#pragma once

// Plane and flat Kirchhoff-Love plate stiffness on a trimmed NURBS patch with
// mixed integration over the pw/tra/t/ia element groups.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trimquad/error.hpp"
#include "trimquad/quadrature.hpp"
#include "trimquad/spline.hpp"
#include "trimquad/trim.hpp"

namespace trimquad {

enum class MaterialMode { plane_stress, plane_strain, plate_bending };
enum class Method { gauss, pw_trimm };

inline const char* to_string(MaterialMode m) {
    switch (m) {
        case MaterialMode::plane_stress: return "plane_stress";
        case MaterialMode::plane_strain: return "plane_strain";
        default: return "plate_bending";
    }
}

inline const char* to_string(Method m) { return m == Method::gauss ? "gauss" : "pw_trimm"; }

struct Material {
    double E = 1.0;
    double nu = 0.0;
    double thickness = 1.0;
    MaterialMode mode = MaterialMode::plane_stress;

    void validate() const {
        if (!(E > 0.0)) throw ValidationError("Young's modulus must be positive");
        if (!(nu > -1.0 && nu < 0.5)) throw ValidationError("Poisson ratio must lie in (-1, 0.5)");
        if (!(thickness > 0.0)) throw ValidationError("thickness must be positive");
    }

    /// Membrane constitutive matrix for (eps_xx, eps_yy, gamma_xy).
    Eigen::Matrix3d plane_matrix() const {
        Eigen::Matrix3d D = Eigen::Matrix3d::Zero();
        if (mode == MaterialMode::plane_strain) {
            const double f = E / ((1.0 + nu) * (1.0 - 2.0 * nu));
            D << 1.0 - nu, nu, 0.0, nu, 1.0 - nu, 0.0, 0.0, 0.0, 0.5 - nu;
            return f * D;
        }
        D << 1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, 0.5 * (1.0 - nu);
        return E / (1.0 - nu * nu) * D;
    }

    double flexural_rigidity() const { return E * thickness * thickness * thickness / (12.0 * (1.0 - nu * nu)); }

    /// Bending constitutive matrix for (w_xx, w_yy, 2 w_xy).
    Eigen::Matrix3d bending_matrix() const {
        Eigen::Matrix3d D;
        D << 1.0, nu, 0.0, nu, 1.0, 0.0, 0.0, 0.0, 0.5 * (1.0 - nu);
        return flexural_rigidity() * D;
    }
};

/// Patch edges in parameter space.
enum class Edge { left, right, bottom, top };

inline const char* to_string(Edge e) {
    switch (e) {
        case Edge::left: return "left";
        case Edge::right: return "right";
        case Edge::bottom: return "bottom";
        default: return "top";
    }
}

/// Homogeneous constraint on one displacement component (0 = x, 1 = y; plate: 0 = z) of an edge.
struct DirichletBC {
    Edge edge = Edge::left;
    int component = 0;
};

/// Cartesian stress (sxx, syy, sxy) at a physical point.
using StressField = std::function<std::array<double, 3>(double x, double y)>;

/// Traction on an edge, given as a stress field contracted with the outward normal.
struct NeumannBC {
    Edge edge = Edge::left;
    std::string tag;  ///< e.g. "kirsch" or "constant"
    StressField stress;
};

struct ProblemSpec {
    NurbsSurfacePatch patch;
    std::vector<TrimLoop> loops;
    Material material;
    ElementType element_type = ElementType::plane;
    std::vector<DirichletBC> dirichlet;
    std::vector<NeumannBC> neumann;
    double q_z = 0.0;  ///< transverse pressure (plate)
    Method method = Method::pw_trimm;

    int components() const { return element_type == ElementType::plane ? 2 : 1; }

    Rect parametric_bounds() const {
        return {patch.space_u().lower(), patch.space_u().upper(), patch.space_v().lower(), patch.space_v().upper()};
    }

    TrimmedDomain domain() const { return TrimmedDomain(parametric_bounds(), loops); }

    void validate() const {
        material.validate();
        const bool plate = element_type == ElementType::kl_plate;
        if (plate != (material.mode == MaterialMode::plate_bending))
            throw ValidationError("element type " + std::string(to_string(element_type)) +
                                  " is inconsistent with material mode " + to_string(material.mode));
        for (const auto& bc : dirichlet)
            if (bc.component < 0 || bc.component >= components())
                throw ValidationError("constraint component " + std::to_string(bc.component) + " on edge " +
                                      to_string(bc.edge) + " does not exist");
        if (plate && !neumann.empty()) throw ValidationError("edge tractions are not supported for plates");
        for (const auto& n : neumann)
            if (!n.stress) throw ValidationError("traction on edge " + std::string(to_string(n.edge)) + " has no field");
        if (plate) {
            for (const auto* s : {&patch.space_u(), &patch.space_v()}) {
                if (s->degree() < 2) throw UnsupportedContinuity("plate elements need degree >= 2");
                for (int r : s->interior_regularity())
                    if (r < 1) throw UnsupportedContinuity("plate elements need C1 continuity at every interior knot");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Kirsch field: infinite plate with a circular hole under uniaxial tension T along x.

/// (s_rr, s_tt, s_rt) at polar coordinates (r, theta) around the hole centre.
inline std::array<double, 3> kirsch_polar(double T, double R, double r, double theta) {
    const double a2 = R * R / (r * r), a4 = a2 * a2;
    const double c2 = std::cos(2.0 * theta), s2 = std::sin(2.0 * theta);
    return {0.5 * T * (1.0 - a2) + 0.5 * T * (1.0 - 4.0 * a2 + 3.0 * a4) * c2,
            0.5 * T * (1.0 + a2) - 0.5 * T * (1.0 + 3.0 * a4) * c2,
            -0.5 * T * (1.0 + 2.0 * a2 - 3.0 * a4) * s2};
}

inline std::array<double, 3> kirsch_cartesian(double T, double R, double x, double y) {
    const double r = std::hypot(x, y), th = std::atan2(y, x);
    const auto [srr, stt, srt] = kirsch_polar(T, R, r, th);
    const double c = std::cos(th), s = std::sin(th);
    return {srr * c * c + stt * s * s - 2.0 * srt * s * c, srr * s * s + stt * c * c + 2.0 * srt * s * c,
            (srr - stt) * s * c + srt * (c * c - s * s)};
}

inline StressField kirsch_field(double T, double R, double cx = 0.0, double cy = 0.0) {
    return [=](double x, double y) { return kirsch_cartesian(T, R, x - cx, y - cy); };
}

// ---------------------------------------------------------------------------
// Point kernels

/// Basis derivatives with respect to physical x, y at one point.
struct PhysicalBasis {
    double det = 0.0;
    std::vector<double> N, Nx, Ny, Nxx, Nyy, Nxy;
};

/// Push rational derivatives to the (flat) physical plane. Second derivatives use the full chain rule.
inline PhysicalBasis physical_basis(const SurfaceEval& s, int order) {
    const double xu = s.xu[0], yu = s.xu[1], xv = s.xv[0], yv = s.xv[1];
    PhysicalBasis b;
    b.det = xu * yv - xv * yu;
    if (!(b.det > 0.0)) throw GeometryError("non-positive geometry Jacobian " + std::to_string(b.det));
    const std::size_t n = s.R.size();
    b.N = s.R;
    b.Nx.resize(n);
    b.Ny.resize(n);
    // [Nu; Nv] = J^T [Nx; Ny]
    for (std::size_t k = 0; k < n; ++k) {
        b.Nx[k] = (yv * s.Ru[k] - yu * s.Rv[k]) / b.det;
        b.Ny[k] = (-xv * s.Ru[k] + xu * s.Rv[k]) / b.det;
    }
    if (order < 2) return b;
    Eigen::Matrix3d H;
    H << xu * xu, 2.0 * xu * yu, yu * yu, xu * xv, xu * yv + xv * yu, yu * yv, xv * xv, 2.0 * xv * yv, yv * yv;
    const Eigen::PartialPivLU<Eigen::Matrix3d> lu(H);
    b.Nxx.resize(n);
    b.Nxy.resize(n);
    b.Nyy.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::Vector3d rhs(s.Ruu[k] - b.Nx[k] * s.xuu[0] - b.Ny[k] * s.xuu[1],
                                  s.Ruv[k] - b.Nx[k] * s.xuv[0] - b.Ny[k] * s.xuv[1],
                                  s.Rvv[k] - b.Nx[k] * s.xvv[0] - b.Ny[k] * s.xvv[1]);
        const Eigen::Vector3d d = lu.solve(rhs);
        b.Nxx[k] = d[0];
        b.Nxy[k] = d[1];
        b.Nyy[k] = d[2];
    }
    return b;
}

/// B^T D B det(J) w t for the plane element; local dofs interleaved (x0, y0, x1, y1, ...).
inline Eigen::MatrixXd element_stiffness_plane(const SurfaceEval& s, const Material& m, double weight) {
    const auto b = physical_basis(s, 1);
    const auto n = static_cast<Eigen::Index>(b.N.size());
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(3, 2 * n);
    for (Eigen::Index k = 0; k < n; ++k) {
        B(0, 2 * k) = b.Nx[k];
        B(1, 2 * k + 1) = b.Ny[k];
        B(2, 2 * k) = b.Ny[k];
        B(2, 2 * k + 1) = b.Nx[k];
    }
    return B.transpose() * m.plane_matrix() * B * (b.det * weight * m.thickness);
}

/// Bending stiffness contribution of the flat Kirchhoff-Love plate; one dof (w) per function.
inline Eigen::MatrixXd element_stiffness_plate(const SurfaceEval& s, const Material& m, double weight) {
    const auto b = physical_basis(s, 2);
    const auto n = static_cast<Eigen::Index>(b.N.size());
    Eigen::MatrixXd B(3, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        B(0, k) = b.Nxx[k];
        B(1, k) = b.Nyy[k];
        B(2, k) = 2.0 * b.Nxy[k];
    }
    return B.transpose() * m.bending_matrix() * B * (b.det * weight);
}

// ---------------------------------------------------------------------------
// Rules and assembly

/// Integration data shared by both methods for one refined patch.
struct IntegrationRules {
    DomainClassification classification;
    std::optional<QuadRule2D> patchwise;  ///< only for pw_trimm
    QuadRule1D gauss_u, gauss_v;          ///< (p+1) and (q+1) points on [-1, 1]
};

inline QuadRule2D patchwise_rule(const SplineSpace1D& su, const SplineSpace1D& sv, ElementType type) {
    const auto ru = solve_patchwise_1d(target_space(su, type));
    const auto rv = solve_patchwise_1d(target_space(sv, type));
    return tensor_rule(ru, rv, ElementMesh(su, sv));
}

inline IntegrationRules build_rules(const ProblemSpec& spec, const TrimmedDomain& dom) {
    const auto& su = spec.patch.space_u();
    const auto& sv = spec.patch.space_v();
    IntegrationRules r;
    r.classification = classify_domain(dom, su, sv);
    if (spec.method == Method::pw_trimm) r.patchwise = patchwise_rule(su, sv, spec.element_type);
    r.gauss_u = gauss_legendre(su.degree() + 1);
    r.gauss_v = gauss_legendre(sv.degree() + 1);
    return r;
}

/// Points per group actually used by an assembly.
struct PointTally {
    long long pw = 0;        ///< patch-wise points in pw elements
    long long tra_pw = 0;    ///< patch-wise points in tra elements
    long long tra_gauss = 0; ///< element Gauss points in tra elements
    long long gauss = 0;     ///< element Gauss points in pw elements (gauss method)
    long long t = 0;         ///< mapped points in trimmed elements

    long long total() const { return pw + tra_pw + tra_gauss + gauss + t; }
};

struct AssembledSystem {
    Eigen::SparseMatrix<double> K;  ///< free dofs only
    Eigen::VectorXd f;
    std::vector<int> dof_map;  ///< (control point * components + component) -> free index or -1
    int components = 1;
    CountReport counts;
    PointTally tally;
    long long cell_overhead = 0;  ///< mapped points beyond (p+1)(q+1) per trimmed element

    int dofs() const { return static_cast<int>(f.size()); }
};

namespace detail {

inline std::vector<int> edge_points(const NurbsSurfacePatch& patch, Edge e) {
    std::vector<int> out;
    const int nu = patch.num_u(), nv = patch.num_v();
    if (e == Edge::left || e == Edge::right)
        for (int j = 0; j < nv; ++j) out.push_back(patch.index(e == Edge::left ? 0 : nu - 1, j));
    else
        for (int i = 0; i < nu; ++i) out.push_back(patch.index(i, e == Edge::bottom ? 0 : nv - 1));
    return out;
}

/// Sparse accumulator over the fixed support-overlap pattern of the free dofs.
class GlobalMatrix {
public:
    GlobalMatrix(const NurbsSurfacePatch& patch, const std::vector<int>& dof_map, int comps, int ndof)
        : K_(ndof, ndof) {
        const int nu = patch.num_u(), nv = patch.num_v();
        const int pu = patch.space_u().degree(), pv = patch.space_v().degree();
        std::vector<Eigen::Triplet<double>> pattern;
        for (int j = 0; j < nv; ++j)
            for (int i = 0; i < nu; ++i)
                for (int jj = std::max(0, j - pv); jj <= std::min(nv - 1, j + pv); ++jj)
                    for (int ii = std::max(0, i - pu); ii <= std::min(nu - 1, i + pu); ++ii)
                        for (int a = 0; a < comps; ++a)
                            for (int b = 0; b < comps; ++b) {
                                const int r = dof_map[patch.index(i, j) * comps + a];
                                const int c = dof_map[patch.index(ii, jj) * comps + b];
                                if (r >= 0 && c >= 0) pattern.emplace_back(r, c, 0.0);
                            }
        K_.setFromTriplets(pattern.begin(), pattern.end());
        K_.makeCompressed();
    }

    void add(int r, int c, double v) { K_.coeffRef(r, c) += v; }
    Eigen::SparseMatrix<double>& matrix() { return K_; }

private:
    Eigen::SparseMatrix<double> K_;
};

/// Which function pairs a point family may feed.
enum class PairMask { all, untrimmed_only, any_trimmed };

inline bool pair_allowed(PairMask m, bool ta, bool tb) {
    switch (m) {
        case PairMask::all: return true;
        case PairMask::untrimmed_only: return !ta && !tb;
        default: return ta || tb;
    }
}

/// Local stiffness and load over one set of supported functions, flushed into the globals.
class LocalBlock {
public:
    explicit LocalBlock(const ProblemSpec& spec) : spec_(spec), comps_(spec.components()) {}

    void add_point(const SurfaceEval& s, double weight) {
        if (index_ != s.index) reset(s.index);
        const bool plate = spec_.element_type == ElementType::kl_plate;
        K_ += plate ? element_stiffness_plate(s, spec_.material, weight)
                    : element_stiffness_plane(s, spec_.material, weight);
        if (plate && spec_.q_z != 0.0) {
            const auto b = physical_basis(s, 0);
            for (std::size_t k = 0; k < s.R.size(); ++k) f_[static_cast<Eigen::Index>(k)] += s.R[k] * spec_.q_z * b.det * weight;
        }
    }

    /// Scatter into the globals using the function labels and pair mask, then reset.
    void flush(GlobalMatrix& K, Eigen::VectorXd& f, const std::vector<int>& dof_map,
               const std::vector<FunctionLabel>& labels, PairMask mask) {
        if (index_.empty()) return;
        const auto n = index_.size();
        for (std::size_t a = 0; a < n; ++a) {
            const bool ta = labels[index_[a]] == FunctionLabel::trimmed;
            for (int ca = 0; ca < comps_; ++ca) {
                const int r = dof_map[index_[a] * comps_ + ca];
                if (r < 0) continue;
                const auto la = static_cast<Eigen::Index>(a * comps_ + ca);
                // loads are single-function integrals: masked like a pair of a function with itself
                if (pair_allowed(mask, ta, ta)) f[r] += f_[la];
                for (std::size_t b = 0; b < n; ++b) {
                    const bool tb = labels[index_[b]] == FunctionLabel::trimmed;
                    if (!pair_allowed(mask, ta, tb)) continue;
                    for (int cb = 0; cb < comps_; ++cb) {
                        const int c = dof_map[index_[b] * comps_ + cb];
                        if (c < 0) continue;
                        const double v = K_(la, static_cast<Eigen::Index>(b * comps_ + cb));
                        if (v != 0.0) K.add(r, c, v);
                    }
                }
            }
        }
        index_.clear();
    }

    bool pending_other(const SurfaceEval& s) const { return !index_.empty() && index_ != s.index; }

private:
    void reset(const std::vector<int>& index) {
        index_ = index;
        const auto m = static_cast<Eigen::Index>(index_.size() * comps_);
        K_.setZero(m, m);
        f_.setZero(m);
    }

    const ProblemSpec& spec_;
    int comps_;
    std::vector<int> index_;
    Eigen::MatrixXd K_;
    Eigen::VectorXd f_;
};

/// Feed (u, v, weight) points to a block, flushing whenever the supported function set changes.
inline void integrate_points(const ProblemSpec& spec, const std::vector<std::array<double, 3>>& pts, int deriv,
                             GlobalMatrix& K, Eigen::VectorXd& f, const std::vector<int>& dof_map,
                             const std::vector<FunctionLabel>& labels, PairMask mask) {
    LocalBlock block(spec);
    for (const auto& [u, v, w] : pts) {
        const auto s = eval_nurbs_surface(spec.patch, u, v, deriv);
        if (block.pending_other(s)) block.flush(K, f, dof_map, labels, mask);
        block.add_point(s, w);
    }
    block.flush(K, f, dof_map, labels, mask);
}

/// Degree of the trimming curve bounding a cell (1 for straight cells).
inline int cell_curve_degree(const TrimmedDomain& dom, const Cell& c) {
    return c.curve ? dom.segment(c.curve->loop, c.curve->segment).space().degree() : 1;
}

/// Elements along a patch edge.
inline std::vector<int> edge_elements(const ElementMesh& mesh, Edge e) {
    std::vector<int> out;
    if (e == Edge::left || e == Edge::right)
        for (int ev = 0; ev < mesh.nv(); ++ev) out.push_back(mesh.index(e == Edge::left ? 0 : mesh.nu() - 1, ev));
    else
        for (int eu = 0; eu < mesh.nu(); ++eu) out.push_back(mesh.index(eu, e == Edge::bottom ? 0 : mesh.nv() - 1));
    return out;
}

/// Edge tractions sigma . n integrated with (max(p,q)+1) Gauss points per edge element.
inline void apply_tractions(const ProblemSpec& spec, const ElementMesh& mesh, const std::vector<ElementLabel>& labels,
                            const std::vector<int>& dof_map, Eigen::VectorXd& f) {
    const auto& su = spec.patch.space_u();
    const auto& sv = spec.patch.space_v();
    const auto g = gauss_legendre(std::max(su.degree(), sv.degree()) + 1);
    for (const auto& bc : spec.neumann) {
        for (int e : edge_elements(mesh, bc.edge))
            if (labels[e] != ElementLabel::active_untrimmed)
                throw ValidationError("traction requested on trimmed edge " + std::string(to_string(bc.edge)));
        const bool along_u = bc.edge == Edge::bottom || bc.edge == Edge::top;
        const auto& brk = along_u ? mesh.u_breaks : mesh.v_breaks;
        const double fixed = bc.edge == Edge::left ? su.lower()
                             : bc.edge == Edge::right ? su.upper()
                             : bc.edge == Edge::bottom ? sv.lower()
                                                       : sv.upper();
        // counter-clockwise traversal sign per edge
        const double sgn = (bc.edge == Edge::bottom || bc.edge == Edge::right) ? 1.0 : -1.0;
        for (std::size_t k = 0; k + 1 < brk.size(); ++k) {
            const double a = brk[k], b = brk[k + 1];
            for (std::size_t q = 0; q < g.size(); ++q) {
                const double t = 0.5 * (a + b) + 0.5 * (b - a) * g.points[q];
                const double w = 0.5 * (b - a) * g.weights[q];
                const double u = along_u ? t : fixed, v = along_u ? fixed : t;
                const auto s = eval_nurbs_surface(spec.patch, u, v, 1);
                const Vec3& d = along_u ? s.xu : s.xv;
                // outward normal scaled by the arc-length element
                const double nx = sgn * d[1], ny = -sgn * d[0];
                const auto st = bc.stress(s.x[0], s.x[1]);
                const double tx = st[0] * nx + st[2] * ny, ty = st[2] * nx + st[1] * ny;
                for (std::size_t kk = 0; kk < s.R.size(); ++kk) {
                    const int base = s.index[kk] * 2;
                    const double c = s.R[kk] * w * spec.material.thickness;
                    if (dof_map[base] >= 0) f[dof_map[base]] += c * tx;
                    if (dof_map[base + 1] >= 0) f[dof_map[base + 1]] += c * ty;
                }
            }
        }
    }
}

}  // namespace detail

/// Free-dof numbering: inactive functions and constrained components are dropped.
inline std::vector<int> build_dof_map(const ProblemSpec& spec, const std::vector<FunctionLabel>& functions) {
    const int comps = spec.components();
    std::vector<int> map(static_cast<std::size_t>(spec.patch.size()) * comps, 0);
    for (int i = 0; i < spec.patch.size(); ++i)
        if (functions[i] == FunctionLabel::inactive)
            for (int c = 0; c < comps; ++c) map[i * comps + c] = -1;
    for (const auto& bc : spec.dirichlet)
        for (int i : detail::edge_points(spec.patch, bc.edge)) map[i * comps + bc.component] = -1;
    int next = 0;
    for (auto& m : map)
        if (m >= 0) m = next++;
    return map;
}

inline AssembledSystem assemble(const ProblemSpec& spec, const TrimmedDomain& dom, const IntegrationRules& rules) {
    const auto& cls = rules.classification;
    const auto& mesh = cls.mesh;
    const int p = spec.patch.space_u().degree(), q = spec.patch.space_v().degree();
    const int deriv = spec.element_type == ElementType::kl_plate ? 2 : 1;
    if (spec.method == Method::pw_trimm && !rules.patchwise)
        throw ValidationError("pw_trimm assembly needs a patch-wise rule");

    AssembledSystem sys;
    sys.components = spec.components();
    sys.dof_map = build_dof_map(spec, cls.functions);
    const int ndof = static_cast<int>(std::count_if(sys.dof_map.begin(), sys.dof_map.end(), [](int d) { return d >= 0; }));
    sys.f = Eigen::VectorXd::Zero(ndof);
    detail::GlobalMatrix K(spec.patch, sys.dof_map, sys.components, ndof);

    using detail::PairMask;
    using Triple = std::array<double, 3>;

    for (int e = 0; e < mesh.size(); ++e) {
        const Group g = cls.groups[e];
        if (g == Group::ia) continue;
        if (g == Group::t) {
            std::vector<Triple> pts;
            for (const auto& cell : cls.partitions.at(e).cells)
                for (const auto& mp : map_gauss_to_cell(dom, cell, p, q, detail::cell_curve_degree(dom, cell)))
                    pts.push_back({mp.u, mp.v, mp.weight});
            sys.tally.t += static_cast<long long>(pts.size());
            detail::integrate_points(spec, pts, deriv, K, sys.f, sys.dof_map, cls.functions, PairMask::all);
            continue;
        }
        std::vector<Triple> gpts;
        const double u0 = mesh.u_breaks[mesh.eu(e)], u1 = mesh.u_breaks[mesh.eu(e) + 1];
        const double v0 = mesh.v_breaks[mesh.ev(e)], v1 = mesh.v_breaks[mesh.ev(e) + 1];
        for (std::size_t b = 0; b < rules.gauss_v.size(); ++b)
            for (std::size_t a = 0; a < rules.gauss_u.size(); ++a)
                gpts.push_back({0.5 * (u0 + u1) + 0.5 * (u1 - u0) * rules.gauss_u.points[a],
                                0.5 * (v0 + v1) + 0.5 * (v1 - v0) * rules.gauss_v.points[b],
                                0.25 * (u1 - u0) * (v1 - v0) * rules.gauss_u.weights[a] * rules.gauss_v.weights[b]});
        if (spec.method == Method::gauss) {
            sys.tally.gauss += static_cast<long long>(gpts.size());
            detail::integrate_points(spec, gpts, deriv, K, sys.f, sys.dof_map, cls.functions, PairMask::all);
            continue;
        }
        const auto& rule = *rules.patchwise;
        std::vector<Triple> ppts;
        for (int idx : rule.buckets[e]) ppts.push_back({rule.points[idx].u, rule.points[idx].v, rule.points[idx].weight});
        if (g == Group::pw) {
            sys.tally.pw += static_cast<long long>(ppts.size());
            detail::integrate_points(spec, ppts, deriv, K, sys.f, sys.dof_map, cls.functions, PairMask::all);
        } else {
            sys.tally.tra_pw += static_cast<long long>(ppts.size());
            sys.tally.tra_gauss += static_cast<long long>(gpts.size());
            detail::integrate_points(spec, ppts, deriv, K, sys.f, sys.dof_map, cls.functions,
                                     PairMask::untrimmed_only);
            detail::integrate_points(spec, gpts, deriv, K, sys.f, sys.dof_map, cls.functions,
                                     PairMask::any_trimmed);
        }
    }
    if (!spec.neumann.empty()) detail::apply_tractions(spec, mesh, cls.elements, sys.dof_map, sys.f);

    sys.K = std::move(K.matrix());
    const long long gauss_elem = static_cast<long long>(p + 1) * (q + 1);
    sys.cell_overhead = sys.tally.t - gauss_elem * cls.counts.t;
    sys.counts = predict_counts(p, q, spec.element_type, cls.counts, sys.tally.total());
    return sys;
}

// ---------------------------------------------------------------------------
// Solve and energy

struct Solution {
    Eigen::VectorXd u;  ///< free dofs
    double residual = 0.0;  ///< ||K u - f|| / ||f||
    bool scaled = true;
};

/// Direct symmetric solve, optionally after two-sided diagonal scaling D^-1/2 K D^-1/2.
inline Solution solve(const AssembledSystem& sys, bool scale = true) {
    Solution out;
    out.scaled = scale;
    const auto n = sys.K.rows();
    if (n == 0) {
        out.u = Eigen::VectorXd::Zero(0);
        return out;
    }
    Eigen::VectorXd s = Eigen::VectorXd::Ones(n);
    if (scale) {
        const Eigen::VectorXd d = sys.K.diagonal();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(d[i] > 0.0))
                throw SolverError("non-positive diagonal entry " + std::to_string(d[i]) + " at dof " + std::to_string(i));
            s[i] = 1.0 / std::sqrt(d[i]);
        }
    }
    const Eigen::SparseMatrix<double> Ks = s.asDiagonal() * sys.K * s.asDiagonal();
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Ks);
    if (ldlt.info() != Eigen::Success) throw SolverError("symmetric factorization failed");
    const Eigen::VectorXd D = ldlt.vectorD();
    Eigen::Index imin = 0;
    const double dmin = D.minCoeff(&imin);
    if (!(dmin > 0.0))
        throw SolverError("matrix is not positive definite: pivot " + std::to_string(dmin) + " at position " +
                          std::to_string(imin));
    const Eigen::VectorXd y = ldlt.solve(s.asDiagonal() * sys.f);
    out.u = s.asDiagonal() * y;
    const double fn = sys.f.norm();
    out.residual = fn > 0.0 ? (sys.K * out.u - sys.f).norm() / fn : (sys.K * out.u).norm();
    return out;
}

struct EnergyReport {
    double W = 0.0;
    double W_ref = 0.0;
    double error = 0.0;  ///< |W - W_ref| / |W_ref|, 0 without reference
    int dofs = 0;
    CountReport counts;
};

/// W = 1/2 u^T K u; error is NaN without a reference.
inline EnergyReport elastic_energy(const Solution& sol, const AssembledSystem& sys, double W_ref = 0.0) {
    EnergyReport r;
    r.W = sol.u.size() ? 0.5 * sol.u.dot(sys.K * sol.u) : 0.0;
    r.W_ref = W_ref;
    r.error = W_ref != 0.0 ? std::abs(r.W - W_ref) / std::abs(W_ref) : std::numeric_limits<double>::quiet_NaN();
    r.dofs = sys.dofs();
    r.counts = sys.counts;
    return r;
}

/// Displacement component at a parametric point.
inline double evaluate_displacement(const ProblemSpec& spec, const AssembledSystem& sys, const Solution& sol, double u,
                                    double v, int component) {
    const auto s = eval_nurbs_surface(spec.patch, u, v, 0);
    double out = 0.0;
    for (std::size_t k = 0; k < s.R.size(); ++k) {
        const int d = sys.dof_map[s.index[k] * sys.components + component];
        if (d >= 0) out += s.R[k] * sol.u[d];
    }
    return out;
}

/// Classification, rules, assembly, solve and energy in one call.
struct RunResult {
    AssembledSystem system;
    Solution solution;
    EnergyReport energy;
};

inline RunResult run(const ProblemSpec& spec, double W_ref = 0.0) {
    spec.validate();
    const auto dom = spec.domain();
    const auto rules = build_rules(spec, dom);
    RunResult r;
    r.system = assemble(spec, dom, rules);
    r.solution = solve(r.system);
    r.energy = elastic_energy(r.solution, r.system, W_ref);
    return r;
}

}  // namespace trimquad
