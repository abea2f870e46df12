#pragma once

// B-spline and NURBS machinery: knot vectors, univariate spline spaces,
// basis evaluation with derivatives, rational curves and surface patches,
// target spaces of the stiffness integrands and exact refinement.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "trimquad/error.hpp"

namespace trimquad {

using Vec2 = std::array<double, 2>;
using Vec3 = std::array<double, 3>;

enum class ElementType { plane, kl_plate };

inline const char* to_string(ElementType e) { return e == ElementType::plane ? "plane" : "kl_plate"; }

/// Non-decreasing open knot vector with its polynomial degree.
class KnotVector {
public:
    KnotVector() = default;

    KnotVector(std::vector<double> knots, int degree) : knots_(std::move(knots)), degree_(degree) {
        validate();
    }

    int degree() const { return degree_; }
    const std::vector<double>& knots() const { return knots_; }
    std::size_t size() const { return knots_.size(); }
    double operator[](std::size_t i) const { return knots_[i]; }
    double front() const { return knots_.front(); }
    double back() const { return knots_.back(); }
    double length() const { return back() - front(); }

    /// Knot identity tolerance used for multiplicity counting.
    double tolerance() const { return 1e-12 * length(); }

    /// Number of basis functions, m - p - 1.
    int num_basis() const { return static_cast<int>(knots_.size()) - degree_ - 1; }

    /// Distinct knot values (breakpoints) including both ends.
    std::vector<double> breakpoints() const {
        std::vector<double> out;
        for (double k : knots_)
            if (out.empty() || k - out.back() > tolerance()) out.push_back(k);
        return out;
    }

    /// Multiplicity of every breakpoint, parallel to breakpoints().
    std::vector<int> multiplicities() const {
        std::vector<int> out;
        double last = 0.0;
        for (std::size_t i = 0; i < knots_.size(); ++i) {
            if (i == 0 || knots_[i] - last > tolerance()) {
                out.push_back(1);
                last = knots_[i];
            } else {
                ++out.back();
            }
        }
        return out;
    }

    int multiplicity(double xi) const {
        int k = 0;
        for (double v : knots_)
            if (std::abs(v - xi) <= tolerance()) ++k;
        return k;
    }

private:
    void validate() const {
        if (degree_ < 0) throw InvalidKnotVector("negative degree");
        if (knots_.size() < static_cast<std::size_t>(2 * degree_ + 2))
            throw InvalidKnotVector("knot vector too short for degree " + std::to_string(degree_));
        for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
            if (!(knots_[i] <= knots_[i + 1])) throw InvalidKnotVector("knot vector is not non-decreasing");
        }
        if (!(length() > 0.0)) throw InvalidKnotVector("knot vector has zero length");
        const auto mult = multiplicities();
        if (mult.front() != degree_ + 1 || mult.back() != degree_ + 1)
            throw InvalidKnotVector("knot vector is not open: end knots must repeat p+1 times");
        for (std::size_t i = 1; i + 1 < mult.size(); ++i) {
            if (mult[i] > degree_ + 1) throw InvalidKnotVector("interior knot multiplicity exceeds p+1");
        }
    }

    std::vector<double> knots_;
    int degree_ = 0;
};

/// Univariate spline space spanned by the B-splines of a knot vector.
class SplineSpace1D {
public:
    SplineSpace1D() = default;
    explicit SplineSpace1D(KnotVector kv) : kv_(std::move(kv)), breaks_(kv_.breakpoints()) {}
    SplineSpace1D(std::vector<double> knots, int degree) : SplineSpace1D(KnotVector(std::move(knots), degree)) {}

    const KnotVector& knot_vector() const { return kv_; }
    const std::vector<double>& knots() const { return kv_.knots(); }
    int degree() const { return kv_.degree(); }
    int dimension() const { return kv_.num_basis(); }
    int num_elements() const { return static_cast<int>(breaks_.size()) - 1; }
    const std::vector<double>& breakpoints() const { return breaks_; }
    double lower() const { return kv_.front(); }
    double upper() const { return kv_.back(); }
    double length() const { return kv_.length(); }

    /// Regularity p - k of every interior breakpoint.
    std::vector<int> interior_regularity() const {
        const auto mult = kv_.multiplicities();
        std::vector<int> r;
        for (std::size_t i = 1; i + 1 < mult.size(); ++i) r.push_back(degree() - mult[i]);
        return r;
    }

    /// Element (non-zero knot span) containing xi; right-closed on the last element.
    int element_of(double xi) const {
        auto it = std::upper_bound(breaks_.begin(), breaks_.end(), xi);
        int e = static_cast<int>(it - breaks_.begin()) - 1;
        return std::clamp(e, 0, num_elements() - 1);
    }

    /// Index range [first, last] of the elements in the support of basis function i.
    std::pair<int, int> support_elements(int i) const {
        const double a = knots()[i];
        const double b = knots()[i + degree() + 1];
        const double tol = kv_.tolerance();
        auto lo = std::lower_bound(breaks_.begin(), breaks_.end(), a - tol);
        auto hi = std::lower_bound(breaks_.begin(), breaks_.end(), b - tol);
        return {static_cast<int>(lo - breaks_.begin()), static_cast<int>(hi - breaks_.begin()) - 1};
    }

private:
    KnotVector kv_;
    std::vector<double> breaks_;
};

/// Knot index i with knots[i] <= xi < knots[i+1]; the last non-empty span for xi at the upper end.
inline int find_span(const KnotVector& kv, double xi) {
    const int p = kv.degree();
    const int n = kv.num_basis();
    const auto& U = kv.knots();
    const double slack = 1e-14 * kv.length();
    if (!(xi >= U[p] - slack && xi <= U[n] + slack))
        throw DomainError("parametric coordinate " + std::to_string(xi) + " outside [" + std::to_string(U[p]) + ", " +
                          std::to_string(U[n]) + "]");
    if (xi >= U[n]) {
        int i = n - 1;
        while (i > p && U[i] >= U[n]) --i;
        return i;
    }
    if (xi <= U[p]) {
        int i = p;
        while (i < n - 1 && U[i + 1] <= U[p]) ++i;
        return i;
    }
    auto it = std::upper_bound(U.begin() + p, U.begin() + n + 1, xi);
    return static_cast<int>(it - U.begin()) - 1;
}

/// Values and derivatives of the p+1 non-zero B-splines at one parameter.
struct BasisEval {
    int span = 0;
    int first = 0;  ///< global index of the first non-zero function (span - p)
    int degree = 0;
    /// ders[k][j]: k-th derivative of function first + j.
    std::vector<std::vector<double>> ders;

    double value(int k, int j) const { return k < static_cast<int>(ders.size()) ? ders[k][j] : 0.0; }
};

/// Cox-de Boor evaluation of all non-zero basis functions and derivatives up to max_deriv.
inline BasisEval eval_basis(const KnotVector& kv, double xi, int max_deriv) {
    if (max_deriv < 0) throw DomainError("negative derivative order");
    const int p = kv.degree();
    const auto& U = kv.knots();
    const int span = find_span(kv, xi);
    xi = std::clamp(xi, U[p], U[kv.num_basis()]);

    std::vector<std::vector<double>> ndu(p + 1, std::vector<double>(p + 1, 0.0));
    std::vector<double> left(p + 1), right(p + 1);
    ndu[0][0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = xi - U[span + 1 - j];
        right[j] = U[span + j] - xi;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    BasisEval out;
    out.span = span;
    out.first = span - p;
    out.degree = p;
    out.ders.assign(max_deriv + 1, std::vector<double>(p + 1, 0.0));
    for (int j = 0; j <= p; ++j) out.ders[0][j] = ndu[j][p];

    const int nd = std::min(max_deriv, p);
    std::vector<std::vector<double>> a(2, std::vector<double>(p + 1, 0.0));
    for (int r = 0; r <= p; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int k = 1; k <= nd; ++k) {
            double d = 0.0;
            const int rk = r - k;
            const int pk = p - k;
            if (r >= k) {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                d = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = rk >= -1 ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
                d += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            out.ders[k][r] = d;
            std::swap(s1, s2);
        }
    }
    double fac = p;
    for (int k = 1; k <= nd; ++k) {
        for (int j = 0; j <= p; ++j) out.ders[k][j] *= fac;
        fac *= (p - k);
    }
    return out;
}

inline BasisEval eval_basis(const SplineSpace1D& space, double xi, int max_deriv) {
    return eval_basis(space.knot_vector(), xi, max_deriv);
}

/// Exact integral of every basis function: (knots[i+p+1] - knots[i]) / (p+1).
inline std::vector<double> exact_integrals(const SplineSpace1D& space) {
    const auto& U = space.knots();
    const int p = space.degree();
    std::vector<double> out(space.dimension());
    for (int i = 0; i < space.dimension(); ++i) out[i] = (U[i + p + 1] - U[i]) / (p + 1);
    return out;
}

inline std::vector<double> greville_abscissae(const SplineSpace1D& space) {
    const auto& U = space.knots();
    const int p = space.degree();
    std::vector<double> g(space.dimension());
    for (int i = 0; i < space.dimension(); ++i) {
        if (p == 0) {
            g[i] = 0.5 * (U[i] + U[i + 1]);
            continue;
        }
        double s = 0.0;
        for (int k = 1; k <= p; ++k) s += U[i + k];
        g[i] = s / p;
    }
    return g;
}

/// Space with one more knot at xi (strictly interior).
inline SplineSpace1D insert_knot(const SplineSpace1D& space, double xi) {
    const double tol = space.knot_vector().tolerance();
    if (!(xi > space.lower() + tol && xi < space.upper() - tol))
        throw InvalidRefinement("knot insertion outside the open domain");
    if (space.knot_vector().multiplicity(xi) + 1 > space.degree() + 1)
        throw InvalidRefinement("knot insertion would exceed multiplicity p+1");
    std::vector<double> U = space.knots();
    // snap onto an existing knot so multiplicity bookkeeping stays exact
    for (double k : U)
        if (std::abs(k - xi) <= tol) xi = k;
    U.insert(std::upper_bound(U.begin(), U.end(), xi), xi);
    return SplineSpace1D(std::move(U), space.degree());
}

/// Same breakpoints with every multiplicity raised by one (degree elevation).
inline SplineSpace1D elevate_degree(const SplineSpace1D& space) {
    const auto brk = space.breakpoints();
    const auto mult = space.knot_vector().multiplicities();
    std::vector<double> U;
    for (std::size_t i = 0; i < brk.size(); ++i) U.insert(U.end(), mult[i] + 1, brk[i]);
    return SplineSpace1D(std::move(U), space.degree() + 1);
}

/// Space whose basis contains all stiffness integrand products of the solution space:
/// degree 2p, each interior knot regularity lowered by one (plane) or two (kl_plate).
inline SplineSpace1D target_space(const SplineSpace1D& solution, ElementType type) {
    const int p = solution.degree();
    const int drop = type == ElementType::plane ? 1 : 2;
    const int q = 2 * p;
    const auto brk = solution.breakpoints();
    const auto reg = solution.interior_regularity();
    if (type == ElementType::kl_plate) {
        for (int r : reg)
            if (r < 1) throw UnsupportedContinuity("Kirchhoff-Love target space needs a C1 solution space");
    }
    std::vector<double> U(q + 1, brk.front());
    for (std::size_t i = 0; i < reg.size(); ++i) {
        const int rt = std::max(reg[i] - drop, -1);
        U.insert(U.end(), q - rt, brk[i + 1]);
    }
    U.insert(U.end(), q + 1, brk.back());
    return SplineSpace1D(std::move(U), q);
}

/// Knot vector with n uniform elements at maximum regularity over [a, b].
inline SplineSpace1D uniform_space(double a, double b, int degree, int n_elements, int regularity = -2) {
    if (regularity == -2) regularity = degree - 1;
    const int mult = degree - regularity;
    std::vector<double> U(degree + 1, a);
    for (int e = 1; e < n_elements; ++e) U.insert(U.end(), mult, a + (b - a) * e / n_elements);
    U.insert(U.end(), degree + 1, b);
    return SplineSpace1D(std::move(U), degree);
}

// ---------------------------------------------------------------------------
// Rational curves in the parametric plane

/// Point and first derivative of a curve.
struct CurvePoint {
    Vec2 x{};
    Vec2 dx{};
};

class NurbsCurve2D {
public:
    NurbsCurve2D() = default;
    NurbsCurve2D(SplineSpace1D space, std::vector<Vec2> points, std::vector<double> weights)
        : space_(std::move(space)), points_(std::move(points)), weights_(std::move(weights)) {
        if (static_cast<int>(points_.size()) != space_.dimension())
            throw ValidationError("curve control point count " + std::to_string(points_.size()) +
                                  " does not match basis dimension " + std::to_string(space_.dimension()));
        if (weights_.size() != points_.size()) throw ValidationError("curve weight count does not match control points");
        for (double w : weights_)
            if (!(w > 0.0)) throw ValidationError("curve weight must be positive");
    }

    const SplineSpace1D& space() const { return space_; }
    const std::vector<Vec2>& points() const { return points_; }
    const std::vector<double>& weights() const { return weights_; }
    double t0() const { return space_.lower(); }
    double t1() const { return space_.upper(); }

    CurvePoint eval(double t) const {
        const auto b = eval_basis(space_, t, 1);
        double W = 0, dW = 0;
        Vec2 A{0, 0}, dA{0, 0};
        for (int j = 0; j <= space_.degree(); ++j) {
            const int i = b.first + j;
            const double w = weights_[i];
            W += b.ders[0][j] * w;
            dW += b.ders[1][j] * w;
            for (int c = 0; c < 2; ++c) {
                A[c] += b.ders[0][j] * w * points_[i][c];
                dA[c] += b.ders[1][j] * w * points_[i][c];
            }
        }
        CurvePoint out;
        for (int c = 0; c < 2; ++c) {
            out.x[c] = A[c] / W;
            out.dx[c] = (dA[c] - dW * out.x[c]) / W;
        }
        return out;
    }

    Vec2 point(double t) const { return eval(t).x; }

    NurbsCurve2D reversed() const {
        const double a = t0(), b = t1();
        std::vector<double> U;
        for (auto it = space_.knots().rbegin(); it != space_.knots().rend(); ++it) U.push_back(a + b - *it);
        std::vector<Vec2> P(points_.rbegin(), points_.rend());
        std::vector<double> w(weights_.rbegin(), weights_.rend());
        return NurbsCurve2D(SplineSpace1D(std::move(U), space_.degree()), std::move(P), std::move(w));
    }

private:
    SplineSpace1D space_;
    std::vector<Vec2> points_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Tensor-product NURBS surface patches

/// Geometry and rational basis of a patch at one parametric point.
struct SurfaceEval {
    Vec3 x{};
    Vec3 xu{}, xv{};
    Vec3 xuu{}, xuv{}, xvv{};
    std::vector<int> index;  ///< global function indices (i + j * n_u)
    std::vector<double> R, Ru, Rv, Ruu, Ruv, Rvv;
};

class NurbsSurfacePatch {
public:
    NurbsSurfacePatch() = default;
    NurbsSurfacePatch(SplineSpace1D su, SplineSpace1D sv, std::vector<Vec3> points, std::vector<double> weights)
        : su_(std::move(su)), sv_(std::move(sv)), points_(std::move(points)), weights_(std::move(weights)) {
        const auto n = static_cast<std::size_t>(su_.dimension()) * static_cast<std::size_t>(sv_.dimension());
        if (points_.size() != n)
            throw ValidationError("control net size " + std::to_string(points_.size()) + " does not match " +
                                  std::to_string(su_.dimension()) + " x " + std::to_string(sv_.dimension()));
        if (weights_.size() != n) throw ValidationError("weight count does not match control net");
        for (double w : weights_)
            if (!(w > 0.0)) throw ValidationError("weight must be positive");
    }

    const SplineSpace1D& space_u() const { return su_; }
    const SplineSpace1D& space_v() const { return sv_; }
    const std::vector<Vec3>& points() const { return points_; }
    const std::vector<double>& weights() const { return weights_; }
    int num_u() const { return su_.dimension(); }
    int num_v() const { return sv_.dimension(); }
    int size() const { return num_u() * num_v(); }
    int index(int i, int j) const { return i + j * num_u(); }

private:
    SplineSpace1D su_, sv_;
    std::vector<Vec3> points_;
    std::vector<double> weights_;
};

/// Rational basis values with derivatives up to max_deriv (<= 2) and the geometry map.
inline SurfaceEval eval_nurbs_surface(const NurbsSurfacePatch& patch, double u, double v, int max_deriv) {
    const int nd = std::clamp(max_deriv, 0, 2);
    const auto bu = eval_basis(patch.space_u(), u, nd);
    const auto bv = eval_basis(patch.space_v(), v, nd);
    const int pu = patch.space_u().degree();
    const int pv = patch.space_v().degree();
    const int nloc = (pu + 1) * (pv + 1);

    SurfaceEval out;
    out.index.resize(nloc);
    std::vector<double> N(nloc), Nu(nloc), Nv(nloc), Nuu(nloc), Nuv(nloc), Nvv(nloc);
    double W = 0, Wu = 0, Wv = 0, Wuu = 0, Wuv = 0, Wvv = 0;
    for (int b = 0; b <= pv; ++b) {
        for (int a = 0; a <= pu; ++a) {
            const int k = a + b * (pu + 1);
            const int gi = patch.index(bu.first + a, bv.first + b);
            const double w = patch.weights()[gi];
            out.index[k] = gi;
            N[k] = bu.value(0, a) * bv.value(0, b) * w;
            Nu[k] = bu.value(1, a) * bv.value(0, b) * w;
            Nv[k] = bu.value(0, a) * bv.value(1, b) * w;
            Nuu[k] = bu.value(2, a) * bv.value(0, b) * w;
            Nuv[k] = bu.value(1, a) * bv.value(1, b) * w;
            Nvv[k] = bu.value(0, a) * bv.value(2, b) * w;
            W += N[k];
            Wu += Nu[k];
            Wv += Nv[k];
            Wuu += Nuu[k];
            Wuv += Nuv[k];
            Wvv += Nvv[k];
        }
    }
    out.R.resize(nloc);
    out.Ru.resize(nloc);
    out.Rv.resize(nloc);
    out.Ruu.resize(nloc);
    out.Ruv.resize(nloc);
    out.Rvv.resize(nloc);
    for (int k = 0; k < nloc; ++k) {
        const double R = N[k] / W;
        const double Ru = (Nu[k] - R * Wu) / W;
        const double Rv = (Nv[k] - R * Wv) / W;
        out.R[k] = R;
        out.Ru[k] = Ru;
        out.Rv[k] = Rv;
        out.Ruu[k] = (Nuu[k] - 2.0 * Ru * Wu - R * Wuu) / W;
        out.Ruv[k] = (Nuv[k] - Ru * Wv - Rv * Wu - R * Wuv) / W;
        out.Rvv[k] = (Nvv[k] - 2.0 * Rv * Wv - R * Wvv) / W;
        const auto& P = patch.points()[out.index[k]];
        for (int c = 0; c < 3; ++c) {
            out.x[c] += out.R[k] * P[c];
            out.xu[c] += out.Ru[k] * P[c];
            out.xv[c] += out.Rv[k] * P[c];
            out.xuu[c] += out.Ruu[k] * P[c];
            out.xuv[c] += out.Ruv[k] * P[c];
            out.xvv[c] += out.Rvv[k] * P[c];
        }
    }
    return out;
}

namespace detail {

/// Collocation matrix of a space at given sites (dense; used for small refinement solves).
inline Eigen::MatrixXd collocation(const SplineSpace1D& space, std::span<const double> sites) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sites.size()), space.dimension());
    for (std::size_t r = 0; r < sites.size(); ++r) {
        const auto b = eval_basis(space, sites[r], 0);
        for (int j = 0; j <= space.degree(); ++j) A(static_cast<Eigen::Index>(r), b.first + j) = b.ders[0][j];
    }
    return A;
}

/// Coefficients in `to` reproducing the splines with coefficients `coef` (columns) in `from`,
/// by interpolation at the Greville abscissae of `to`. Exact when from is a subspace of to.
inline Eigen::MatrixXd transfer(const SplineSpace1D& from, const SplineSpace1D& to, const Eigen::MatrixXd& coef) {
    const auto g = greville_abscissae(to);
    const Eigen::MatrixXd Afrom = collocation(from, g);
    const Eigen::MatrixXd Ato = collocation(to, g);
    return Ato.partialPivLu().solve(Afrom * coef);
}

}  // namespace detail

/// Re-express a patch in finer spaces (degree elevation and/or knot insertion per direction).
/// The new spaces must contain the old ones; geometry and weights are preserved exactly
/// up to round-off by transferring homogeneous coordinates.
inline NurbsSurfacePatch refine_patch(const NurbsSurfacePatch& patch, const SplineSpace1D& new_u,
                                      const SplineSpace1D& new_v) {
    const int nu = patch.num_u(), nv = patch.num_v();
    const int mu = new_u.dimension(), mv = new_v.dimension();
    // homogeneous coordinates (wx, wy, wz, w)
    std::array<Eigen::MatrixXd, 4> H;
    for (auto& h : H) h.resize(nu, nv);
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            const int g = patch.index(i, j);
            const double w = patch.weights()[g];
            for (int c = 0; c < 3; ++c) H[c](i, j) = w * patch.points()[g][c];
            H[3](i, j) = w;
        }
    for (auto& h : H) {
        Eigen::MatrixXd hu = detail::transfer(patch.space_u(), new_u, h);                         // mu x nv
        Eigen::MatrixXd huv = detail::transfer(patch.space_v(), new_v, hu.transpose()).transpose();  // mu x mv
        h = std::move(huv);
    }
    std::vector<Vec3> P(static_cast<std::size_t>(mu) * mv);
    std::vector<double> W(P.size());
    for (int j = 0; j < mv; ++j)
        for (int i = 0; i < mu; ++i) {
            const std::size_t g = static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * mu;
            const double w = H[3](i, j);
            if (!(w > 0.0)) throw InvalidRefinement("refinement produced a non-positive weight");
            W[g] = w;
            for (int c = 0; c < 3; ++c) P[g][c] = H[c](i, j) / w;
        }
    return NurbsSurfacePatch(new_u, new_v, std::move(P), std::move(W));
}

}  // namespace trimquad
