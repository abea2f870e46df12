#pragma once

// Brute-force references for tests: strip-sweep integration over trimmed regions,
// Green's-theorem areas, rule residuals, and the analytic Kirsch energy.
// Nothing in the production path includes this header.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "trimquad/error.hpp"
#include "trimquad/fem.hpp"
#include "trimquad/quadrature.hpp"
#include "trimquad/spline.hpp"
#include "trimquad/trim.hpp"

namespace trimquad::oracle {

struct AdaptiveCellResult {
    double value = 0.0;
    double estimate = 0.0;  ///< |last two levels| / |value|
    long long cells = 0;    ///< strip panels in u at the last level
    int max_depth = 0;      ///< panels per strip = 2^max_depth
    bool converged = false;
};

namespace detail {

/// Monotone piece spanning a strip in u.
struct StripPiece {
    const NurbsCurve2D* curve;
    double ta, tb;
};

struct Strip {
    double u0, u1;
    std::vector<StripPiece> pieces;
};

inline std::vector<double> merged_breaks(double a, double b, std::vector<double> x) {
    x.push_back(a);
    x.push_back(b);
    std::sort(x.begin(), x.end());
    std::vector<double> out;
    const double eps = 1e-13 * (b - a);
    for (double t : x) {
        if (t < a || t > b) continue;
        if (out.empty() || t - out.back() > eps) out.push_back(t);
        else out.back() = std::max(out.back(), t);
    }
    out.front() = a;
    out.back() = b;
    return out;
}

/// Integral along the vertical line u of f over the valid part of [v0, v1].
inline double line_integral(const std::function<double(double, double)>& f, const TrimmedDomain& dom, const Strip& st,
                            double u, double v0, double v1, const std::vector<double>& breaks_v, const QuadRule1D& g,
                            int panels) {
    std::vector<double> cuts(breaks_v);
    for (const auto& p : st.pieces) cuts.push_back(p.curve->point(trimquad::detail::solve_monotone(*p.curve, p.ta, p.tb, 0, u))[1]);
    cuts = merged_breaks(v0, v1, std::move(cuts));
    double line = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = cuts[k], b = cuts[k + 1];
        if (dom.classify({u, 0.5 * (a + b)}) == PointClass::invalid) continue;
        const double h = (b - a) / panels;
        for (int i = 0; i < panels; ++i) {
            const double c = a + (i + 0.5) * h;
            double part = 0.0;
            for (std::size_t q = 0; q < g.size(); ++q) part += g.weights[q] * f(u, c + 0.5 * h * g.points[q]);
            line += 0.5 * h * part;
        }
    }
    return line;
}

}  // namespace detail

/// Integral of f over the valid part of `region` by vertical line sweep. The u-range is split at
/// every monotone-piece end point and at breaks_u, so each strip meets a fixed set of smooth curve
/// pieces; v-lines are split at crossings and at breaks_v. In u each strip is mapped by
/// u = a + (b - a)(3s^2 - 2s^3) to absorb square-root behaviour at vertical tangents, then split
/// into 2^level panels of `order` Gauss points, as is every valid v-interval; levels are added
/// until two agree to rel_tol.
inline AdaptiveCellResult adaptive_integrate(const std::function<double(double, double)>& f, const TrimmedDomain& dom,
                                             const Rect& region, double rel_tol, const std::vector<double>& breaks_u = {},
                                             const std::vector<double>& breaks_v = {}, int max_depth = 12,
                                             int order = 8) {
    if (!(rel_tol >= 1e-12)) throw ValidationError("adaptive_integrate needs rel_tol >= 1e-12");
    const auto g = gauss_legendre(order);

    std::vector<double> xs(breaks_u);
    for (int l = 0; l < dom.num_loops(); ++l)
        for (const auto& pc : dom.pieces(l)) {
            xs.push_back(pc.pa[0]);
            xs.push_back(pc.pb[0]);
            // crossings of the region's horizontal edges are kinks of the line integral in u
            const auto& c = dom.segment(l, pc.segment);
            for (double v : {region.v0, region.v1})
                if ((pc.pa[1] - v) * (pc.pb[1] - v) < 0.0)
                    xs.push_back(c.point(trimquad::detail::solve_monotone(c, pc.ta, pc.tb, 1, v))[0]);
        }
    const auto ub = detail::merged_breaks(region.u0, region.u1, std::move(xs));
    std::vector<double> vb;
    for (double v : breaks_v)
        if (v > region.v0 && v < region.v1) vb.push_back(v);

    std::vector<detail::Strip> strips;
    for (std::size_t k = 0; k + 1 < ub.size(); ++k) {
        detail::Strip st{ub[k], ub[k + 1], {}};
        const double um = 0.5 * (st.u0 + st.u1);
        for (int l = 0; l < dom.num_loops(); ++l)
            for (const auto& pc : dom.pieces(l)) {
                if ((pc.pa[0] - um) * (pc.pb[0] - um) >= 0.0) continue;
                const auto& c = dom.segment(l, pc.segment);
                const double y = c.point(trimquad::detail::solve_monotone(c, pc.ta, pc.tb, 0, um))[1];
                // pieces wholly outside the v-range never cut the strip (monotone, no end point inside)
                if (y <= region.v0 || y >= region.v1) {
                    if (std::min(pc.pa[1], pc.pb[1]) >= region.v1 || std::max(pc.pa[1], pc.pb[1]) <= region.v0) continue;
                }
                st.pieces.push_back({&c, pc.ta, pc.tb});
            }
        strips.push_back(std::move(st));
    }

    AdaptiveCellResult res;
    double prev = NAN;
    for (int level = 0; level <= max_depth; ++level) {
        const int panels = 1 << level;
        double total = 0.0;
        for (const auto& st : strips) {
            const double w = st.u1 - st.u0;
            for (int i = 0; i < panels; ++i) {
                const double s0 = double(i) / panels, s1 = double(i + 1) / panels;
                for (std::size_t q = 0; q < g.size(); ++q) {
                    const double sq = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * g.points[q];
                    const double u = st.u0 + w * sq * sq * (3.0 - 2.0 * sq);
                    const double jac = w * 6.0 * sq * (1.0 - sq);
                    total += 0.5 * (s1 - s0) * g.weights[q] * jac *
                             detail::line_integral(f, dom, st, u, region.v0, region.v1, vb, g, panels);
                }
            }
        }
        res.value = total;
        res.max_depth = level;
        res.cells = static_cast<long long>(strips.size()) * panels;
        if (!std::isnan(prev)) {
            res.estimate = std::abs(total - prev) / std::max(std::abs(total), 1e-300);
            if (res.estimate < rel_tol) {
                res.converged = true;
                break;
            }
        }
        prev = total;
    }
    return res;
}

/// Signed area of one loop by 1/2 of the contour integral of (x dy - y dx), 16 Gauss points per span.
inline double loop_area(const std::vector<NurbsCurve2D>& segments) {
    const auto g = gauss_legendre(16);
    double a = 0.0;
    for (const auto& c : segments) {
        const auto& brk = c.space().breakpoints();
        for (std::size_t k = 0; k + 1 < brk.size(); ++k) {
            const double h = 0.5 * (brk[k + 1] - brk[k]);
            for (std::size_t q = 0; q < g.size(); ++q) {
                const auto e = c.eval(brk[k] + h * (g.points[q] + 1.0));
                a += 0.5 * h * g.weights[q] * (e.x[0] * e.dx[1] - e.x[1] * e.dx[0]);
            }
        }
    }
    return a;
}

/// Valid area of a patch rectangle with disjoint closed loops (keep_outside loops are holes;
/// with keep_inside loops present the valid region is their union minus the holes).
inline double greens_area(const Rect& patch, const std::vector<TrimLoop>& loops) {
    double inside = 0.0, holes = 0.0;
    bool any_inside = false;
    for (const auto& l : loops) {
        if (!l.closed) throw MalformedTrim("greens_area needs closed loops");
        const double a = std::abs(loop_area(l.segments));
        if (l.keep == KeepRule::inside) {
            inside += a;
            any_inside = true;
        } else {
            holes += a;
        }
    }
    return (any_inside ? inside : patch.area()) - holes;
}

/// Same, with open loops closed along the patch boundary as the domain does.
inline double greens_area(const TrimmedDomain& dom) {
    std::vector<TrimLoop> closed;
    for (int l = 0; l < dom.num_loops(); ++l) {
        TrimLoop t;
        t.segments = dom.segments(l);
        t.closed = true;
        t.keep = dom.loops()[l].keep;
        closed.push_back(std::move(t));
    }
    return greens_area(dom.bounds(), closed);
}

/// max_i |sum_k w_k N_i(x_k) - int N_i| / domain length.
inline double rule_residual(const QuadRule1D& rule, const SplineSpace1D& space) {
    std::vector<double> q(space.dimension(), 0.0);
    for (std::size_t k = 0; k < rule.size(); ++k) {
        const auto b = eval_basis(space, rule.points[k], 0);
        for (int j = 0; j <= space.degree(); ++j) q[b.first + j] += rule.weights[k] * b.ders[0][j];
    }
    const auto ex = exact_integrals(space);
    double r = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) r = std::max(r, std::abs(q[i] - ex[i]));
    return r / space.length();
}

/// Plane-strain energy density 1/2 sigma:eps of the Kirsch field at polar (r, theta).
inline double kirsch_density(const Material& m, double T, double R, double r, double theta) {
    const auto [srr, stt, srt] = kirsch_polar(T, R, r, theta);
    const double k = (1.0 + m.nu) / m.E;
    const double err = k * ((1.0 - m.nu) * srr - m.nu * stt);
    const double ett = k * ((1.0 - m.nu) * stt - m.nu * srr);
    const double grt = 2.0 * k * srt;
    return 0.5 * (srr * err + stt * ett + srt * grt);
}

/// Quarter domain [-L, 0] x [0, L] outside the disc of radius R about the origin.
inline TrimmedDomain kirsch_quarter(double R, double L) {
    const double s = 1.0 / std::sqrt(2.0);
    TrimLoop arc;
    arc.closed = false;
    arc.keep = KeepRule::inside;
    arc.segments.push_back(NurbsCurve2D(SplineSpace1D({0.0, 0.0, 0.0, 1.0, 1.0, 1.0}, 2), {Vec2{-R, 0.0}, Vec2{-R, R}, Vec2{0.0, R}},
                                        {1.0, s, 1.0}));
    return TrimmedDomain(Rect{-L, 0.0, 0.0, L}, {arc});
}

/// Energy of the Kirsch field over the quarter plate with hole.
inline AdaptiveCellResult kirsch_energy(const Material& m, double T, double R, double L, double rel_tol) {
    if (m.mode != MaterialMode::plane_strain) throw ValidationError("kirsch_energy needs a plane strain material");
    if (!(rel_tol >= 1e-10)) throw ValidationError("kirsch_energy needs rel_tol >= 1e-10");
    const auto dom = kirsch_quarter(R, L);
    auto res = adaptive_integrate(
        [&](double x, double y) { return m.thickness * kirsch_density(m, T, R, std::hypot(x, y), std::atan2(y, x)); }, dom,
        dom.bounds(), rel_tol);
    return res;
}

}  // namespace trimquad::oracle
