#pragma once

// Trimming loops in the parametric plane of a patch: point classification,
// curve/gridline intersection, element and basis-function labels, the
// four-group partition, and integration cells for trimmed elements.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trimquad/error.hpp"
#include "trimquad/quadrature.hpp"
#include "trimquad/spline.hpp"

namespace trimquad {

enum class KeepRule { outside, inside };
enum class PointClass { valid, invalid };
enum class ElementLabel { active_untrimmed, trimmed, inactive };
enum class FunctionLabel { untrimmed, trimmed, inactive };
enum class Group { pw, tra, t, ia };

inline const char* to_string(KeepRule k) { return k == KeepRule::outside ? "keep_outside" : "keep_inside"; }

inline const char* to_string(ElementLabel e) {
    switch (e) {
        case ElementLabel::active_untrimmed: return "active_untrimmed";
        case ElementLabel::trimmed: return "trimmed";
        default: return "inactive";
    }
}

inline const char* to_string(FunctionLabel f) {
    switch (f) {
        case FunctionLabel::untrimmed: return "untrimmed";
        case FunctionLabel::trimmed: return "trimmed";
        default: return "inactive";
    }
}

inline const char* to_string(Group g) {
    switch (g) {
        case Group::pw: return "pw";
        case Group::tra: return "tra";
        case Group::t: return "t";
        default: return "ia";
    }
}

/// Axis-aligned rectangle in parameter space.
struct Rect {
    double u0 = 0.0, u1 = 1.0, v0 = 0.0, v1 = 1.0;

    double width() const { return u1 - u0; }
    double height() const { return v1 - v0; }
    double area() const { return width() * height(); }
    double extent() const { return std::max(width(), height()); }
    Vec2 center() const { return {0.5 * (u0 + u1), 0.5 * (v0 + v1)}; }
};

/// A closed or boundary-terminated chain of trimming curves with an explicit keep rule.
struct TrimLoop {
    std::vector<NurbsCurve2D> segments;
    bool closed = true;
    KeepRule keep = KeepRule::outside;
};

/// Straight segment as a degree-1 curve on [0, 1].
inline NurbsCurve2D line_segment(Vec2 a, Vec2 b) {
    return NurbsCurve2D(SplineSpace1D({0.0, 0.0, 1.0, 1.0}, 1), {a, b}, {1.0, 1.0});
}

inline double cross(Vec2 a, Vec2 b) { return a[0] * b[1] - a[1] * b[0]; }

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

namespace detail {

/// Curve parameter interval on which both coordinates are monotone.
struct MonotonePiece {
    int segment = 0;
    double ta = 0.0, tb = 0.0;
    Vec2 pa{}, pb{};
};

/// Sorted parameters splitting a curve into pieces with monotone coordinates.
inline std::vector<double> monotone_breaks(const NurbsCurve2D& curve) {
    const auto& brk = curve.space().breakpoints();
    std::vector<double> out{brk.front()};
    constexpr int samples = 32;
    for (std::size_t e = 0; e + 1 < brk.size(); ++e) {
        const double a = brk[e], b = brk[e + 1];
        std::vector<double> ts(samples + 1);
        std::vector<Vec2> ds(samples + 1);
        for (int k = 0; k <= samples; ++k) {
            // stay inside the span so one-sided derivatives belong to it
            const double s = std::clamp(static_cast<double>(k) / samples, 1e-12, 1.0 - 1e-12);
            ts[k] = a + s * (b - a);
            ds[k] = curve.eval(ts[k]).dx;
        }
        std::vector<double> extrema;
        for (int c = 0; c < 2; ++c) {
            for (int k = 0; k < samples; ++k) {
                const double fa = ds[k][c], fb = ds[k + 1][c];
                if (fa == 0.0 && k > 0) {
                    extrema.push_back(ts[k]);
                    continue;
                }
                if (!((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0))) continue;
                double lo = ts[k], hi = ts[k + 1], flo = fa;
                for (int it = 0; it < 200 && hi - lo > 1e-15 * (b - a); ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double fm = curve.eval(mid).dx[c];
                    if ((fm < 0.0) == (flo < 0.0)) {
                        lo = mid;
                        flo = fm;
                    } else {
                        hi = mid;
                    }
                }
                extrema.push_back(0.5 * (lo + hi));
            }
        }
        std::sort(extrema.begin(), extrema.end());
        for (double t : extrema)
            if (t - out.back() > 1e-13 * (b - a) && b - t > 1e-13 * (b - a)) out.push_back(t);
        out.push_back(b);
    }
    return out;
}

/// Root of coordinate `axis` minus `c` inside a monotone piece, by bisection.
inline double solve_monotone(const NurbsCurve2D& curve, double ta, double tb, int axis, double c) {
    double lo = ta, hi = tb;
    double flo = curve.point(lo)[axis] - c;
    const double fhi = curve.point(hi)[axis] - c;
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = curve.point(mid)[axis] - c;
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    const double flo2 = std::abs(curve.point(lo)[axis] - c);
    const double fhi2 = std::abs(curve.point(hi)[axis] - c);
    return flo2 <= fhi2 ? lo : hi;
}

/// Whether a monotone piece meets the horizontal line through uv to the right of uv.
/// Bisects in y and stops as soon as the bracket's x-range excludes uv[0].
inline bool crossing_right_of(const NurbsCurve2D& curve, const MonotonePiece& pc, Vec2 uv) {
    double lo = pc.ta, hi = pc.tb;
    Vec2 plo = pc.pa, phi = pc.pb;
    for (int it = 0; it < 200; ++it) {
        if (std::min(plo[0], phi[0]) > uv[0]) return true;
        if (std::max(plo[0], phi[0]) <= uv[0]) return false;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const Vec2 pm = curve.point(mid);
        if ((pm[1] > uv[1]) == (plo[1] > uv[1])) {
            lo = mid;
            plo = pm;
        } else {
            hi = mid;
            phi = pm;
        }
    }
    return 0.5 * (plo[0] + phi[0]) > uv[0];
}

/// Position 0..4 along the rectangle boundary, counter-clockwise from (u0, v0).
inline double perimeter_param(const Rect& r, Vec2 x) {
    const double db = std::abs(x[1] - r.v0), dr = std::abs(x[0] - r.u1);
    const double dt = std::abs(x[1] - r.v1), dl = std::abs(x[0] - r.u0);
    const double m = std::min({db, dr, dt, dl});
    if (m == db) return std::clamp((x[0] - r.u0) / r.width(), 0.0, 1.0);
    if (m == dr) return 1.0 + std::clamp((x[1] - r.v0) / r.height(), 0.0, 1.0);
    if (m == dt) return 2.0 + std::clamp((r.u1 - x[0]) / r.width(), 0.0, 1.0);
    const double s = 3.0 + std::clamp((r.v1 - x[1]) / r.height(), 0.0, 1.0);
    return s >= 4.0 ? 0.0 : s;
}

inline Vec2 perimeter_corner(const Rect& r, int k) {
    switch (((k % 4) + 4) % 4) {
        case 0: return {r.u0, r.v0};
        case 1: return {r.u1, r.v0};
        case 2: return {r.u1, r.v1};
        default: return {r.u0, r.v1};
    }
}

/// Snap a point onto the nearest side of the rectangle.
inline Vec2 snap_to_boundary(const Rect& r, Vec2 x) {
    const double s = perimeter_param(r, x);
    const int side = std::min(3, static_cast<int>(s));
    Vec2 y = x;
    if (side == 0) y[1] = r.v0;
    if (side == 1) y[0] = r.u1;
    if (side == 2) y[1] = r.v1;
    if (side == 3) y[0] = r.u0;
    y[0] = std::clamp(y[0], r.u0, r.u1);
    y[1] = std::clamp(y[1], r.v0, r.v1);
    return y;
}

inline double boundary_distance(const Rect& r, Vec2 x) {
    const double inside = std::min({x[0] - r.u0, r.u1 - x[0], x[1] - r.v0, r.v1 - x[1]});
    if (inside >= 0.0) return inside;
    const double du = std::max({r.u0 - x[0], 0.0, x[0] - r.u1});
    const double dv = std::max({r.v0 - x[1], 0.0, x[1] - r.v1});
    return std::hypot(du, dv);
}

/// Unit direction of side k of the rectangle in counter-clockwise order.
inline Vec2 side_direction(int k) {
    static constexpr std::array<Vec2, 4> dirs{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
    return dirs[((k % 4) + 4) % 4];
}

}  // namespace detail

/// Patch parameter rectangle with trimming loops; open loops are closed along the rectangle.
class TrimmedDomain {
public:
    TrimmedDomain() = default;

    TrimmedDomain(Rect bounds, std::vector<TrimLoop> loops) : bounds_(bounds), loops_(std::move(loops)) {
        tol_ = 1e-10 * bounds_.extent();
        for (std::size_t l = 0; l < loops_.size(); ++l) prepare(static_cast<int>(l));
    }

    const Rect& bounds() const { return bounds_; }
    const std::vector<TrimLoop>& loops() const { return loops_; }
    int num_loops() const { return static_cast<int>(loops_.size()); }
    double tolerance() const { return tol_; }

    /// Segments of the closed loop l, boundary closure pieces appended for open loops.
    const std::vector<NurbsCurve2D>& segments(int l) const { return closed_[l]; }
    const NurbsCurve2D& segment(int l, int s) const { return closed_[l][s]; }
    bool is_closure(int l, int s) const { return s >= static_cast<int>(loops_[l].segments.size()); }
    const std::vector<detail::MonotonePiece>& pieces(int l) const { return pieces_[l]; }

    /// Signed area enclosed by loop l (positive for counter-clockwise loops).
    double signed_area(int l) const { return area_[l]; }

    /// Whether the valid region lies to the left of loop l in its parametric direction.
    bool valid_left(int l) const {
        const bool ccw = area_[l] > 0.0;
        return (loops_[l].keep == KeepRule::inside) == ccw;
    }

    int max_curve_degree() const {
        int d = 1;
        for (const auto& loop : loops_)
            for (const auto& c : loop.segments) d = std::max(d, c.space().degree());
        return d;
    }

    /// Winding number of loop l around uv (horizontal ray, half-open crossing rule).
    int winding(int l, Vec2 uv) const {
        int w = 0;
        for (const auto& pc : pieces_[l]) {
            const double ya = pc.pa[1], yb = pc.pb[1];
            int dir = 0;
            if (ya <= uv[1] && uv[1] < yb) dir = 1;
            else if (yb <= uv[1] && uv[1] < ya) dir = -1;
            else continue;
            const double xmin = std::min(pc.pa[0], pc.pb[0]);
            const double xmax = std::max(pc.pa[0], pc.pb[0]);
            if (xmax <= uv[0]) continue;
            if (xmin > uv[0]) {
                w += dir;
                continue;
            }
            if (detail::crossing_right_of(closed_[l][pc.segment], pc, uv)) w += dir;
        }
        return w;
    }

    bool inside(int l, Vec2 uv) const { return winding(l, uv) != 0; }

    bool valid_for(int l, Vec2 uv) const { return inside(l, uv) == (loops_[l].keep == KeepRule::inside); }

    PointClass classify(Vec2 uv) const {
        for (int l = 0; l < num_loops(); ++l)
            if (!valid_for(l, uv)) return PointClass::invalid;
        return PointClass::valid;
    }

private:
    void prepare(int l) {
        const TrimLoop& loop = loops_[l];
        const std::string name = "trim loop " + std::to_string(l);
        if (loop.segments.empty()) throw MalformedTrim(name + " has no segments");
        for (std::size_t s = 1; s < loop.segments.size(); ++s) {
            const Vec2 a = loop.segments[s - 1].point(loop.segments[s - 1].t1());
            const Vec2 b = loop.segments[s].point(loop.segments[s].t0());
            if (distance(a, b) > tol_)
                throw MalformedTrim(name + ": gap of " + std::to_string(distance(a, b)) + " between segments " +
                                    std::to_string(s - 1) + " and " + std::to_string(s));
        }
        std::vector<NurbsCurve2D> segs = loop.segments;
        const Vec2 start = segs.front().point(segs.front().t0());
        const Vec2 end = segs.back().point(segs.back().t1());
        if (loop.closed) {
            if (distance(start, end) > tol_)
                throw MalformedTrim(name + " is marked closed but its ends are " + std::to_string(distance(start, end)) +
                                    " apart");
        } else {
            if (detail::boundary_distance(bounds_, start) > tol_ || detail::boundary_distance(bounds_, end) > tol_)
                throw MalformedTrim(name + " is open but does not end on the patch boundary");
            // counter-clockwise walk along the boundary from the loop end back to its start
            const double s_end = detail::perimeter_param(bounds_, end);
            double s_start = detail::perimeter_param(bounds_, start);
            if (s_start <= s_end + 1e-14) s_start += 4.0;
            std::vector<Vec2> path{end};
            for (int k = static_cast<int>(std::floor(s_end)) + 1; k < s_start - 1e-14; ++k)
                path.push_back(detail::perimeter_corner(bounds_, k));
            path.push_back(start);
            for (std::size_t k = 0; k + 1 < path.size(); ++k)
                if (distance(path[k], path[k + 1]) > tol_) segs.push_back(line_segment(path[k], path[k + 1]));
        }
        std::vector<detail::MonotonePiece> pcs;
        for (std::size_t s = 0; s < segs.size(); ++s) {
            const auto br = detail::monotone_breaks(segs[s]);
            for (std::size_t k = 0; k + 1 < br.size(); ++k) {
                detail::MonotonePiece pc;
                pc.segment = static_cast<int>(s);
                pc.ta = br[k];
                pc.tb = br[k + 1];
                pc.pa = segs[s].point(pc.ta);
                pc.pb = segs[s].point(pc.tb);
                for (const Vec2& x : {pc.pa, pc.pb})
                    if (x[0] < bounds_.u0 - tol_ || x[0] > bounds_.u1 + tol_ || x[1] < bounds_.v0 - tol_ ||
                        x[1] > bounds_.v1 + tol_)
                        throw MalformedTrim(name + " leaves the patch parameter domain");
                pcs.push_back(pc);
            }
        }
        // identical junction points keep the crossing count consistent
        for (std::size_t k = 0; k < pcs.size(); ++k) pcs[(k + 1) % pcs.size()].pa = pcs[k].pb;
        double area = 0.0;
        const auto g = gauss_legendre(8);
        for (const auto& pc : pcs) {
            const auto& c = segs[pc.segment];
            const double h = 0.5 * (pc.tb - pc.ta);
            for (std::size_t k = 0; k < g.size(); ++k) {
                const auto e = c.eval(pc.ta + h * (g.points[k] + 1.0));
                area += 0.5 * h * g.weights[k] * cross(e.x, e.dx);
            }
        }
        if (std::abs(area) <= tol_ * bounds_.extent()) throw MalformedTrim(name + " encloses no area");
        closed_.push_back(std::move(segs));
        pieces_.push_back(std::move(pcs));
        area_.push_back(area);
    }

    Rect bounds_;
    std::vector<TrimLoop> loops_;
    std::vector<std::vector<NurbsCurve2D>> closed_;
    std::vector<std::vector<detail::MonotonePiece>> pieces_;
    std::vector<double> area_;
    double tol_ = 1e-10;
};

inline PointClass classify_point(const TrimmedDomain& domain, Vec2 uv) { return domain.classify(uv); }

// ---------------------------------------------------------------------------
// Curve / knot-line intersection

enum class CrossingKind { transversal, touch, endpoint, along };

struct GridCrossing {
    double t = 0.0;
    int axis = 0;  ///< 0: line u = value, 1: line v = value
    int line = 0;  ///< breakpoint index of the line
    double value = 0.0;
    CrossingKind kind = CrossingKind::transversal;
};

/// Parameters where a curve meets the knot lines of a mesh, sorted by curve parameter.
/// Interior lines only unless include_boundary is set.
inline std::vector<GridCrossing> intersect_with_gridlines(const NurbsCurve2D& curve, const ElementMesh& mesh,
                                                          bool include_boundary = false) {
    const auto br = detail::monotone_breaks(curve);
    std::vector<Vec2> pts(br.size());
    for (std::size_t k = 0; k < br.size(); ++k) pts[k] = curve.point(br[k]);
    const double extent =
        std::max(mesh.u_breaks.back() - mesh.u_breaks.front(), mesh.v_breaks.back() - mesh.v_breaks.front());
    const double zero = 1e-12 * std::max(1.0, extent);
    const int m = static_cast<int>(br.size()) - 1;

    std::vector<GridCrossing> out;
    for (int axis = 0; axis < 2; ++axis) {
        const auto& lines = axis == 0 ? mesh.u_breaks : mesh.v_breaks;
        double lo = pts[0][axis], hi = lo;
        for (const auto& p : pts) {
            lo = std::min(lo, p[axis]);
            hi = std::max(hi, p[axis]);
        }
        const int first = include_boundary ? 0 : 1;
        const int last = static_cast<int>(lines.size()) - (include_boundary ? 1 : 2);
        for (int li = first; li <= last; ++li) {
            const double c = lines[li];
            if (c < lo - zero || c > hi + zero) continue;
            std::vector<int> sg(br.size());
            for (int k = 0; k <= m; ++k) {
                const double f = pts[k][axis] - c;
                sg[k] = std::abs(f) <= zero ? 0 : (f > 0 ? 1 : -1);
            }
            auto push = [&](double t, CrossingKind kind) { out.push_back({t, axis, li, c, kind}); };
            for (int k = 0; k < m; ++k)
                if (sg[k] * sg[k + 1] < 0) push(detail::solve_monotone(curve, br[k], br[k + 1], axis, c), CrossingKind::transversal);
            for (int k = 0; k <= m;) {
                if (sg[k] != 0) {
                    ++k;
                    continue;
                }
                int b = k;
                while (b + 1 <= m && sg[b + 1] == 0) ++b;
                const int left = k > 0 ? sg[k - 1] : 0;
                const int right = b < m ? sg[b + 1] : 0;
                CrossingKind kind = CrossingKind::touch;
                if (k == 0 || b == m) kind = CrossingKind::endpoint;
                else if (left != right) kind = CrossingKind::transversal;
                push(br[k], kind);
                if (b > k) push(br[b], kind == CrossingKind::endpoint ? kind : CrossingKind::along);
                k = b + 1;
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const GridCrossing& a, const GridCrossing& b) {
        return a.t != b.t ? a.t < b.t : a.axis < b.axis;
    });
    // merge duplicate roots on the same line
    std::vector<GridCrossing> merged;
    const double dt = 1e-10 * (curve.t1() - curve.t0());
    for (const auto& x : out) {
        bool dup = false;
        for (auto it = merged.rbegin(); it != merged.rend() && x.t - it->t <= dt; ++it)
            if (it->axis == x.axis && it->line == x.line) dup = true;
        if (!dup) merged.push_back(x);
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Integration cells

/// Curve piece (loop, segment, parameter sub-interval) forming one side of a cell.
struct CurvedEdge {
    int loop = -1;
    int segment = -1;
    double t0 = 0.0;
    double t1 = 0.0;
};

/// Three- or four-sided cell, counter-clockwise. If present, the curved edge replaces the
/// side vertices[0] -> vertices[1]. The map is the blend of that side with the opposite one
/// (vertices[3] -> vertices[2], collapsed to vertices[2] for three-sided cells).
struct Cell {
    std::vector<Vec2> vertices;
    std::optional<CurvedEdge> curve;
};

struct CellPartition {
    int element = -1;
    std::vector<Cell> cells;
};

struct MappedPoint {
    double u = 0.0;
    double v = 0.0;
    double weight = 0.0;
};

namespace detail {

struct CellMapEval {
    Vec2 x{};
    double det = 0.0;
};

inline CellMapEval eval_cell(const TrimmedDomain& dom, const Cell& cell, double xi, double eta) {
    Vec2 B, dB;
    const auto& V = cell.vertices;
    if (cell.curve) {
        const auto& ce = *cell.curve;
        const auto e = dom.segment(ce.loop, ce.segment).eval(ce.t0 + xi * (ce.t1 - ce.t0));
        B = e.x;
        dB = {e.dx[0] * (ce.t1 - ce.t0), e.dx[1] * (ce.t1 - ce.t0)};
    } else {
        B = {V[0][0] + xi * (V[1][0] - V[0][0]), V[0][1] + xi * (V[1][1] - V[0][1])};
        dB = {V[1][0] - V[0][0], V[1][1] - V[0][1]};
    }
    Vec2 T, dT{0.0, 0.0};
    if (V.size() == 4) {
        T = {V[3][0] + xi * (V[2][0] - V[3][0]), V[3][1] + xi * (V[2][1] - V[3][1])};
        dT = {V[2][0] - V[3][0], V[2][1] - V[3][1]};
    } else {
        T = V[2];
    }
    CellMapEval out;
    out.x = {(1.0 - eta) * B[0] + eta * T[0], (1.0 - eta) * B[1] + eta * T[1]};
    const Vec2 Fxi{(1.0 - eta) * dB[0] + eta * dT[0], (1.0 - eta) * dB[1] + eta * dT[1]};
    const Vec2 Feta{T[0] - B[0], T[1] - B[1]};
    out.det = cross(Fxi, Feta);
    return out;
}

/// min/max ratio of the Jacobian over a cell; the map is linear in eta, so the
/// bottom and top rows bound it (triangles: det / (1 - eta) depends on xi only).
inline double cell_quality(const TrimmedDomain& dom, const Cell& cell) {
    static const QuadRule1D g = gauss_legendre(12, 0.0, 1.0);
    double lo = INFINITY, hi = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double d0 = eval_cell(dom, cell, g.points[k], 0.0).det;
        lo = std::min(lo, d0);
        hi = std::max(hi, d0);
        if (cell.vertices.size() == 4) {
            const double d1 = eval_cell(dom, cell, g.points[k], 1.0).det;
            lo = std::min(lo, d1);
            hi = std::max(hi, d1);
        }
    }
    return hi > 0.0 ? lo / hi : -1.0;
}

}  // namespace detail

inline int mapped_rule_order(int p, int q, int p_c) { return std::max({p, q, p_c}) + 1; }

/// Largest tangent turning (radians) allowed on the curved side of one cell integrated with `order` points.
inline double cell_turn_limit(int order) {
    if (order <= 3) return std::numbers::pi / 12.0;
    if (order == 4) return std::numbers::pi / 8.0;
    return std::numbers::pi / 6.0;
}

/// Tensor Gauss points carried onto a cell by its blending map.
inline std::vector<MappedPoint> map_gauss_to_cell(const TrimmedDomain& dom, const Cell& cell, int order) {
    const QuadRule1D g = gauss_legendre(order, 0.0, 1.0);
    std::vector<MappedPoint> out;
    out.reserve(g.size() * g.size());
    for (std::size_t j = 0; j < g.size(); ++j)
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto e = detail::eval_cell(dom, cell, g.points[i], g.points[j]);
            if (!(e.det > 0.0))
                throw InvertedCell("non-positive cell Jacobian " + std::to_string(e.det) + " at (" +
                                   std::to_string(e.x[0]) + ", " + std::to_string(e.x[1]) + ")");
            out.push_back({e.x[0], e.x[1], g.weights[i] * g.weights[j] * e.det});
        }
    return out;
}

inline std::vector<MappedPoint> map_gauss_to_cell(const TrimmedDomain& dom, const Cell& cell, int p, int q, int p_c) {
    return map_gauss_to_cell(dom, cell, mapped_rule_order(p, q, p_c));
}

/// Piece of a trimming loop between consecutive knot-line hits.
struct SubArc {
    int loop = 0;
    int segment = 0;
    double t0 = 0.0, t1 = 0.0;
    Vec2 p0{}, p1{};
    int element = -1;  ///< -1 if the piece runs along a knot line
};

namespace detail {

/// Oriented chain of sub-arcs crossing an element from boundary to boundary.
struct ElementArc {
    std::vector<CurvedEdge> pieces;
    Vec2 start{}, end{};
    int loop = 0;
    int n_start = -1, n_end = -1;
};

inline Vec2 curve_point(const TrimmedDomain& dom, const CurvedEdge& e, double s) {
    return dom.segment(e.loop, e.segment).point(e.t0 + s * (e.t1 - e.t0));
}

inline CurvedEdge reversed(const CurvedEdge& e) { return {e.loop, e.segment, e.t1, e.t0}; }

/// Convex polygon (vertices on the element boundary in order) as straight cells.
inline void straight_cells(const std::vector<Vec2>& poly, double min_area, std::vector<Cell>& out) {
    if (poly.size() < 3) return;
    auto tri_area = [](Vec2 a, Vec2 b, Vec2 c) {
        return 0.5 * cross({b[0] - a[0], b[1] - a[1]}, {c[0] - a[0], c[1] - a[1]});
    };
    if (poly.size() == 4) {
        const double a1 = tri_area(poly[0], poly[1], poly[2]);
        const double a2 = tri_area(poly[0], poly[2], poly[3]);
        const double a3 = tri_area(poly[0], poly[1], poly[3]);
        const double a4 = tri_area(poly[1], poly[2], poly[3]);
        if (std::min({a1, a2, a3, a4}) > min_area) {
            out.push_back({poly, std::nullopt});
            return;
        }
    }
    for (std::size_t k = 1; k + 1 < poly.size(); ++k)
        if (tri_area(poly[0], poly[k], poly[k + 1]) > min_area) out.push_back({{poly[0], poly[k], poly[k + 1]}, std::nullopt});
}

/// Split an oriented chain at interior curve knots and where it turns by more than max_turn radians.
inline std::vector<CurvedEdge> split_at_knots(const TrimmedDomain& dom, const std::vector<CurvedEdge>& chain,
                                              double max_turn) {
    std::vector<CurvedEdge> out;
    for (const auto& e : chain) {
        const auto& brk = dom.segment(e.loop, e.segment).space().breakpoints();
        const double lo = std::min(e.t0, e.t1), hi = std::max(e.t0, e.t1);
        const double tol = 1e-12 * (brk.back() - brk.front());
        std::vector<double> ts{e.t0};
        std::vector<double> inner;
        for (double b : brk)
            if (b > lo + tol && b < hi - tol) inner.push_back(b);
        if (e.t1 < e.t0) std::reverse(inner.begin(), inner.end());
        ts.insert(ts.end(), inner.begin(), inner.end());
        ts.push_back(e.t1);
        for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
            // bound the tangent turning per piece so the rational map stays well resolved
            const auto& c = dom.segment(e.loop, e.segment);
            const Vec2 da = c.eval(ts[k]).dx, db = c.eval(ts[k + 1]).dx;
            const double turn = std::abs(std::atan2(cross(da, db), da[0] * db[0] + da[1] * db[1]));
            const int parts = std::max(1, static_cast<int>(std::ceil(turn / max_turn - 1e-9)));
            for (int m = 0; m < parts; ++m)
                out.push_back({e.loop, e.segment, ts[k] + (ts[k + 1] - ts[k]) * m / parts,
                               ts[k] + (ts[k + 1] - ts[k]) * (m + 1) / parts});
        }
    }
    return out;
}

/// Cells of the region between a curved chain (P -> Q) and the straight segment A -> B
/// (A opposite P, B opposite Q); A == B collapses the region to a curved triangle.
inline std::vector<Cell> ruled_cells(const TrimmedDomain& dom, const std::vector<CurvedEdge>& chain, Vec2 A, Vec2 B,
                                     double max_turn) {
    const auto pieces = split_at_knots(dom, chain, max_turn);
    std::vector<double> len{0.0};
    for (const auto& e : pieces) len.push_back(len.back() + distance(curve_point(dom, e, 0.0), curve_point(dom, e, 1.0)));
    const bool collapsed = distance(A, B) == 0.0;
    std::vector<Cell> out;
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        const double s0 = len[k] / len.back(), s1 = len[k + 1] / len.back();
        Cell c;
        c.curve = pieces[k];
        const Vec2 P = curve_point(dom, pieces[k], 0.0), Q = curve_point(dom, pieces[k], 1.0);
        if (collapsed) {
            c.vertices = {P, Q, A};
        } else {
            const Vec2 S0{A[0] + s0 * (B[0] - A[0]), A[1] + s0 * (B[1] - A[1])};
            const Vec2 S1{A[0] + s1 * (B[0] - A[0]), A[1] + s1 * (B[1] - A[1])};
            c.vertices = {P, Q, S1, S0};
        }
        out.push_back(std::move(c));
    }
    return out;
}

/// Valid face of a trimmed element: one curved chain P -> Q, then boundary vertices back to P.
inline std::vector<Cell> partition_face(const TrimmedDomain& dom, const std::vector<CurvedEdge>& chain,
                                        const std::vector<Vec2>& V, double element_area, int element,
                                        double max_turn) {
    // V = [Q, c1, ..., ck, P]
    const int k1 = static_cast<int>(V.size()) - 1;
    const double min_area = 1e-14 * element_area;
    struct Candidate {
        std::vector<Cell> cells;
        double quality;
    };
    std::optional<Candidate> best;
    for (int i = 0; i <= k1; ++i)
        for (int j = i; j <= k1; ++j) {
            if (i == j && (i == 0 || i == k1)) continue;
            Candidate cand;
            cand.cells = ruled_cells(dom, chain, V[j], V[i], max_turn);
            cand.quality = INFINITY;
            for (const auto& c : cand.cells) cand.quality = std::min(cand.quality, detail::cell_quality(dom, c));
            if (!(cand.quality > 0.0)) continue;
            straight_cells(std::vector<Vec2>(V.begin(), V.begin() + i + 1), min_area, cand.cells);
            straight_cells(std::vector<Vec2>(V.begin() + i, V.begin() + j + 1), min_area, cand.cells);
            straight_cells(std::vector<Vec2>(V.begin() + j, V.end()), min_area, cand.cells);
            constexpr double acceptable = 0.05;
            auto better = [&](const Candidate& a, const Candidate& b) {
                const bool ga = a.quality >= acceptable, gb = b.quality >= acceptable;
                if (ga != gb) return ga;
                if (ga && a.cells.size() != b.cells.size()) return a.cells.size() < b.cells.size();
                return a.quality > b.quality;
            };
            if (!best || better(cand, *best)) best = std::move(cand);
        }
    if (!best)
        throw UnsupportedTrimTopology("no valid cell layout for trimmed element " + std::to_string(element) +
                                      "; refine the mesh");
    return std::move(best->cells);
}

}  // namespace detail

/// Cells covering the valid part of one element from the loop pieces inside it.
inline CellPartition partition_trimmed_element(const TrimmedDomain& dom, const Rect& E, int element,
                                               const std::vector<SubArc>& all, const std::vector<int>& inside,
                                               double max_turn = cell_turn_limit(3)) {
    using detail::ElementArc;
    const double tol_b = 1e-9 * E.extent();
    auto on_boundary = [&](Vec2 x) { return detail::boundary_distance(E, x) <= tol_b; };
    const std::string where = "trimmed element " + std::to_string(element);

    // next sub-arc of the same closed loop
    auto next_of = [&](int g) {
        const int l = all[g].loop;
        int n = g + 1;
        if (n >= static_cast<int>(all.size()) || all[n].loop != l) {
            n = g;
            while (n > 0 && all[n - 1].loop == l) --n;
        }
        return n;
    };

    std::vector<ElementArc> arcs;
    std::vector<char> used(all.size(), 0);
    for (int g : inside) {
        if (used[g] || !on_boundary(all[g].p0)) continue;
        ElementArc arc;
        arc.loop = all[g].loop;
        arc.start = all[g].p0;
        int cur = g;
        for (std::size_t guard = 0;; ++guard) {
            if (guard > all.size()) throw UnsupportedTrimTopology(where + ": unterminated curve chain");
            used[cur] = 1;
            arc.pieces.push_back({all[cur].loop, all[cur].segment, all[cur].t0, all[cur].t1});
            if (on_boundary(all[cur].p1)) break;
            cur = next_of(cur);
            if (all[cur].element != element)
                throw UnsupportedTrimTopology(where + ": curve chain leaves the element through its interior");
        }
        arc.end = all[cur].p1;
        arcs.push_back(std::move(arc));
    }
    for (int g : inside)
        if (!used[g])
            throw UnsupportedTrimTopology(where + " contains a closed trimming loop; refine the mesh");

    // boundary nodes: corners plus arc ends, ordered counter-clockwise
    struct Node {
        double s;
        Vec2 x;
    };
    std::vector<Node> nodes;
    for (int c = 0; c < 4; ++c) nodes.push_back({static_cast<double>(c), detail::perimeter_corner(E, c)});
    const double tol_s = 1e-9;
    auto node_of = [&](Vec2 x) {
        double s = detail::perimeter_param(E, x);
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            const double ds = std::abs(nodes[n].s - s);
            if (std::min(ds, 4.0 - ds) < tol_s) return static_cast<int>(n);
        }
        nodes.push_back({s, detail::snap_to_boundary(E, x)});
        return static_cast<int>(nodes.size()) - 1;
    };
    for (auto& a : arcs) {
        a.n_start = node_of(a.start);
        a.n_end = node_of(a.end);
    }
    std::vector<int> order(nodes.size());
    for (std::size_t n = 0; n < nodes.size(); ++n) order[n] = static_cast<int>(n);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return nodes[a].s < nodes[b].s; });
    std::vector<int> rank(nodes.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);
    const int N = static_cast<int>(nodes.size());

    // directed edges: boundary edge r goes from order[r] to order[r+1]; arc a forward/backward
    struct Dir {
        int kind;  // 0 boundary, 1 arc forward, 2 arc backward
        int index;
    };
    auto edge_id = [&](const Dir& d) { return d.kind == 0 ? d.index : N + 2 * d.index + (d.kind - 1); };
    auto end_node = [&](const Dir& d) {
        if (d.kind == 0) return order[(d.index + 1) % N];
        return d.kind == 1 ? arcs[d.index].n_end : arcs[d.index].n_start;
    };
    // direction leaving node n along an arc, from a nearby point on it
    auto arc_dir_from = [&](int a, bool from_start) {
        const auto& pcs = arcs[a].pieces;
        const Vec2 base = from_start ? arcs[a].start : arcs[a].end;
        const auto& e = from_start ? pcs.front() : detail::reversed(pcs.back());
        const Vec2 y = detail::curve_point(dom, e, 1e-3);
        return std::atan2(y[1] - base[1], y[0] - base[0]);
    };
    auto side_angle = [&](double s, bool forward) {
        const double eps = 1e-12;
        int side = static_cast<int>(std::floor(forward ? s + eps : s - eps));
        const Vec2 d = detail::side_direction(side);
        return forward ? std::atan2(d[1], d[0]) : std::atan2(-d[1], -d[0]);
    };
    // reverse of the incoming direction, as seen from the end node
    auto back_angle = [&](const Dir& d) {
        if (d.kind == 0) return side_angle(nodes[end_node(d)].s == 0.0 ? 4.0 : nodes[end_node(d)].s, false);
        return arc_dir_from(d.index, d.kind == 2);
    };

    const int n_dir = N + 2 * static_cast<int>(arcs.size());
    std::vector<char> visited(n_dir, 0);
    CellPartition part;
    part.element = element;

    auto trace = [&](Dir start) {
        std::vector<Dir> face;
        Dir cur = start;
        for (int guard = 0;; ++guard) {
            if (guard > n_dir + 1) throw UnsupportedTrimTopology(where + ": face tracing did not close");
            visited[edge_id(cur)] = 1;
            face.push_back(cur);
            const int n = end_node(cur);
            const double theta = back_angle(cur);
            Dir best{-1, -1};
            double best_rot = INFINITY;
            auto consider = [&](Dir d, double angle) {
                double rot = std::fmod(theta - angle + 4.0 * std::numbers::pi, 2.0 * std::numbers::pi);
                if (rot < 1e-12) rot = 2.0 * std::numbers::pi;
                if (rot < best_rot) {
                    best_rot = rot;
                    best = d;
                }
            };
            consider({0, rank[n]}, side_angle(nodes[n].s, true));
            for (std::size_t a = 0; a < arcs.size(); ++a) {
                if (arcs[a].n_start == n) consider({1, static_cast<int>(a)}, arc_dir_from(static_cast<int>(a), true));
                if (arcs[a].n_end == n) consider({2, static_cast<int>(a)}, arc_dir_from(static_cast<int>(a), false));
            }
            cur = best;
            if (edge_id(cur) == edge_id(start)) break;
            if (visited[edge_id(cur)]) throw UnsupportedTrimTopology(where + ": inconsistent face layout");
        }
        return face;
    };

    std::vector<std::vector<Dir>> faces;
    for (int r = 0; r < N; ++r)
        if (!visited[r]) faces.push_back(trace({0, r}));
    for (std::size_t a = 0; a < arcs.size(); ++a)
        for (int kind : {1, 2})
            if (!visited[edge_id({kind, static_cast<int>(a)})]) faces.push_back(trace({kind, static_cast<int>(a)}));

    std::vector<char> loop_seen(dom.num_loops(), 0);
    for (const auto& a : arcs) loop_seen[a.loop] = 1;

    for (const auto& face : faces) {
        int n_valid = 0, n_invalid = 0;
        for (const auto& d : face) {
            if (d.kind == 0) continue;
            const bool left = dom.valid_left(arcs[d.index].loop);
            ((d.kind == 1) == left ? n_valid : n_invalid)++;
        }
        if (n_valid == 0) continue;
        if (n_invalid > 0) throw MalformedTrim(where + ": overlapping trimming loops");
        // rotate so that the face starts with its curved chain
        const int F = static_cast<int>(face.size());
        int s0 = -1;
        for (int k = 0; k < F; ++k)
            if (face[k].kind != 0 && face[(k + F - 1) % F].kind == 0) {
                if (s0 >= 0) throw UnsupportedTrimTopology(where + " has several trimming curve pieces bounding one valid region; refine the mesh");
                s0 = k;
            }
        if (s0 < 0) throw UnsupportedTrimTopology(where + ": valid region bounded by curves only; refine the mesh");
        std::vector<CurvedEdge> chain;
        int k = s0;
        for (; face[k % F].kind != 0; ++k) {
            const auto& d = face[k % F];
            const auto& pcs = arcs[d.index].pieces;
            if (d.kind == 1) chain.insert(chain.end(), pcs.begin(), pcs.end());
            else
                for (auto it = pcs.rbegin(); it != pcs.rend(); ++it) chain.push_back(detail::reversed(*it));
        }
        std::vector<Vec2> V{nodes[end_node(face[(k - 1) % F])].x};
        for (; face[k % F].kind == 0; ++k) V.push_back(nodes[end_node(face[k % F])].x);
        auto cells = detail::partition_face(dom, chain, V, E.area(), element, max_turn);
        // loops without pieces in this element still have to keep the face
        bool keep = true;
        const auto probe = map_gauss_to_cell(dom, cells.front(), 2);
        for (int l = 0; l < dom.num_loops() && keep; ++l)
            if (!loop_seen[l]) keep = dom.valid_for(l, {probe[0].u, probe[0].v});
        if (keep) part.cells.insert(part.cells.end(), cells.begin(), cells.end());
    }
    return part;
}

// ---------------------------------------------------------------------------
// Element, function and group classification

struct ElementClassification {
    ElementMesh mesh;
    std::vector<ElementLabel> labels;
    std::vector<double> valid_fraction;
    std::map<int, CellPartition> partitions;  ///< trimmed elements only
    std::vector<SubArc> arcs;
    int tangencies = 0;  ///< knot-line touches that were not counted as crossings
};

/// Loop pieces between consecutive knot-line hits, each assigned to the element it crosses.
inline std::vector<SubArc> split_loops(const TrimmedDomain& dom, const ElementMesh& mesh, int* tangencies = nullptr) {
    std::vector<SubArc> out;
    const double tol = 1e-12 * dom.bounds().extent();
    auto interval = [&](const std::vector<double>& brk, double x) {
        auto it = std::upper_bound(brk.begin(), brk.end(), x);
        const int i = static_cast<int>(it - brk.begin()) - 1;
        const bool on_line = (i >= 0 && std::abs(x - brk[i]) <= tol) ||
                             (i + 1 < static_cast<int>(brk.size()) && std::abs(brk[i + 1] - x) <= tol);
        return on_line ? -1 : i;
    };
    for (int l = 0; l < dom.num_loops(); ++l) {
        const auto& segs = dom.segments(l);
        for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
            const auto& c = segs[s];
            const auto hits = intersect_with_gridlines(c, mesh, true);
            std::vector<double> ts{c.t0()};
            for (const auto& h : hits) {
                if (tangencies && h.kind == CrossingKind::touch) ++*tangencies;
                ts.push_back(h.t);
            }
            ts.push_back(c.t1());
            std::sort(ts.begin(), ts.end());
            const double dt = 1e-12 * (c.t1() - c.t0());
            std::vector<double> uniq;
            for (double t : ts)
                if (uniq.empty() || t - uniq.back() > dt) uniq.push_back(t);
            if (uniq.size() == 1) uniq.push_back(c.t1());
            uniq.back() = c.t1();
            for (std::size_t k = 0; k + 1 < uniq.size(); ++k) {
                SubArc a;
                a.loop = l;
                a.segment = s;
                a.t0 = uniq[k];
                a.t1 = uniq[k + 1];
                a.p0 = c.point(a.t0);
                a.p1 = c.point(a.t1);
                const Vec2 mid = c.point(0.5 * (a.t0 + a.t1));
                const int eu = interval(mesh.u_breaks, mid[0]);
                const int ev = interval(mesh.v_breaks, mid[1]);
                a.element = (eu < 0 || ev < 0 || eu >= mesh.nu() || ev >= mesh.nv()) ? -1 : mesh.index(eu, ev);
                out.push_back(a);
            }
        }
    }
    return out;
}

inline Rect element_rect(const ElementMesh& mesh, int e) {
    return {mesh.u_breaks[mesh.eu(e)], mesh.u_breaks[mesh.eu(e) + 1], mesh.v_breaks[mesh.ev(e)],
            mesh.v_breaks[mesh.ev(e) + 1]};
}

/// Element labels, valid-area fractions and cell partitions of all trimmed elements.
inline ElementClassification classify_elements(const TrimmedDomain& dom, const ElementMesh& mesh,
                                               double max_turn = cell_turn_limit(3), int area_order = 8) {
    ElementClassification out;
    out.mesh = mesh;
    out.labels.assign(mesh.size(), ElementLabel::active_untrimmed);
    out.valid_fraction.assign(mesh.size(), 1.0);
    out.arcs = split_loops(dom, mesh, &out.tangencies);

    std::map<int, std::vector<int>> per_element;
    for (int g = 0; g < static_cast<int>(out.arcs.size()); ++g)
        if (out.arcs[g].element >= 0) per_element[out.arcs[g].element].push_back(g);

    for (int e = 0; e < mesh.size(); ++e) {
        const Rect E = element_rect(mesh, e);
        auto it = per_element.find(e);
        if (it == per_element.end()) {
            if (dom.classify(E.center()) == PointClass::invalid) {
                out.labels[e] = ElementLabel::inactive;
                out.valid_fraction[e] = 0.0;
            }
            continue;
        }
        CellPartition part = partition_trimmed_element(dom, E, e, out.arcs, it->second, max_turn);
        double area = 0.0;
        for (const auto& c : part.cells)
            for (const auto& q : map_gauss_to_cell(dom, c, area_order)) area += q.weight;
        const double frac = area / E.area();
        out.valid_fraction[e] = frac;
        if (frac < 1e-10) {
            out.labels[e] = ElementLabel::inactive;
        } else {
            out.labels[e] = ElementLabel::trimmed;
            out.partitions.emplace(e, std::move(part));
        }
    }
    return out;
}

/// Untrimmed functions have their whole support in active untrimmed elements.
inline std::vector<FunctionLabel> classify_functions(const SplineSpace1D& su, const SplineSpace1D& sv,
                                                     const ElementMesh& mesh, const std::vector<ElementLabel>& labels) {
    const int nu = su.dimension(), nv = sv.dimension();
    std::vector<FunctionLabel> out(static_cast<std::size_t>(nu) * nv);
    for (int j = 0; j < nv; ++j) {
        const auto [v0, v1] = sv.support_elements(j);
        for (int i = 0; i < nu; ++i) {
            const auto [u0, u1] = su.support_elements(i);
            bool any_trimmed = false, any_inactive = false, all_inactive = true;
            for (int ev = v0; ev <= v1; ++ev)
                for (int eu = u0; eu <= u1; ++eu) {
                    const auto lab = labels[mesh.index(eu, ev)];
                    any_trimmed |= lab == ElementLabel::trimmed;
                    any_inactive |= lab == ElementLabel::inactive;
                    all_inactive &= lab == ElementLabel::inactive;
                }
            // a trimming edge lying on a knot line puts inactive elements next to untrimmed ones
            out[i + j * nu] = (any_trimmed || (any_inactive && !all_inactive)) ? FunctionLabel::trimmed
                              : all_inactive ? FunctionLabel::inactive
                                             : FunctionLabel::untrimmed;
        }
    }
    return out;
}

inline std::vector<Group> group_elements(const SplineSpace1D& su, const SplineSpace1D& sv, const ElementMesh& mesh,
                                         const std::vector<ElementLabel>& labels,
                                         const std::vector<FunctionLabel>& functions) {
    std::vector<Group> out(labels.size());
    for (std::size_t e = 0; e < labels.size(); ++e)
        out[e] = labels[e] == ElementLabel::trimmed ? Group::t
                 : labels[e] == ElementLabel::inactive ? Group::ia
                                                       : Group::pw;
    const int nu = su.dimension(), nv = sv.dimension();
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            if (functions[i + j * nu] != FunctionLabel::trimmed) continue;
            const auto [u0, u1] = su.support_elements(i);
            const auto [v0, v1] = sv.support_elements(j);
            for (int ev = v0; ev <= v1; ++ev)
                for (int eu = u0; eu <= u1; ++eu) {
                    const int e = mesh.index(eu, ev);
                    if (out[e] == Group::pw) out[e] = Group::tra;
                }
        }
    return out;
}

inline GroupCounts count_groups(const std::vector<Group>& groups) {
    GroupCounts c;
    for (Group g : groups) {
        switch (g) {
            case Group::pw: ++c.pw; break;
            case Group::tra: ++c.tra; break;
            case Group::t: ++c.t; break;
            case Group::ia: ++c.ia; break;
        }
    }
    return c;
}

/// Element labels, function labels and the four-group partition of a trimmed patch.
struct DomainClassification {
    ElementMesh mesh;
    std::vector<ElementLabel> elements;
    std::vector<double> valid_fraction;
    std::vector<FunctionLabel> functions;  ///< index i + j * n_u
    std::vector<Group> groups;
    GroupCounts counts;
    std::map<int, CellPartition> partitions;
    int tangencies = 0;

    std::vector<int> elements_in(Group g) const {
        std::vector<int> out;
        for (std::size_t e = 0; e < groups.size(); ++e)
            if (groups[e] == g) out.push_back(static_cast<int>(e));
        return out;
    }
};

inline DomainClassification classify_domain(const TrimmedDomain& dom, const SplineSpace1D& su,
                                            const SplineSpace1D& sv) {
    const ElementMesh mesh(su, sv);
    const int order = mapped_rule_order(su.degree(), sv.degree(), dom.max_curve_degree());
    auto ec = classify_elements(dom, mesh, cell_turn_limit(order));
    DomainClassification out;
    out.mesh = mesh;
    out.functions = classify_functions(su, sv, mesh, ec.labels);
    out.groups = group_elements(su, sv, mesh, ec.labels, out.functions);
    out.counts = count_groups(out.groups);
    out.elements = std::move(ec.labels);
    out.valid_fraction = std::move(ec.valid_fraction);
    out.partitions = std::move(ec.partitions);
    out.tangencies = ec.tangencies;
    return out;
}

}  // namespace trimquad
