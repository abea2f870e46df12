#pragma once

// Benchmark problems, problem files, refinement, and convergence / count studies.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "trimquad/error.hpp"
#include "trimquad/fem.hpp"
#include "trimquad/quadrature.hpp"
#include "trimquad/spline.hpp"
#include "trimquad/trim.hpp"

namespace trimquad {

using json = nlohmann::json;

/// Displacement value to compare against, at a parametric point.
struct PointReference {
    std::string name;
    double u = 0.0, v = 0.0;
    int component = 0;
    double value = 0.0;
};

struct NeumannSpec {
    Edge edge = Edge::left;
    std::string field;  ///< "kirsch" or "constant"
    double T = 0.0, R = 1.0;
    Vec2 center{};
    std::array<double, 3> stress{};  ///< constant sxx, syy, sxy
};

struct StudySpec {
    std::vector<int> degrees{2, 3, 4, 5};
    std::vector<int> meshes{4, 8, 12, 16, 32, 64};
    std::vector<Method> methods{Method::gauss, Method::pw_trimm};
};

/// Parsed problem file: geometry, trimming, analysis and study blocks.
struct ProblemFile {
    std::string name;
    NurbsSurfacePatch patch;
    std::vector<TrimLoop> loops;
    ElementType element_type = ElementType::plane;
    Material material;
    std::vector<DirichletBC> dirichlet;
    std::vector<NeumannSpec> neumann;
    double q_z = 0.0;
    double W_ref = 0.0;
    std::vector<PointReference> points;
    StudySpec study;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline Edge parse_edge(const std::string& s) {
    if (s == "left") return Edge::left;
    if (s == "right") return Edge::right;
    if (s == "bottom") return Edge::bottom;
    if (s == "top") return Edge::top;
    throw ValidationError("constraint on nonexistent edge '" + s + "'");
}

inline int parse_component(const json& j, ElementType type) {
    const std::string c = j.get<std::string>();
    if (type == ElementType::plane) {
        if (c == "x") return 0;
        if (c == "y") return 1;
    } else if (c == "z") {
        return 0;
    }
    throw ValidationError("component '" + c + "' does not exist for " + to_string(type) + " elements");
}

inline const char* component_name(int c, ElementType type) {
    return type == ElementType::plane ? (c == 0 ? "x" : "y") : "z";
}

inline Method parse_method(const std::string& s) {
    if (s == "gauss") return Method::gauss;
    if (s == "pw_trimm") return Method::pw_trimm;
    throw ValidationError("unknown quadrature method '" + s + "'");
}

inline MaterialMode parse_mode(const std::string& s) {
    if (s == "plane_stress") return MaterialMode::plane_stress;
    if (s == "plane_strain") return MaterialMode::plane_strain;
    if (s == "plate_bending") return MaterialMode::plate_bending;
    throw ValidationError("unknown material mode '" + s + "'");
}

inline void check_weights(const std::vector<double>& w, const std::string& what) {
    for (double x : w)
        if (!(x > 0.0)) throw ValidationError(what + ": weight must be positive, got " + std::to_string(x));
}

inline NurbsCurve2D parse_curve(const json& j) {
    const auto knots = j.at("knots").get<std::vector<double>>();
    const int p = j.at("degree").get<int>();
    const auto cps = j.at("control_points").get<std::vector<std::array<double, 2>>>();
    std::vector<double> w = j.contains("weights") ? j.at("weights").get<std::vector<double>>()
                                                  : std::vector<double>(cps.size(), 1.0);
    check_weights(w, "trimming curve");
    SplineSpace1D space(knots, p);
    if (static_cast<int>(cps.size()) != space.dimension())
        throw ValidationError("trimming curve has " + std::to_string(cps.size()) + " control points, knot vector needs " +
                              std::to_string(space.dimension()));
    std::vector<Vec2> pts(cps.begin(), cps.end());
    return NurbsCurve2D(std::move(space), std::move(pts), std::move(w));
}

inline json curve_to_json(const NurbsCurve2D& c) {
    json j;
    j["degree"] = c.space().degree();
    j["knots"] = c.space().knots();
    j["control_points"] = c.points();
    j["weights"] = c.weights();
    return j;
}

}  // namespace detail

inline ProblemFile parse_problem(const json& j) {
    ProblemFile pf;
    try {
        pf.name = j.value("name", "problem");
        const auto& g = j.at("geometry");
        const auto wts = g.at("weights").get<std::vector<double>>();
        detail::check_weights(wts, "geometry");
        SplineSpace1D su(g.at("knots_u").get<std::vector<double>>(), g.at("degree_u").get<int>());
        SplineSpace1D sv(g.at("knots_v").get<std::vector<double>>(), g.at("degree_v").get<int>());
        std::vector<Vec3> cps;
        for (const auto& c : g.at("control_points")) {
            const auto v = c.get<std::vector<double>>();
            if (v.size() != 2 && v.size() != 3) throw ValidationError("control point must have 2 or 3 coordinates");
            cps.push_back({v[0], v[1], v.size() == 3 ? v[2] : 0.0});
        }
        pf.patch = NurbsSurfacePatch(su, sv, std::move(cps), wts);

        if (j.contains("trim")) {
            for (const auto& jl : j.at("trim").at("loops")) {
                TrimLoop loop;
                loop.closed = jl.value("closed", true);
                const std::string keep = jl.value("keep", "outside");
                if (keep != "outside" && keep != "inside") throw ValidationError("unknown keep rule '" + keep + "'");
                loop.keep = keep == "inside" ? KeepRule::inside : KeepRule::outside;
                for (const auto& jc : jl.at("segments")) loop.segments.push_back(detail::parse_curve(jc));
                pf.loops.push_back(std::move(loop));
            }
        }

        const auto& a = j.at("analysis");
        const std::string et = a.at("element_type").get<std::string>();
        if (et != "plane" && et != "kl_plate") throw ValidationError("unknown element type '" + et + "'");
        pf.element_type = et == "plane" ? ElementType::plane : ElementType::kl_plate;
        const auto& m = a.at("material");
        pf.material.E = m.at("E").get<double>();
        pf.material.nu = m.at("nu").get<double>();
        pf.material.thickness = m.value("thickness", 1.0);
        pf.material.mode = detail::parse_mode(m.at("mode").get<std::string>());
        for (const auto& d : a.value("dirichlet", json::array()))
            pf.dirichlet.push_back(
                {detail::parse_edge(d.at("edge").get<std::string>()), detail::parse_component(d.at("component"), pf.element_type)});
        for (const auto& n : a.value("neumann", json::array())) {
            NeumannSpec ns;
            ns.edge = detail::parse_edge(n.at("edge").get<std::string>());
            ns.field = n.at("field").get<std::string>();
            if (ns.field == "kirsch") {
                ns.T = n.at("T").get<double>();
                ns.R = n.at("R").get<double>();
                if (n.contains("center")) ns.center = n.at("center").get<Vec2>();
            } else if (ns.field == "constant") {
                ns.stress = n.at("stress").get<std::array<double, 3>>();
            } else {
                throw ValidationError("unknown traction field '" + ns.field + "'");
            }
            pf.neumann.push_back(ns);
        }
        pf.q_z = a.value("q_z", 0.0);
        if (a.contains("reference")) {
            const auto& r = a.at("reference");
            pf.W_ref = r.value("W", 0.0);
            for (const auto& p : r.value("points", json::array()))
                pf.points.push_back({p.at("name").get<std::string>(), p.at("u").get<double>(), p.at("v").get<double>(),
                                     detail::parse_component(p.at("component"), pf.element_type),
                                     p.at("value").get<double>()});
        }
        if (j.contains("study")) {
            const auto& s = j.at("study");
            if (s.contains("degrees")) pf.study.degrees = s.at("degrees").get<std::vector<int>>();
            if (s.contains("meshes")) pf.study.meshes = s.at("meshes").get<std::vector<int>>();
            if (s.contains("methods")) {
                pf.study.methods.clear();
                for (const auto& mm : s.at("methods")) pf.study.methods.push_back(detail::parse_method(mm.get<std::string>()));
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("problem file: ") + e.what());
    }
    // loop closure and boundary checks
    (void)TrimmedDomain(Rect{pf.patch.space_u().lower(), pf.patch.space_u().upper(), pf.patch.space_v().lower(),
                             pf.patch.space_v().upper()},
                        pf.loops);
    pf.material.validate();
    if ((pf.element_type == ElementType::kl_plate) != (pf.material.mode == MaterialMode::plate_bending))
        throw ValidationError("element type is inconsistent with material mode");
    return pf;
}

inline json problem_to_json(const ProblemFile& pf) {
    json j;
    j["name"] = pf.name;
    auto& g = j["geometry"];
    g["degree_u"] = pf.patch.space_u().degree();
    g["degree_v"] = pf.patch.space_v().degree();
    g["knots_u"] = pf.patch.space_u().knots();
    g["knots_v"] = pf.patch.space_v().knots();
    g["control_points"] = pf.patch.points();
    g["weights"] = pf.patch.weights();
    json loops = json::array();
    for (const auto& l : pf.loops) {
        json jl;
        jl["closed"] = l.closed;
        jl["keep"] = l.keep == KeepRule::inside ? "inside" : "outside";
        for (const auto& c : l.segments) jl["segments"].push_back(detail::curve_to_json(c));
        loops.push_back(jl);
    }
    j["trim"]["loops"] = loops;
    auto& a = j["analysis"];
    a["element_type"] = to_string(pf.element_type);
    a["material"] = {{"E", pf.material.E},
                     {"nu", pf.material.nu},
                     {"thickness", pf.material.thickness},
                     {"mode", to_string(pf.material.mode)}};
    a["dirichlet"] = json::array();
    for (const auto& d : pf.dirichlet)
        a["dirichlet"].push_back({{"edge", to_string(d.edge)}, {"component", detail::component_name(d.component, pf.element_type)}});
    a["neumann"] = json::array();
    for (const auto& n : pf.neumann) {
        json jn{{"edge", to_string(n.edge)}, {"field", n.field}};
        if (n.field == "kirsch") {
            jn["T"] = n.T;
            jn["R"] = n.R;
            jn["center"] = n.center;
        } else {
            jn["stress"] = n.stress;
        }
        a["neumann"].push_back(jn);
    }
    a["q_z"] = pf.q_z;
    a["reference"]["W"] = pf.W_ref;
    a["reference"]["points"] = json::array();
    for (const auto& p : pf.points)
        a["reference"]["points"].push_back({{"name", p.name},
                                            {"u", p.u},
                                            {"v", p.v},
                                            {"component", detail::component_name(p.component, pf.element_type)},
                                            {"value", p.value}});
    j["study"]["degrees"] = pf.study.degrees;
    j["study"]["meshes"] = pf.study.meshes;
    j["study"]["methods"] = json::array();
    for (auto m : pf.study.methods) j["study"]["methods"].push_back(to_string(m));
    return j;
}

inline ProblemFile load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open problem file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("problem file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_problem(j);
}

// ---------------------------------------------------------------------------
// Built-in problems

namespace detail {

inline NurbsSurfacePatch bilinear_patch(double x0, double x1, double y0, double y1) {
    return NurbsSurfacePatch(SplineSpace1D({x0, x0, x1, x1}, 1), SplineSpace1D({y0, y0, y1, y1}, 1),
                             {{x0, y0, 0.0}, {x1, y0, 0.0}, {x0, y1, 0.0}, {x1, y1, 0.0}}, {1.0, 1.0, 1.0, 1.0});
}

/// Full circle as four rational quadratic quarters, clockwise from the rightmost point.
inline NurbsCurve2D circle_cw(Vec2 c, double r) {
    const double s = std::numbers::sqrt2 / 2.0;
    const double x = c[0], y = c[1];
    return NurbsCurve2D(SplineSpace1D({0, 0, 0, .25, .25, .5, .5, .75, .75, 1, 1, 1}, 2),
                        {{x + r, y}, {x + r, y - r}, {x, y - r}, {x - r, y - r}, {x - r, y}, {x - r, y + r}, {x, y + r},
                         {x + r, y + r}, {x + r, y}},
                        {1, s, 1, s, 1, s, 1, s, 1});
}

}  // namespace detail

/// Infinite plate with a circular hole: upper-left quarter, plane strain, exact Kirsch tractions.
inline ProblemFile infinite_plate() {
    ProblemFile pf;
    pf.name = "infinite_plate";
    const double L = 4.0, R = 1.0, T = 10.0;
    pf.patch = detail::bilinear_patch(-L, 0.0, 0.0, L);
    const double s = std::numbers::sqrt2 / 2.0;
    TrimLoop arc;
    arc.closed = false;
    arc.keep = KeepRule::inside;
    arc.segments.push_back(NurbsCurve2D(SplineSpace1D({0, 0, 0, 1, 1, 1}, 2), {{-R, 0.0}, {-R, R}, {0.0, R}}, {1, s, 1}));
    pf.loops.push_back(arc);
    pf.element_type = ElementType::plane;
    pf.material = {100.0, 0.3, 1.0, MaterialMode::plane_strain};
    pf.dirichlet = {{Edge::right, 0}, {Edge::bottom, 1}};
    for (Edge e : {Edge::left, Edge::top}) {
        NeumannSpec n;
        n.edge = e;
        n.field = "kirsch";
        n.T = T;
        n.R = R;
        pf.neumann.push_back(n);
    }
    // analytic energy of the Kirsch field over the quarter (rounds to 7.69365373)
    pf.W_ref = 7.69365372641817;
    pf.study.degrees = {2, 3, 4, 5};
    return pf;
}

/// Simply supported square plate with a central circular hole under uniform pressure.
inline ProblemFile plate_hole() {
    ProblemFile pf;
    pf.name = "plate_hole";
    const double L = 4.0, R = 1.0;
    pf.patch = detail::bilinear_patch(-L, L, -L, L);
    TrimLoop hole;
    hole.segments.push_back(detail::circle_cw({0.0, 0.0}, R));
    pf.loops.push_back(hole);
    pf.element_type = ElementType::kl_plate;
    pf.material = {10000.0, 0.3, 0.1, MaterialMode::plate_bending};
    for (Edge e : {Edge::left, Edge::right, Edge::bottom, Edge::top}) pf.dirichlet.push_back({e, 0});
    pf.q_z = -1.0;
    pf.study.degrees = {3, 4, 5};
    return pf;
}

/// Simply supported rectangular plate with three holes of increasing complexity.
inline ProblemFile punched_plate() {
    ProblemFile pf;
    pf.name = "punched_plate";
    pf.patch = detail::bilinear_patch(0.0, 12.0, 0.0, 10.0);
    const double s = std::numbers::sqrt2 / 2.0;
    TrimLoop c1, c2, c3;
    c1.segments.push_back(NurbsCurve2D(
        SplineSpace1D({0, 0, 0, .25, .25, .5, .5, .75, .75, 1, 1, 1}, 2),
        {{3, 2.5}, {3, 2}, {2.5, 2}, {2, 2}, {2, 2.5}, {2, 3}, {2.5, 3}, {3, 3}, {3, 2.5}}, {1, s, 1, s, 1, s, 1, s, 1}));
    // one control point, (3, 6), is missing from the printed list; the knot vector needs 21
    c2.segments.push_back(NurbsCurve2D(
        SplineSpace1D({0, 0, 0, .1, .1, .2, .2, .3, .3, .4, .4, .5, .5, .6, .6, .7, .7, .8, .8, .9, .9, 1, 1, 1}, 2),
        {{2.5, 8}, {3.5, 8}, {4.5, 8}, {5, 8},   {5, 7.5}, {5, 7},   {4.5, 7}, {4, 7},   {3.5, 7}, {3, 7},   {3, 6.5},
         {3, 6},   {3, 5.5}, {3, 5},   {2.5, 5}, {2, 5},   {2, 5.5}, {2, 6.5}, {2, 7.5}, {2, 8},   {2.5, 8}},
        {1, 1, 1, s, 1, s, 1, 1, 1, s, 1, 1, 1, s, 1, s, 1, 1, 1, s, 1}));
    c3.segments.push_back(NurbsCurve2D(
        SplineSpace1D({0, 0, 0, .25, .25, .375, .375, .5, .5, .75, .75, .875, .875, 1, 1, 1}, 2),
        {{8, 8}, {9, 8}, {10, 8}, {10.5, 8}, {10.5, 7.5}, {10.5, 7}, {10, 7}, {9, 7}, {8, 7}, {7.5, 7}, {7.5, 7.5},
         {7.5, 8}, {8, 8}},
        {1, 1, 1, s, 1, s, 1, 1, 1, s, 1, s, 1}));
    pf.loops = {c1, c2, c3};
    pf.element_type = ElementType::kl_plate;
    pf.material = {10000.0, 0.3, 0.1, MaterialMode::plate_bending};
    for (Edge e : {Edge::left, Edge::right, Edge::bottom, Edge::top}) pf.dirichlet.push_back({e, 0});
    pf.q_z = -1.0;
    pf.points.push_back({"u_z,mid", 6.0, 5.0, 0, 0.0});
    pf.study.degrees = {3, 4, 5};
    // 32 x 32 is the second mesh of this study; coarser meshes couple across the holes
    pf.study.meshes = {16, 32, 64, 128};
    return pf;
}

inline ProblemFile builtin_problem(const std::string& name) {
    if (name == "infinite_plate") return infinite_plate();
    if (name == "plate_hole") return plate_hole();
    if (name == "punched_plate") return punched_plate();
    throw UnknownProblem("unknown problem '" + name + "' (expected infinite_plate, plate_hole or punched_plate)");
}

inline std::vector<std::string> builtin_names() { return {"infinite_plate", "plate_hole", "punched_plate"}; }

// ---------------------------------------------------------------------------
// Refinement

namespace detail {

/// Uniform n-element space of degree p containing `geom` (after elevation), maximum regularity elsewhere.
inline SplineSpace1D refined_space(const SplineSpace1D& geom, int p, int n) {
    if (geom.degree() > p)
        throw InvalidRefinement("geometry degree " + std::to_string(geom.degree()) + " exceeds study degree " +
                                std::to_string(p));
    if (n < 1) throw InvalidRefinement("mesh must have at least one element per direction");
    const double a = geom.lower(), b = geom.upper();
    const auto old_brk = geom.breakpoints();
    const auto old_reg = geom.interior_regularity();
    const double tol = geom.knot_vector().tolerance();
    std::vector<double> U(p + 1, a);
    std::size_t matched = 0;
    for (int e = 1; e < n; ++e) {
        const double x = a + (b - a) * e / n;
        int mult = 1;
        for (std::size_t k = 1; k + 1 < old_brk.size(); ++k)
            if (std::abs(old_brk[k] - x) <= tol) {
                mult = std::max(1, p - old_reg[k - 1]);
                ++matched;
            }
        U.insert(U.end(), mult, x);
    }
    if (matched + 2 != old_brk.size())
        throw InvalidRefinement("a " + std::to_string(n) + "-element uniform mesh does not contain the geometry knots");
    U.insert(U.end(), p + 1, b);
    return SplineSpace1D(std::move(U), p);
}

}  // namespace detail

/// Analysis-ready spec: degree elevation to p, uniform knot insertion to n x n elements.
inline ProblemSpec refine(const ProblemFile& pf, int p, int n, Method method) {
    ProblemSpec spec;
    spec.patch = refine_patch(pf.patch, detail::refined_space(pf.patch.space_u(), p, n),
                              detail::refined_space(pf.patch.space_v(), p, n));
    spec.loops = pf.loops;
    spec.material = pf.material;
    spec.element_type = pf.element_type;
    spec.dirichlet = pf.dirichlet;
    for (const auto& ns : pf.neumann) {
        NeumannBC bc;
        bc.edge = ns.edge;
        bc.tag = ns.field;
        if (ns.field == "kirsch") {
            bc.stress = kirsch_field(ns.T, ns.R, ns.center[0], ns.center[1]);
        } else {
            const auto st = ns.stress;
            bc.stress = [st](double, double) { return st; };
        }
        spec.neumann.push_back(bc);
    }
    spec.q_z = pf.q_z;
    spec.method = method;
    return spec;
}

// ---------------------------------------------------------------------------
// Studies

struct ResultRow {
    std::string problem;
    int p = 0, q = 0, mesh = 0;
    Method method = Method::gauss;
    int dofs = 0;
    CountReport counts;
    long long cell_overhead = 0;
    double W = 0.0, W_ref = 0.0, rel_error = 0.0;
    std::vector<double> point_values;
    double limit_ratio = 0.0;
    double limit_points = 0.0;
    double residual = 0.0;
    double seconds_rules = 0.0, seconds_solve = 0.0;  ///< only filled with timing enabled
    std::string error;
};

struct StudyOptions {
    int workers = 1;
    bool timing = false;
};

/// Worker count from TRIMQUAD_WORKERS (default 1).
inline int workers_from_env() {
    const char* s = std::getenv("TRIMQUAD_WORKERS");
    if (!s) return 1;
    const int n = std::atoi(s);
    return n >= 1 ? n : 1;
}

inline ResultRow run_case(const ProblemFile& pf, int p, int mesh, Method method, bool timing = false) {
    using clock = std::chrono::steady_clock;
    ResultRow row;
    row.problem = pf.name;
    row.p = row.q = p;
    row.mesh = mesh;
    row.method = method;
    row.W_ref = pf.W_ref;
    row.limit_ratio = theoretical_ratio_limit(p, pf.element_type);
    row.limit_points = asymptotic_points_per_element(p, pf.element_type);
    try {
        const auto spec = refine(pf, p, mesh, method);
        spec.validate();
        const auto t0 = clock::now();
        const auto dom = spec.domain();
        const auto rules = build_rules(spec, dom);
        const auto t1 = clock::now();
        const auto sys = assemble(spec, dom, rules);
        const auto sol = solve(sys);
        const auto t2 = clock::now();
        const auto en = elastic_energy(sol, sys, pf.W_ref);
        row.dofs = sys.dofs();
        row.counts = sys.counts;
        row.cell_overhead = sys.cell_overhead;
        row.W = en.W;
        row.rel_error = en.error;
        row.residual = sol.residual;
        for (const auto& pr : pf.points)
            row.point_values.push_back(evaluate_displacement(spec, sys, sol, pr.u, pr.v, pr.component));
        if (timing) {
            row.seconds_rules = std::chrono::duration<double>(t1 - t0).count();
            row.seconds_solve = std::chrono::duration<double>(t2 - t1).count();
        }
    } catch (const Error& e) {
        row.error = e.what();
    }
    return row;
}

/// Every (degree, mesh, method) combination in study order; rows keep that order under any worker count.
inline std::vector<ResultRow> run_study(const ProblemFile& pf, const StudyOptions& opt = {}) {
    struct Job {
        int p, mesh;
        Method method;
    };
    std::vector<Job> jobs;
    for (int p : pf.study.degrees)
        for (int m : pf.study.meshes)
            for (Method meth : pf.study.methods) jobs.push_back({p, m, meth});
    std::vector<ResultRow> rows(jobs.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++)
            rows[i] = run_case(pf, jobs[i].p, jobs[i].mesh, jobs[i].method, opt.timing);
    };
    const int nw = std::max(1, std::min<int>(opt.workers, static_cast<int>(jobs.size())));
    if (nw == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return rows;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace detail

inline std::vector<std::string> csv_header(const ProblemFile& pf) {
    std::vector<std::string> h{"problem",      "p",         "q",         "mesh",        "method",     "dofs",
                               "n_gauss_total", "n_gauss_active", "n_pw_trimm_pred", "n_actual", "ratio", "use_rule",
                               "c",            "n_ele_pw",  "n_ele_tra", "n_ele_t",     "n_ele_ia",   "cell_overhead",
                               "W",            "W_ref",     "rel_error", "residual",    "limit_ratio", "limit_points_per_dir"};
    for (const auto& pr : pf.points) h.push_back(pr.name);
    h.insert(h.end(), {"seconds_rules", "seconds_assembly_solve", "error"});
    return h;
}

inline void write_csv(std::ostream& os, const ProblemFile& pf, const std::vector<ResultRow>& rows, bool timing = false) {
    using detail::fmt17;
    const auto h = csv_header(pf);
    for (std::size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << detail::csv_escape(h[i]);
    os << '\n';
    for (const auto& r : rows) {
        const auto& c = r.counts;
        os << detail::csv_escape(r.problem) << ',' << r.p << ',' << r.q << ',' << r.mesh << ',' << to_string(r.method) << ','
           << r.dofs << ',' << c.n_gauss_total << ',' << c.n_gauss_active << ',' << fmt17(c.n_pw_trimm) << ','
           << c.n_actual << ',' << fmt17(c.ratio) << ',' << (c.use_rule ? 1 : 0) << ',' << fmt17(c.c) << ','
           << c.groups.pw << ',' << c.groups.tra << ',' << c.groups.t << ',' << c.groups.ia << ',' << r.cell_overhead
           << ',' << fmt17(r.W) << ',' << fmt17(r.W_ref) << ',' << fmt17(r.rel_error) << ',' << fmt17(r.residual) << ','
           << fmt17(r.limit_ratio) << ',' << fmt17(r.limit_points);
        for (std::size_t k = 0; k < pf.points.size(); ++k)
            os << ',' << (k < r.point_values.size() ? fmt17(r.point_values[k]) : "");
        os << ',' << (timing ? fmt17(r.seconds_rules) : "") << ',' << (timing ? fmt17(r.seconds_solve) : "") << ','
           << detail::csv_escape(r.error) << '\n';
    }
}

/// Split one CSV line (quoted fields allowed, no embedded newlines).
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

/// Header plus rows of a results file, as strings.
inline std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(split_csv_line(line));
    return out;
}

// ---------------------------------------------------------------------------
// Group fractions

struct GroupFractions {
    int mesh = 0;
    GroupCounts counts;
    double pw = 0, tra = 0, t = 0, ia = 0;
    int tangencies = 0;
};

inline std::vector<GroupFractions> report_groups(const ProblemFile& pf, int p, const std::vector<int>& meshes) {
    std::vector<GroupFractions> out;
    for (int n : meshes) {
        const auto su = detail::refined_space(pf.patch.space_u(), p, n);
        const auto sv = detail::refined_space(pf.patch.space_v(), p, n);
        const TrimmedDomain dom(Rect{su.lower(), su.upper(), sv.lower(), sv.upper()}, pf.loops);
        const auto cls = classify_domain(dom, su, sv);
        GroupFractions g;
        g.mesh = n;
        g.counts = cls.counts;
        g.tangencies = cls.tangencies;
        const double tot = cls.counts.total();
        g.pw = cls.counts.pw / tot;
        g.tra = cls.counts.tra / tot;
        g.t = cls.counts.t / tot;
        g.ia = cls.counts.ia / tot;
        out.push_back(g);
    }
    return out;
}

}  // namespace trimquad
