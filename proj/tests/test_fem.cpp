#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "trimquad/fem.hpp"
#include "trimquad/oracle.hpp"

using namespace trimquad;

namespace {

NurbsSurfacePatch rect_patch(double x0, double x1, double y0, double y1, int p, int n) {
    const NurbsSurfacePatch lin(SplineSpace1D({x0, x0, x1, x1}, 1), SplineSpace1D({y0, y0, y1, y1}, 1),
                                {{x0, y0, 0.0}, {x1, y0, 0.0}, {x0, y1, 0.0}, {x1, y1, 0.0}}, {1.0, 1.0, 1.0, 1.0});
    return refine_patch(lin, uniform_space(x0, x1, p, n), uniform_space(y0, y1, p, n));
}

ProblemSpec tension_bar(int p, int n, Method method, double T = 3.0) {
    ProblemSpec s;
    s.patch = rect_patch(0, 2, 0, 1, p, n);
    s.material = {200.0, 0.25, 0.5, MaterialMode::plane_stress};
    s.dirichlet = {{Edge::left, 0}, {Edge::bottom, 1}};
    s.neumann.push_back({Edge::right, "constant", [T](double, double) { return std::array<double, 3>{T, 0.0, 0.0}; }});
    s.method = method;
    return s;
}

TrimLoop quarter_arc(double R) {
    const double s = std::numbers::sqrt2 / 2.0;
    TrimLoop arc;
    arc.closed = false;
    arc.keep = KeepRule::inside;
    arc.segments.push_back(NurbsCurve2D(SplineSpace1D({0, 0, 0, 1, 1, 1}, 2), {{-R, 0}, {-R, R}, {0, R}}, {1, s, 1}));
    return arc;
}

ProblemSpec kirsch_quarter(int p, int n, Method method, double T = 10.0) {
    ProblemSpec s;
    s.patch = rect_patch(-4, 0, 0, 4, p, n);
    s.loops = {quarter_arc(1.0)};
    s.material = {100.0, 0.3, 1.0, MaterialMode::plane_strain};
    s.dirichlet = {{Edge::right, 0}, {Edge::bottom, 1}};
    s.neumann.push_back({Edge::left, "kirsch", kirsch_field(T, 1.0)});
    s.neumann.push_back({Edge::top, "kirsch", kirsch_field(T, 1.0)});
    s.method = method;
    return s;
}

ProblemSpec ss_plate(int p, int n, Method method, double a = 1.0, double q = -1.0) {
    ProblemSpec s;
    s.patch = rect_patch(0, a, 0, a, p, n);
    s.element_type = ElementType::kl_plate;
    s.material = {1e4, 0.3, 0.1, MaterialMode::plate_bending};
    for (Edge e : {Edge::left, Edge::right, Edge::bottom, Edge::top}) s.dirichlet.push_back({e, 0});
    s.q_z = q;
    s.method = method;
    return s;
}

/// Simply supported rectangular plate under uniform load: double sine series.
struct Navier {
    double a, b, D, q;
    double coef(int m, int n) const {
        const double k = std::pow(m / a, 2) + std::pow(n / b, 2);
        return 16.0 * q / (std::pow(std::numbers::pi, 6) * D * m * n * k * k);
    }
    double deflection(double x, double y, int terms = 401) const {
        double w = 0.0;
        for (int m = 1; m <= terms; m += 2)
            for (int n = 1; n <= terms; n += 2)
                w += coef(m, n) * std::sin(m * std::numbers::pi * x / a) * std::sin(n * std::numbers::pi * y / b);
        return w;
    }
    /// 1/2 int q w
    double energy(int terms = 801) const {
        double W = 0.0;
        for (int m = 1; m <= terms; m += 2)
            for (int n = 1; n <= terms; n += 2) W += coef(m, n) * (4.0 * a * b / (std::numbers::pi * std::numbers::pi * m * n));
        return 0.5 * q * W;
    }
};

std::string validation_message(const ProblemSpec& s) {
    try {
        s.validate();
    } catch (const ValidationError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Material, PlaneMatrices) {
    const Material ps{1.0, 0.0, 1.0, MaterialMode::plane_stress};
    EXPECT_NEAR((ps.plane_matrix() - Eigen::Vector3d(1.0, 1.0, 0.5).asDiagonal().toDenseMatrix()).norm(), 0.0, 1e-15);
    const Material pe{100.0, 0.3, 1.0, MaterialMode::plane_strain};
    const auto D = pe.plane_matrix();
    // Lame parameters
    const double lambda = 100.0 * 0.3 / (1.3 * 0.4), mu = 100.0 / 2.6;
    EXPECT_NEAR(D(0, 0), lambda + 2.0 * mu, 1e-12);
    EXPECT_NEAR(D(0, 1), lambda, 1e-12);
    EXPECT_NEAR(D(2, 2), mu, 1e-12);
    const Material pb{1e4, 0.3, 0.1, MaterialMode::plate_bending};
    EXPECT_NEAR(pb.flexural_rigidity(), 1e4 * 1e-3 / (12.0 * 0.91), 1e-12);
}

TEST(Material, Validation) {
    EXPECT_THROW((Material{0.0, 0.3, 1.0}.validate()), ValidationError);
    EXPECT_THROW((Material{1.0, 0.5, 1.0}.validate()), ValidationError);
    EXPECT_THROW((Material{1.0, 0.3, 0.0}.validate()), ValidationError);
    EXPECT_NO_THROW((Material{1.0, -0.2, 1.0}.validate()));
}

TEST(Kirsch, HoleBoundaryIsTractionFree) {
    for (double th : {0.0, 0.4, 1.0, std::numbers::pi / 2}) {
        const auto [srr, stt, srt] = kirsch_polar(10.0, 1.0, 1.0, th);
        EXPECT_NEAR(srr, 0.0, 1e-13);
        EXPECT_NEAR(srt, 0.0, 1e-13);
        EXPECT_NEAR(stt, 10.0 * (1.0 - 2.0 * std::cos(2.0 * th)), 1e-12);
    }
    EXPECT_NEAR(kirsch_polar(10.0, 1.0, 1.0, std::numbers::pi / 2)[1], 30.0, 1e-12);
}

TEST(Kirsch, FarFieldIsUniaxial) {
    const auto s = kirsch_cartesian(10.0, 1.0, -1e4, 3e3);
    EXPECT_NEAR(s[0], 10.0, 1e-6);
    EXPECT_NEAR(s[1], 0.0, 1e-6);
    EXPECT_NEAR(s[2], 0.0, 1e-6);
}

TEST(Kirsch, CartesianMatchesPolarRotation) {
    const double x = -1.7, y = 0.9, r = std::hypot(x, y), th = std::atan2(y, x);
    const auto p = kirsch_polar(10.0, 1.0, r, th);
    const auto c = kirsch_cartesian(10.0, 1.0, x, y);
    // traction invariants
    EXPECT_NEAR(c[0] + c[1], p[0] + p[1], 1e-12);
    EXPECT_NEAR(c[0] * c[1] - c[2] * c[2], p[0] * p[1] - p[2] * p[2], 1e-10);
}

TEST(PatchTest, UniformTensionIsExact) {
    for (Method m : {Method::gauss, Method::pw_trimm})
        for (int p : {2, 3}) {
            const auto spec = tension_bar(p, 3, m);
            const auto r = run(spec);
            const double T = 3.0, E = 200.0, nu = 0.25, t = 0.5;
            EXPECT_NEAR(r.energy.W, T * T / (2.0 * E) * 2.0 * t, 1e-12) << to_string(m) << " p=" << p;
            for (double u : {0.3, 1.1, 2.0})
                for (double v : {0.0, 0.4, 1.0}) {
                    EXPECT_NEAR(evaluate_displacement(spec, r.system, r.solution, u, v, 0), T * u / E, 1e-12);
                    EXPECT_NEAR(evaluate_displacement(spec, r.system, r.solution, u, v, 1), -nu * T * v / E, 1e-12);
                }
        }
}

TEST(Assembly, StiffnessSymmetric) {
    const auto spec = kirsch_quarter(2, 8, Method::pw_trimm);
    const auto r = run(spec);
    const Eigen::SparseMatrix<double> A = r.system.K - Eigen::SparseMatrix<double>(r.system.K.transpose());
    EXPECT_LT(A.norm(), 1e-12 * r.system.K.norm());
    EXPECT_LT(r.solution.residual, 1e-10);
}

TEST(Assembly, InactiveFunctionsDropped) {
    auto spec = kirsch_quarter(2, 16, Method::gauss);
    const auto r = run(spec);
    EXPECT_LT(r.system.dofs(), 2 * spec.patch.num_u() * spec.patch.num_v());
    EXPECT_GT(r.system.counts.groups.ia, 0);
}

TEST(Assembly, MethodsAgreeOnAffineGeometry) {
    // affine geometry: both rules are exact outside trimmed elements, which share their cells
    for (int p : {2, 3}) {
        const auto g = run(kirsch_quarter(p, 8, Method::gauss));
        const auto w = run(kirsch_quarter(p, 8, Method::pw_trimm));
        EXPECT_NEAR(w.energy.W, g.energy.W, 1e-10 * g.energy.W) << "p=" << p;
    }
}

TEST(Assembly, PointTally) {
    const int p = 3, n = 8;
    const auto g = run(tension_bar(p, n, Method::gauss));
    EXPECT_EQ(g.system.tally.gauss, (p + 1) * (p + 1) * n * n);
    EXPECT_EQ(g.system.tally.t, 0);
    const auto w = run(tension_bar(p, n, Method::pw_trimm));
    const auto t = target_space(uniform_space(0, 1, p, n), ElementType::plane);
    const long long per_dir = static_cast<long long>(solve_patchwise_1d(t).size());
    EXPECT_EQ(w.system.tally.pw, per_dir * per_dir);
    EXPECT_EQ(w.system.tally.gauss + w.system.tally.tra_gauss + w.system.tally.t, 0);
    EXPECT_EQ(w.system.counts.n_actual, w.system.tally.total());
}

TEST(Energy, ZeroLoadGivesZero) {
    const auto r = run(tension_bar(2, 4, Method::pw_trimm, 0.0));
    EXPECT_EQ(r.energy.W, 0.0);
    EXPECT_EQ(r.solution.u.norm(), 0.0);
}

TEST(Energy, QuadraticInLoad) {
    const double W1 = run(kirsch_quarter(2, 8, Method::pw_trimm, 10.0)).energy.W;
    const double W2 = run(kirsch_quarter(2, 8, Method::pw_trimm, 20.0)).energy.W;
    EXPECT_NEAR(W2, 4.0 * W1, 1e-10 * W2);
}

TEST(Energy, InverseInStiffness) {
    auto a = kirsch_quarter(2, 8, Method::gauss);
    auto b = a;
    b.material.E *= 2.0;
    EXPECT_NEAR(run(a).energy.W, 2.0 * run(b).energy.W, 1e-10 * run(a).energy.W);
}

TEST(Energy, ErrorWithoutReferenceIsNaN) {
    const auto r = run(tension_bar(2, 2, Method::gauss));
    EXPECT_TRUE(std::isnan(r.energy.error));
    const auto q = run(tension_bar(2, 2, Method::gauss), 0.0225);
    EXPECT_NEAR(q.energy.error, std::abs(q.energy.W - 0.0225) / 0.0225, 1e-15);
}

TEST(Energy, KirschConvergesToAnalytic) {
    const double W_ref = oracle::kirsch_energy({100.0, 0.3, 1.0, MaterialMode::plane_strain}, 10.0, 1.0, 4.0, 1e-10).value;
    double prev = 1.0;
    for (int n : {4, 8, 16}) {
        const auto r = run(kirsch_quarter(2, n, Method::pw_trimm), W_ref);
        EXPECT_LT(r.energy.error, prev) << "n=" << n;
        prev = r.energy.error;
    }
    EXPECT_LT(prev, 1e-4);
}

TEST(Plate, SimplySupportedMatchesNavier) {
    const Navier nav{1.0, 1.0, Material{1e4, 0.3, 0.1, MaterialMode::plate_bending}.flexural_rigidity(), -1.0};
    for (Method m : {Method::gauss, Method::pw_trimm}) {
        const auto coarse = run(ss_plate(3, 6, m), nav.energy());
        const auto spec = ss_plate(3, 12, m);
        const auto r = run(spec, nav.energy());
        EXPECT_LT(r.energy.error, 1e-4) << to_string(m);
        EXPECT_LT(r.energy.error, 0.25 * coarse.energy.error) << to_string(m);
        EXPECT_NEAR(evaluate_displacement(spec, r.system, r.solution, 0.5, 0.5, 0), nav.deflection(0.5, 0.5),
                    1e-4 * std::abs(nav.deflection(0.5, 0.5)));
    }
}

TEST(Plate, CentreDeflectionCoefficient) {
    // w_max = 0.00406 q a^4 / D, tabulated
    const Navier nav{1.0, 1.0, 1.0, 1.0};
    EXPECT_NEAR(nav.deflection(0.5, 0.5), 0.00406, 5e-6);
}

TEST(Plate, SymmetricDeflection) {
    const auto spec = ss_plate(3, 8, Method::pw_trimm);
    const auto r = run(spec);
    for (double u : {0.1, 0.3, 0.45}) {
        const double w = evaluate_displacement(spec, r.system, r.solution, u, 0.2, 0);
        EXPECT_NEAR(evaluate_displacement(spec, r.system, r.solution, 1.0 - u, 0.2, 0), w, 1e-10 * std::abs(w));
        EXPECT_NEAR(evaluate_displacement(spec, r.system, r.solution, 0.2, u, 0), w, 1e-10 * std::abs(w));
    }
}

TEST(Validation, DistinctMessages) {
    std::vector<std::string> msgs;
    auto a = ss_plate(2, 4, Method::gauss);
    a.material.mode = MaterialMode::plane_stress;
    msgs.push_back(validation_message(a));
    auto b = tension_bar(2, 2, Method::gauss);
    b.dirichlet.push_back({Edge::top, 2});
    msgs.push_back(validation_message(b));
    auto c = ss_plate(2, 4, Method::gauss);
    c.neumann.push_back({Edge::left, "constant", [](double, double) { return std::array<double, 3>{}; }});
    msgs.push_back(validation_message(c));
    auto d = tension_bar(2, 2, Method::gauss);
    d.neumann[0].stress = nullptr;
    msgs.push_back(validation_message(d));
    auto e = ss_plate(2, 4, Method::gauss);
    e.patch = rect_patch(0, 1, 0, 1, 1, 4);
    msgs.push_back(validation_message(e));
    for (const auto& m : msgs) EXPECT_FALSE(m.empty());
    for (std::size_t i = 0; i < msgs.size(); ++i)
        for (std::size_t j = i + 1; j < msgs.size(); ++j) EXPECT_NE(msgs[i], msgs[j]);
}

TEST(Validation, PlateNeedsC1) {
    auto s = ss_plate(2, 4, Method::gauss);
    const NurbsSurfacePatch lin(SplineSpace1D({0, 0, 1, 1}, 1), SplineSpace1D({0, 0, 1, 1}, 1),
                                {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}, {1, 1, 1, 1});
    s.patch = refine_patch(lin, uniform_space(0, 1, 2, 4, 0), uniform_space(0, 1, 2, 4, 0));
    EXPECT_THROW(s.validate(), UnsupportedContinuity);
}
