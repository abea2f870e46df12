#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>

#include "trimquad/quadrature.hpp"
#include "trimquad/spline.hpp"

using namespace trimquad;

namespace {

// Textbook recursive definition, used as an independent reference.
double naive_basis(const std::vector<double>& U, int i, int p, double x, bool last) {
    if (p == 0) {
        if (U[i] <= x && x < U[i + 1]) return 1.0;
        // right-closed last non-empty span
        if (last && x == U[i + 1] && U[i] < U[i + 1] && x == U.back()) return 1.0;
        return 0.0;
    }
    double a = 0.0, b = 0.0;
    if (U[i + p] > U[i]) a = (x - U[i]) / (U[i + p] - U[i]) * naive_basis(U, i, p - 1, x, last);
    if (U[i + p + 1] > U[i + 1]) b = (U[i + p + 1] - x) / (U[i + p + 1] - U[i + 1]) * naive_basis(U, i + 1, p - 1, x, last);
    return a + b;
}

SplineSpace1D random_space(std::mt19937& rng, int p, int n_ele, bool mixed) {
    std::uniform_real_distribution<double> gap(0.2, 1.0);
    std::uniform_int_distribution<int> mult(1, p);
    std::vector<double> brk{0.0};
    for (int e = 0; e < n_ele; ++e) brk.push_back(brk.back() + gap(rng));
    std::vector<double> U(p + 1, brk.front());
    for (int e = 1; e < n_ele; ++e) U.insert(U.end(), mixed ? mult(rng) : 1, brk[e]);
    U.insert(U.end(), p + 1, brk.back());
    return SplineSpace1D(U, p);
}

double full_value(const SplineSpace1D& s, int i, double x, int d) {
    const auto b = eval_basis(s, x, d);
    const int j = i - b.first;
    return (j >= 0 && j <= s.degree()) ? b.ders[d][j] : 0.0;
}

}  // namespace

TEST(KnotVector, RejectsNonOpenAndDecreasing) {
    EXPECT_THROW(KnotVector({0, 0, 1, 1, 1}, 2), InvalidKnotVector);
    EXPECT_THROW(KnotVector({0, 0, 0, 0.7, 0.5, 1, 1, 1}, 2), InvalidKnotVector);
    EXPECT_THROW(KnotVector({0, 0, 0, 0.5, 0.5, 0.5, 0.5, 1, 1, 1}, 2), InvalidKnotVector);
    EXPECT_NO_THROW(KnotVector({0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1}, 2));
}

TEST(KnotVector, MultiplicityUsesRelativeTolerance) {
    const KnotVector kv({0, 0, 0, 0.5, 0.5 + 1e-14, 1, 1, 1}, 2);
    EXPECT_EQ(kv.multiplicity(0.5), 2);
    EXPECT_EQ(kv.breakpoints().size(), 3u);
}

TEST(FindSpan, ContainingSpanAndRightEnd) {
    const KnotVector kv({0, 0, 0, 0.5, 1, 1, 1}, 2);
    EXPECT_EQ(find_span(kv, 0.25), 2);
    EXPECT_EQ(find_span(kv, 1.0), 3);
    EXPECT_EQ(find_span(kv, 0.5), 3);
    EXPECT_THROW(find_span(kv, 1.5), DomainError);
    EXPECT_THROW(find_span(kv, -0.1), DomainError);
}

TEST(EvalBasis, LinearHats) {
    const auto b = eval_basis(SplineSpace1D({0, 0, 1, 1}, 1), 0.3, 0);
    ASSERT_EQ(b.ders[0].size(), 2u);
    EXPECT_NEAR(b.ders[0][0], 0.7, 1e-15);
    EXPECT_NEAR(b.ders[0][1], 0.3, 1e-15);
}

TEST(EvalBasis, BernsteinMidpoint) {
    const auto b = eval_basis(SplineSpace1D({0, 0, 0, 1, 1, 1}, 2), 0.5, 0);
    EXPECT_NEAR(b.ders[0][0], 0.25, 1e-15);
    EXPECT_NEAR(b.ders[0][1], 0.5, 1e-15);
    EXPECT_NEAR(b.ders[0][2], 0.25, 1e-15);
}

TEST(EvalBasis, MatchesRecursiveDefinition) {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        const int p = 1 + trial % 5;
        const auto s = random_space(rng, p, 1 + trial % 7, true);
        std::uniform_real_distribution<double> X(s.lower(), s.upper());
        for (int k = 0; k < 25; ++k) {
            const double x = k == 0 ? s.upper() : X(rng);
            for (int i = 0; i < s.dimension(); ++i)
                EXPECT_NEAR(full_value(s, i, x, 0), naive_basis(s.knots(), i, p, x, true), 1e-13);
        }
    }
}

TEST(EvalBasis, InteriorKnotUsesRightLimit) {
    const SplineSpace1D s({0, 0, 0, 0.5, 0.5, 1, 1, 1}, 2);
    const auto b = eval_basis(s, 0.5, 1);
    const auto r = eval_basis(s, 0.5 + 1e-12, 1);
    EXPECT_EQ(b.first, r.first);
    for (int j = 0; j <= 2; ++j) EXPECT_NEAR(b.ders[1][j], r.ders[1][j], 1e-9);
}

TEST(EvalBasis, PartitionOfUnityProperty) {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int p = 1 + trial % 5;
        const auto s = random_space(rng, p, 1 + (trial * 7) % 64, true);
        std::uniform_real_distribution<double> X(s.lower(), s.upper());
        for (int k = 0; k < 1000; ++k) {
            const auto b = eval_basis(s, X(rng), std::min(p, 2));
            ASSERT_EQ(static_cast<int>(b.ders[0].size()), p + 1);
            double s0 = 0.0, s1 = 0.0;
            for (int j = 0; j <= p; ++j) {
                s0 += b.ders[0][j];
                s1 += b.ders[1][j];
            }
            EXPECT_NEAR(s0, 1.0, 1e-12);
            EXPECT_NEAR(s1 * s.length() / s.num_elements(), 0.0, 1e-9);
        }
    }
}

TEST(EvalBasis, DerivativesMatchFiniteDifferences) {
    std::mt19937 rng(3);
    const double h = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        const int p = 2 + trial % 4;
        const auto s = random_space(rng, p, 1 + trial % 6, false);
        std::uniform_real_distribution<double> X(s.lower(), s.upper());
        for (int k = 0; k < 20; ++k) {
            const double x = X(rng);
            // stay away from knots so the stencil sees one polynomial piece
            bool near_knot = false;
            for (double t : s.breakpoints()) near_knot |= std::abs(t - x) < 10 * h;
            if (near_knot) continue;
            for (int i = 0; i < s.dimension(); ++i) {
                const double d1 = (full_value(s, i, x + h, 0) - full_value(s, i, x - h, 0)) / (2 * h);
                const double d2 = (full_value(s, i, x + h, 1) - full_value(s, i, x - h, 1)) / (2 * h);
                const double a1 = full_value(s, i, x, 1), a2 = full_value(s, i, x, 2);
                EXPECT_NEAR(a1, d1, 1e-5 * std::max(1.0, std::abs(a1)));
                EXPECT_NEAR(a2, d2, 1e-5 * std::max(1.0, std::abs(a2)));
            }
        }
    }
}

TEST(SplineSpace, DimensionFormulas) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const int p = 1 + trial % 5;
        const int n_ele = 1 + (trial * 13) % 64;
        const auto mixed = random_space(rng, p, n_ele, true);
        EXPECT_EQ(mixed.dimension(), static_cast<int>(mixed.knots().size()) - p - 1);
        for (int r = 0; r < p; ++r) {
            const auto s = uniform_space(0, 1, p, n_ele, r);
            EXPECT_EQ(s.dimension(), (p + 1) * n_ele - (r + 1) * (n_ele - 1));
            EXPECT_EQ(s.num_elements(), n_ele);
        }
    }
}

TEST(TargetSpace, PlaneTwoElements) {
    const auto t = target_space(SplineSpace1D({0, 0, 0, 0.5, 1, 1, 1}, 2), ElementType::plane);
    EXPECT_EQ(t.degree(), 4);
    EXPECT_EQ(t.dimension(), 9);
    ASSERT_EQ(t.interior_regularity().size(), 1u);
    EXPECT_EQ(t.interior_regularity()[0], 0);
}

TEST(TargetSpace, PlateThreeElements) {
    const auto t = target_space(SplineSpace1D({0, 0, 0, 0, 1.0 / 3, 2.0 / 3, 1, 1, 1, 1}, 3), ElementType::kl_plate);
    EXPECT_EQ(t.degree(), 6);
    EXPECT_EQ(t.dimension(), 19);
    for (int r : t.interior_regularity()) EXPECT_EQ(r, 0);
}

TEST(TargetSpace, SingleElement) {
    const auto t = target_space(SplineSpace1D({0, 0, 0, 1, 1, 1}, 2), ElementType::plane);
    EXPECT_EQ(t.degree(), 4);
    EXPECT_EQ(t.dimension(), 5);
}

TEST(TargetSpace, PlateNeedsC1) {
    EXPECT_THROW(target_space(SplineSpace1D({0, 0, 0, 0.5, 0.5, 1, 1, 1}, 2), ElementType::kl_plate), UnsupportedContinuity);
    EXPECT_THROW(target_space(SplineSpace1D({0, 0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1, 1}, 3), ElementType::kl_plate),
                 UnsupportedContinuity);
    // C1 quadratics: second derivatives jump, the target is discontinuous there
    const auto t = target_space(SplineSpace1D({0, 0, 0, 0.5, 1, 1, 1}, 2), ElementType::kl_plate);
    EXPECT_EQ(t.interior_regularity()[0], -1);
    EXPECT_EQ(t.dimension(), 10);
}

TEST(TargetSpace, PerKnotRegularity) {
    const SplineSpace1D s({0, 0, 0, 0, 0.25, 0.5, 0.5, 0.75, 1, 1, 1, 1}, 3);
    const auto t = target_space(s, ElementType::plane);
    const auto rs = s.interior_regularity();
    const auto rt = t.interior_regularity();
    ASSERT_EQ(rs.size(), rt.size());
    for (std::size_t k = 0; k < rs.size(); ++k) EXPECT_EQ(rt[k], rs[k] - 1);
}

namespace {

// Least-squares fit of sampled g in space t; returns max sample residual.
double projection_residual(const SplineSpace1D& t, const std::function<double(double)>& g) {
    const auto brk = t.breakpoints();
    std::vector<double> xs;
    for (std::size_t e = 0; e + 1 < brk.size(); ++e)
        for (int k = 0; k < 3 * (t.degree() + 1); ++k)
            xs.push_back(brk[e] + (brk[e + 1] - brk[e]) * (k + 0.5) / (3 * (t.degree() + 1)));
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(xs.size(), t.dimension());
    Eigen::VectorXd b(xs.size());
    for (std::size_t r = 0; r < xs.size(); ++r) {
        const auto be = eval_basis(t, xs[r], 0);
        for (int j = 0; j <= t.degree(); ++j) A(r, be.first + j) = be.ders[0][j];
        b[r] = g(xs[r]);
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    return (A * c - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(TargetSpace, ContainsStiffnessProducts) {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 6; ++trial) {
        const int p = 2 + trial % 3;
        const auto s = random_space(rng, p, 4, false);
        for (auto type : {ElementType::plane, ElementType::kl_plate}) {
            const auto t = target_space(s, type);
            const int d = type == ElementType::plane ? 1 : 2;
            for (int i = 0; i < s.dimension(); i += 2)
                for (int j = i; j < s.dimension(); j += 3) {
                    EXPECT_LT(projection_residual(t, [&](double x) { return full_value(s, i, x, 0) * full_value(s, j, x, 0); }),
                              1e-10);
                    EXPECT_LT(projection_residual(t, [&](double x) { return full_value(s, i, x, d) * full_value(s, j, x, d); }),
                              1e-10);
                }
        }
    }
}

TEST(ExactIntegrals, Closed) {
    const auto a = exact_integrals(SplineSpace1D({0, 0, 1, 1}, 1));
    EXPECT_NEAR(a[0], 0.5, 1e-15);
    EXPECT_NEAR(a[1], 0.5, 1e-15);
    const auto b = exact_integrals(SplineSpace1D({0, 0, 0, 0.5, 1, 1, 1}, 2));
    const double ref[] = {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(b[i], ref[i], 1e-15);
}

TEST(ExactIntegrals, AgreeWithPerSpanGauss) {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 40; ++trial) {
        const int p = 1 + trial % 5;
        const auto s = random_space(rng, p, 1 + trial % 9, true);
        const auto g = per_span_gauss(s, p + 1);
        std::vector<double> q(s.dimension(), 0.0);
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto b = eval_basis(s, g.points[k], 0);
            for (int j = 0; j <= p; ++j) q[b.first + j] += g.weights[k] * b.ders[0][j];
        }
        const auto ex = exact_integrals(s);
        double sum = 0.0;
        for (int i = 0; i < s.dimension(); ++i) {
            EXPECT_NEAR(ex[i], q[i], 1e-13);
            sum += ex[i];
        }
        EXPECT_NEAR(sum, s.length(), 1e-13);
    }
}

TEST(InsertKnot, DimensionAndSubspace) {
    const SplineSpace1D s({0, 0, 1, 1}, 1);
    EXPECT_EQ(insert_knot(s, 0.5).dimension(), 3);

    std::mt19937 rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int p = 1 + trial % 5;
        const auto a = random_space(rng, p, 3, true);
        std::uniform_real_distribution<double> X(a.lower(), a.upper());
        const auto b = insert_knot(a, X(rng));
        EXPECT_EQ(b.dimension(), a.dimension() + 1);
        double tot = 0.0;
        for (double v : exact_integrals(b)) tot += v;
        EXPECT_NEAR(tot, a.length(), 1e-13);
        for (int i = 0; i < a.dimension(); ++i)
            EXPECT_LT(projection_residual(b, [&](double x) { return full_value(a, i, x, 0); }), 1e-13);
    }
}

TEST(InsertKnot, MultiplicityOverflow) {
    const SplineSpace1D s({0, 0, 0, 0.5, 0.5, 0.5, 1, 1, 1}, 2);
    EXPECT_THROW(insert_knot(s, 0.5), InvalidRefinement);
    EXPECT_THROW(insert_knot(s, 0.0), InvalidRefinement);
}

TEST(Greville, Values) {
    const auto a = greville_abscissae(SplineSpace1D({0, 0, 1, 1}, 1));
    EXPECT_DOUBLE_EQ(a[0], 0.0);
    EXPECT_DOUBLE_EQ(a[1], 1.0);
    const auto b = greville_abscissae(SplineSpace1D({0, 0, 0, 1, 1, 1}, 2));
    EXPECT_NEAR(b[1], 0.5, 1e-15);
    std::mt19937 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = random_space(rng, 1 + trial % 5, 6, true);
        const auto g = greville_abscissae(s);
        for (int i = 0; i < s.dimension(); ++i) {
            EXPECT_GE(g[i], s.knots()[i]);
            EXPECT_LE(g[i], s.knots()[i + s.degree() + 1]);
            if (i) EXPECT_LE(g[i - 1], g[i]);
        }
    }
}

TEST(NurbsCurve, QuarterArcOnCircle) {
    const double w = 1.0 / std::sqrt(2.0);
    const NurbsCurve2D arc(SplineSpace1D({0, 0, 0, 1, 1, 1}, 2), {Vec2{2, 0}, Vec2{2, 2}, Vec2{0, 2}}, {1, w, 1});
    for (int k = 0; k <= 10; ++k) {
        const auto x = arc.point(k / 10.0);
        EXPECT_NEAR(std::hypot(x[0], x[1]), 2.0, 1e-12);
    }
}

TEST(NurbsCurve, DerivativeMatchesDifferences) {
    const double w = 1.0 / std::sqrt(2.0);
    const NurbsCurve2D arc(SplineSpace1D({0, 0, 0, 1, 1, 1}, 2), {Vec2{1, 0}, Vec2{1, 1}, Vec2{0, 1}}, {1, w, 1});
    for (double t : {0.1, 0.4, 0.8}) {
        const auto e = arc.eval(t);
        const auto a = arc.point(t + 1e-6), b = arc.point(t - 1e-6);
        EXPECT_NEAR(e.dx[0], (a[0] - b[0]) / 2e-6, 1e-6);
        EXPECT_NEAR(e.dx[1], (a[1] - b[1]) / 2e-6, 1e-6);
    }
}

TEST(NurbsCurve, RejectsBadWeights) {
    EXPECT_THROW(NurbsCurve2D(SplineSpace1D({0, 0, 1, 1}, 1), {Vec2{0, 0}, Vec2{1, 0}}, {1, 0}), ValidationError);
    EXPECT_THROW(NurbsCurve2D(SplineSpace1D({0, 0, 1, 1}, 1), {Vec2{0, 0}}, {1}), ValidationError);
}

TEST(NurbsSurface, UnitWeightsReduceToTensorBSplines) {
    const auto su = uniform_space(0, 1, 2, 3), sv = uniform_space(0, 2, 3, 2);
    std::vector<Vec3> cps;
    std::vector<double> w;
    for (int j = 0; j < sv.dimension(); ++j)
        for (int i = 0; i < su.dimension(); ++i) {
            cps.push_back({0.1 * i, 0.2 * j + 0.01 * i * j, 0});
            w.push_back(1.0);
        }
    const NurbsSurfacePatch patch(su, sv, cps, w);
    std::mt19937 rng(37);
    std::uniform_real_distribution<double> U(0, 1), V(0, 2);
    for (int k = 0; k < 50; ++k) {
        const double u = U(rng), v = V(rng);
        const auto s = eval_nurbs_surface(patch, u, v, 2);
        const auto bu = eval_basis(su, u, 0), bv = eval_basis(sv, v, 0);
        double sum = 0.0;
        for (std::size_t a = 0; a < s.index.size(); ++a) {
            const int i = s.index[a] % su.dimension(), j = s.index[a] / su.dimension();
            EXPECT_NEAR(s.R[a], bu.ders[0][i - bu.first] * bv.ders[0][j - bv.first], 1e-14);
            sum += s.R[a];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(NurbsSurface, RationalPartitionOfUnity) {
    const auto su = uniform_space(0, 1, 2, 4), sv = uniform_space(0, 1, 2, 4);
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> W(0.3, 2.0), X(0, 1);
    std::vector<Vec3> cps;
    std::vector<double> w;
    for (int j = 0; j < sv.dimension(); ++j)
        for (int i = 0; i < su.dimension(); ++i) {
            cps.push_back({double(i), double(j), 0});
            w.push_back(W(rng));
        }
    const NurbsSurfacePatch patch(su, sv, cps, w);
    for (int k = 0; k < 1000; ++k) {
        const auto s = eval_nurbs_surface(patch, X(rng), X(rng), 1);
        double sum = 0.0, du = 0.0, dv = 0.0;
        for (std::size_t a = 0; a < s.R.size(); ++a) {
            sum += s.R[a];
            du += s.Ru[a];
            dv += s.Rv[a];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        EXPECT_NEAR(du, 0.0, 1e-9);
        EXPECT_NEAR(dv, 0.0, 1e-9);
    }
}

TEST(NurbsSurface, IdentityMapJacobian) {
    const NurbsSurfacePatch patch(SplineSpace1D({0, 0, 1, 1}, 1), SplineSpace1D({0, 0, 1, 1}, 1),
                                  {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{1, 1, 0}}, {1, 1, 1, 1});
    for (double u : {0.0, 0.3, 1.0})
        for (double v : {0.0, 0.7, 1.0}) {
            const auto s = eval_nurbs_surface(patch, u, v, 1);
            EXPECT_NEAR(s.xu[0] * s.xv[1] - s.xu[1] * s.xv[0], 1.0, 1e-15);
            EXPECT_NEAR(s.x[0], u, 1e-15);
            EXPECT_NEAR(s.x[1], v, 1e-15);
        }
}

TEST(NurbsSurface, RationalDerivativesMatchDifferences) {
    const auto su = uniform_space(0, 1, 3, 2), sv = uniform_space(0, 1, 2, 3);
    std::mt19937 rng(43);
    std::uniform_real_distribution<double> W(0.5, 1.5);
    std::vector<Vec3> cps;
    std::vector<double> w;
    for (int j = 0; j < sv.dimension(); ++j)
        for (int i = 0; i < su.dimension(); ++i) {
            cps.push_back({double(i) + 0.1 * j * j, double(j) + 0.05 * i, 0});
            w.push_back(W(rng));
        }
    const NurbsSurfacePatch patch(su, sv, cps, w);
    const double h = 1e-5;
    for (auto [u, v] : {std::pair{0.21, 0.17}, std::pair{0.73, 0.58}}) {
        const auto s = eval_nurbs_surface(patch, u, v, 2);
        const auto pu = eval_nurbs_surface(patch, u + h, v, 1), mu = eval_nurbs_surface(patch, u - h, v, 1);
        const auto pv = eval_nurbs_surface(patch, u, v + h, 1), mv = eval_nurbs_surface(patch, u, v - h, 1);
        for (std::size_t a = 0; a < s.R.size(); ++a) {
            EXPECT_NEAR(s.Ru[a], (pu.R[a] - mu.R[a]) / (2 * h), 1e-6);
            EXPECT_NEAR(s.Rv[a], (pv.R[a] - mv.R[a]) / (2 * h), 1e-6);
            EXPECT_NEAR(s.Ruu[a], (pu.Ru[a] - mu.Ru[a]) / (2 * h), 1e-5);
            EXPECT_NEAR(s.Ruv[a], (pv.Ru[a] - mv.Ru[a]) / (2 * h), 1e-5);
            EXPECT_NEAR(s.Rvv[a], (pv.Rv[a] - mv.Rv[a]) / (2 * h), 1e-5);
        }
    }
}

TEST(RefinePatch, PreservesGeometry) {
    const double w = 1.0 / std::sqrt(2.0);
    // quarter annulus, rational in u
    const SplineSpace1D su({0, 0, 0, 1, 1, 1}, 2), sv({0, 0, 1, 1}, 1);
    const NurbsSurfacePatch patch(su, sv,
                                  {Vec3{1, 0, 0}, Vec3{1, 1, 0}, Vec3{0, 1, 0}, Vec3{2, 0, 0}, Vec3{2, 2, 0}, Vec3{0, 2, 0}},
                                  {1, w, 1, 1, w, 1});
    const auto fine = refine_patch(patch, uniform_space(0, 1, 3, 5), uniform_space(0, 1, 3, 4));
    for (int k = 0; k < 30; ++k) {
        const double u = (k * 0.618) - std::floor(k * 0.618), v = (k * 0.414) - std::floor(k * 0.414);
        const auto a = eval_nurbs_surface(patch, u, v, 0), b = eval_nurbs_surface(fine, u, v, 0);
        EXPECT_NEAR(a.x[0], b.x[0], 1e-13);
        EXPECT_NEAR(a.x[1], b.x[1], 1e-13);
    }
}
