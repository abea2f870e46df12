#pragma once

// Gauss-Legendre and patch-wise (generalized Gaussian) rules in 1D, their
// tensor products over a patch, per-element bucketing and the a-priori point
// count predictors used to decide whether the patch-wise rule pays off.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "trimquad/error.hpp"
#include "trimquad/spline.hpp"

namespace trimquad {

/// Points and weights over a parametric interval.
struct QuadRule1D {
    std::vector<double> points;
    std::vector<double> weights;
    double lower = -1.0;
    double upper = 1.0;
    /// Space the rule was generated for (empty knots for plain Gauss rules).
    int degree = -1;
    std::vector<double> knots;

    std::size_t size() const { return points.size(); }

    double weight_sum() const {
        double s = 0.0;
        for (double w : weights) s += w;
        return s;
    }
};

/// Classical Gauss-Legendre nodes and weights on [-1, 1].
inline QuadRule1D gauss_legendre(int count) {
    if (count < 1) throw ValidationError("Gauss-Legendre rule needs at least one point");
    QuadRule1D rule;
    rule.points.resize(count);
    rule.weights.resize(count);
    const int half = (count + 1) / 2;
    for (int i = 0; i < half; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= count; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (count == 1) p0 = 1.0;
            dp = count * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // recompute derivative at the converged node
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= count; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = count * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.points[i] = -x;
        rule.points[count - 1 - i] = x;
        rule.weights[i] = w;
        rule.weights[count - 1 - i] = w;
    }
    if (count % 2 == 1) rule.points[count / 2] = 0.0;
    return rule;
}

/// Gauss-Legendre rule affinely mapped onto [a, b].
inline QuadRule1D gauss_legendre(int count, double a, double b) {
    QuadRule1D rule = gauss_legendre(count);
    const double h = 0.5 * (b - a);
    for (std::size_t i = 0; i < rule.size(); ++i) {
        rule.points[i] = a + h * (rule.points[i] + 1.0);
        rule.weights[i] *= h;
    }
    rule.lower = a;
    rule.upper = b;
    return rule;
}

/// Element-wise Gauss rule with `count` points per non-zero knot span.
inline QuadRule1D per_span_gauss(const SplineSpace1D& space, int count) {
    QuadRule1D rule;
    const auto& brk = space.breakpoints();
    for (std::size_t e = 0; e + 1 < brk.size(); ++e) {
        const auto g = gauss_legendre(count, brk[e], brk[e + 1]);
        rule.points.insert(rule.points.end(), g.points.begin(), g.points.end());
        rule.weights.insert(rule.weights.end(), g.weights.begin(), g.weights.end());
    }
    rule.lower = space.lower();
    rule.upper = space.upper();
    rule.degree = space.degree();
    rule.knots = space.knots();
    return rule;
}

/// Minimum number of points integrating an n-dimensional space exactly.
inline int optimal_point_count(int n_basis) { return (n_basis + 1) / 2; }

namespace detail {

/// Exactness system of a spline space for a rule with unknown points and weights.
class ExactnessSystem {
public:
    explicit ExactnessSystem(const SplineSpace1D& space) : space_(space), exact_(exact_integrals(space)) {}

    const SplineSpace1D& space() const { return space_; }
    int dimension() const { return space_.dimension(); }

    Eigen::VectorXd residual(const std::vector<double>& x, const std::vector<double>& w) const {
        Eigen::VectorXd F = -Eigen::Map<const Eigen::VectorXd>(exact_.data(), dimension());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto b = eval_basis(space_, x[i], 0);
            for (int j = 0; j <= space_.degree(); ++j) F[b.first + j] += w[i] * b.ders[0][j];
        }
        return F;
    }

    /// Jacobian with interleaved unknowns (x_0, w_0, x_1, w_1, ...).
    Eigen::SparseMatrix<double> jacobian(const std::vector<double>& x, const std::vector<double>& w) const {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(x.size() * 2 * (space_.degree() + 1));
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto b = eval_basis(space_, x[i], 1);
            for (int j = 0; j <= space_.degree(); ++j) {
                const int row = b.first + j;
                trip.emplace_back(row, static_cast<int>(2 * i), w[i] * b.ders[1][j]);
                trip.emplace_back(row, static_cast<int>(2 * i + 1), b.ders[0][j]);
            }
        }
        Eigen::SparseMatrix<double> J(dimension(), static_cast<Eigen::Index>(2 * x.size()));
        J.setFromTriplets(trip.begin(), trip.end());
        J.makeCompressed();
        return J;
    }

    bool feasible(const std::vector<double>& x, const std::vector<double>& w) const {
        if (x.empty()) return false;
        if (!(x.front() > space_.lower() && x.back() < space_.upper())) return false;
        for (std::size_t i = 0; i + 1 < x.size(); ++i)
            if (!(x[i + 1] > x[i])) return false;
        for (double v : w)
            if (!(v > 0.0) || !std::isfinite(v)) return false;
        return true;
    }

private:
    const SplineSpace1D& space_;
    std::vector<double> exact_;
};

struct SolveResult {
    bool converged = false;
    double residual = 0.0;
    int iterations = 0;
};

inline void apply_step(const Eigen::VectorXd& step, double lambda, const std::vector<double>& x,
                       const std::vector<double>& w, std::vector<double>& xn, std::vector<double>& wn) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        xn[i] = x[i] + lambda * step[static_cast<Eigen::Index>(2 * i)];
        wn[i] = w[i] + lambda * step[static_cast<Eigen::Index>(2 * i + 1)];
    }
}

/// Newton iteration on the square exactness system. Steps are halved (at most 30 times)
/// until the iterate stays feasible and the residual norm decreases. Where the residual
/// stagnates through round-off (points sitting on low-continuity knots) an iterate within
/// stall_factor of the tolerance is accepted.
inline constexpr double stall_factor = 100.0;

inline SolveResult newton_solve(const ExactnessSystem& sys, std::vector<double>& x, std::vector<double>& w,
                                int max_iterations = 100) {
    const double tol = 1e-14 * sys.space().length();
    SolveResult res;
    Eigen::VectorXd F = sys.residual(x, w);
    double fnorm = F.norm();
    std::vector<double> xn(x.size()), wn(w.size());
    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it;
        res.residual = F.lpNorm<Eigen::Infinity>();
        if (res.residual < tol) {
            res.converged = true;
            return res;
        }
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(sys.jacobian(x, w));
        if (lu.info() != Eigen::Success) return res;
        const Eigen::VectorXd step = lu.solve(-F);
        if (lu.info() != Eigen::Success || !step.allFinite()) return res;
        double lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h <= 30; ++h, lambda *= 0.5) {
            apply_step(step, lambda, x, w, xn, wn);
            if (!sys.feasible(xn, wn)) continue;
            const Eigen::VectorXd Fn = sys.residual(xn, wn);
            const double fn = Fn.norm();
            if (fn <= (1.0 - 1e-4 * lambda) * fnorm || Fn.lpNorm<Eigen::Infinity>() < tol) {
                x.swap(xn);
                w.swap(wn);
                F = Fn;
                fnorm = fn;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.converged = res.residual < stall_factor * tol;
            return res;
        }
    }
    res.residual = F.lpNorm<Eigen::Infinity>();
    res.converged = res.residual < tol;
    return res;
}

/// Levenberg-Marquardt on the same system; slower but with a wider basin of attraction.
inline SolveResult levenberg_marquardt(const ExactnessSystem& sys, std::vector<double>& x, std::vector<double>& w,
                                       int max_iterations = 400) {
    const double tol = 1e-14 * sys.space().length();
    SolveResult res;
    Eigen::VectorXd F = sys.residual(x, w);
    double f2 = F.squaredNorm();
    double mu = 1e-3;
    std::vector<double> xn(x.size()), wn(w.size());
    for (int it = 0; it < max_iterations; ++it) {
        res.iterations = it;
        res.residual = F.lpNorm<Eigen::Infinity>();
        if (res.residual < tol) {
            res.converged = true;
            return res;
        }
        const Eigen::SparseMatrix<double> J = sys.jacobian(x, w);
        const Eigen::SparseMatrix<double> JtJ = (J.transpose() * J).pruned();
        const Eigen::VectorXd g = J.transpose() * F;
        bool accepted = false;
        for (int tries = 0; tries < 60; ++tries) {
            Eigen::VectorXd step;
            if (mu > 0.0) {
                Eigen::SparseMatrix<double> A = JtJ;
                for (int k = 0; k < A.rows(); ++k) A.coeffRef(k, k) += mu * (JtJ.coeff(k, k) + 1e-300);
                Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
                if (ldlt.info() != Eigen::Success) {
                    mu = std::max(mu * 10.0, 1e-8);
                    continue;
                }
                step = ldlt.solve(-g);
            } else {
                Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
                if (lu.info() != Eigen::Success) {
                    mu = 1e-8;
                    continue;
                }
                step = lu.solve(-F);
            }
            if (step.allFinite()) {
                apply_step(step, 1.0, x, w, xn, wn);
                if (sys.feasible(xn, wn)) {
                    const Eigen::VectorXd Fn = sys.residual(xn, wn);
                    if (Fn.squaredNorm() < f2) {
                        x.swap(xn);
                        w.swap(wn);
                        F = Fn;
                        f2 = F.squaredNorm();
                        accepted = true;
                        break;
                    }
                }
            }
            mu = std::max(mu * 10.0, 1e-10);
        }
        if (!accepted) return res;
        mu = mu > 1e-12 ? mu / 10.0 : 0.0;
    }
    res.residual = F.lpNorm<Eigen::Infinity>();
    res.converged = res.residual < tol;
    return res;
}

/// Initial points at the quantiles of the basis density sum_j N_j / (2 int N_j),
/// which integrates to half the dimension; weights from the linear least-squares fit.
inline void density_initial_guess(const SplineSpace1D& space, std::vector<double>& x, std::vector<double>& w) {
    const int m = space.dimension() / 2;
    const auto I = exact_integrals(space);
    const auto& brk = space.breakpoints();
    const int sub = 8;
    const auto g = gauss_legendre(space.degree() / 2 + 2);
    std::vector<double> xs{brk.front()}, Fs{0.0};
    for (std::size_t e = 0; e + 1 < brk.size(); ++e) {
        for (int s = 0; s < sub; ++s) {
            const double a = brk[e] + (brk[e + 1] - brk[e]) * s / sub;
            const double b = brk[e] + (brk[e + 1] - brk[e]) * (s + 1) / sub;
            double acc = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) {
                const double xi = 0.5 * (a + b) + 0.5 * (b - a) * g.points[k];
                const auto bv = eval_basis(space, xi, 0);
                double rho = 0.0;
                for (int j = 0; j <= space.degree(); ++j) rho += bv.ders[0][j] / I[bv.first + j];
                acc += 0.5 * (b - a) * g.weights[k] * 0.5 * rho;
            }
            xs.push_back(b);
            Fs.push_back(Fs.back() + acc);
        }
    }
    x.resize(m);
    std::size_t k = 0;
    for (int i = 0; i < m; ++i) {
        const double target = (i + 0.5) * Fs.back() / m;
        while (k + 2 < Fs.size() && Fs[k + 1] < target) ++k;
        const double t = (target - Fs[k]) / (Fs[k + 1] - Fs[k]);
        x[i] = xs[k] + t * (xs[k + 1] - xs[k]);
    }
    // least-squares weights: (N^T N) w = N^T I
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < m; ++i) {
        const auto bv = eval_basis(space, x[i], 0);
        for (int j = 0; j <= space.degree(); ++j) trip.emplace_back(bv.first + j, i, bv.ders[0][j]);
    }
    Eigen::SparseMatrix<double> N(space.dimension(), m);
    N.setFromTriplets(trip.begin(), trip.end());
    const Eigen::SparseMatrix<double> NtN = N.transpose() * N;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(NtN);
    const Eigen::VectorXd rhs = N.transpose() * Eigen::Map<const Eigen::VectorXd>(I.data(), space.dimension());
    const Eigen::VectorXd sol = ldlt.solve(rhs);
    w.assign(m, 0.0);
    bool positive = ldlt.info() == Eigen::Success;
    for (int i = 0; i < m && positive; ++i) {
        w[i] = sol[i];
        positive = w[i] > 0.0 && std::isfinite(w[i]);
    }
    if (!positive) {
        for (int i = 0; i < m; ++i) {
            const double left = i == 0 ? space.lower() : 0.5 * (x[i - 1] + x[i]);
            const double right = i + 1 == m ? space.upper() : 0.5 * (x[i] + x[i + 1]);
            w[i] = right - left;
        }
    }
}

/// Add midpoint knots (widest span first, ties broken towards the domain centre) until
/// the dimension is even. Exactness on the result implies exactness on the input.
inline SplineSpace1D make_even(SplineSpace1D space) {
    while (space.dimension() % 2 != 0) {
        const auto& brk = space.breakpoints();
        const double centre = 0.5 * (space.lower() + space.upper());
        std::size_t best = 0;
        double best_width = -1.0, best_dist = 0.0;
        for (std::size_t e = 0; e + 1 < brk.size(); ++e) {
            const double width = brk[e + 1] - brk[e];
            const double dist = std::abs(0.5 * (brk[e] + brk[e + 1]) - centre);
            const double tie = 1e-12 * space.length();
            if (width > best_width + tie || (std::abs(width - best_width) <= tie && dist < best_dist)) {
                best = e;
                best_width = width;
                best_dist = dist;
            }
        }
        space = insert_knot(space, 0.5 * (brk[best] + brk[best + 1]));
    }
    return space;
}

inline SplineSpace1D with_breakpoints(const SplineSpace1D& space, const std::vector<double>& brk) {
    const auto mult = space.knot_vector().multiplicities();
    std::vector<double> U;
    for (std::size_t i = 0; i < brk.size(); ++i) U.insert(U.end(), mult[i], brk[i]);
    return SplineSpace1D(std::move(U), space.degree());
}

/// Continuation in the knot positions: solve for uniformly spaced breakpoints with the
/// same multiplicities, then move the breakpoints to their true positions in adaptive steps.
inline SolveResult knot_position_continuation(const SplineSpace1D& space, std::vector<double>& x,
                                              std::vector<double>& w) {
    const auto brk = space.breakpoints();
    std::vector<double> uni(brk.size());
    for (std::size_t i = 0; i < brk.size(); ++i)
        uni[i] = brk.front() + (brk.back() - brk.front()) * static_cast<double>(i) / (brk.size() - 1);

    SolveResult res;
    {
        const SplineSpace1D start = with_breakpoints(space, uni);
        const ExactnessSystem sys(start);
        density_initial_guess(start, x, w);
        const auto x0 = x, w0 = w;
        res = newton_solve(sys, x, w);
        if (!res.converged) {
            x = x0;
            w = w0;
            res = levenberg_marquardt(sys, x, w);
        }
        if (!res.converged) return res;
    }
    double s = 0.0, ds = 0.25, s_prev = 0.0;
    std::vector<double> x_prev = x, w_prev = w;
    std::vector<double> b(brk.size());
    for (int steps = 0; s < 1.0; ++steps) {
        if (steps == 400) {
            res.converged = false;
            return res;
        }
        const double sn = std::min(1.0, s + ds);
        for (std::size_t i = 0; i < brk.size(); ++i) b[i] = (1.0 - sn) * uni[i] + sn * brk[i];
        b.front() = brk.front();
        b.back() = brk.back();
        const SplineSpace1D step_space = with_breakpoints(space, b);
        const ExactnessSystem sys(step_space);
        // secant predictor along the solution path
        auto xs = x, ws = w;
        if (s > s_prev) {
            const double f = (sn - s) / (s - s_prev);
            for (std::size_t i = 0; i < x.size(); ++i) {
                xs[i] = x[i] + f * (x[i] - x_prev[i]);
                ws[i] = w[i] + f * (w[i] - w_prev[i]);
            }
            if (!sys.feasible(xs, ws)) {
                xs = x;
                ws = w;
            }
        }
        const auto r = newton_solve(sys, xs, ws, 40);
        if (r.converged) {
            x_prev.swap(x);
            w_prev.swap(w);
            x.swap(xs);
            w.swap(ws);
            s_prev = s;
            s = sn;
            ds = std::min(2.0 * ds, 1.0);
            res = r;
        } else {
            res.residual = r.residual;
            ds *= 0.5;
            if (ds < 1e-7) {
                res.converged = false;
                return res;
            }
        }
    }
    return res;
}

/// Pieces of a space between knots of full multiplicity (regularity -1), where it decouples.
inline std::vector<SplineSpace1D> continuous_pieces(const SplineSpace1D& space) {
    const int q = space.degree();
    const auto brk = space.breakpoints();
    const auto mult = space.knot_vector().multiplicities();
    std::vector<SplineSpace1D> out;
    std::vector<double> U(q + 1, brk.front());
    for (std::size_t i = 1; i < brk.size(); ++i) {
        if (i + 1 < brk.size() && mult[i] <= q) {
            U.insert(U.end(), mult[i], brk[i]);
            continue;
        }
        U.insert(U.end(), q + 1, brk[i]);
        out.emplace_back(U, q);
        U.assign(q + 1, brk[i]);
    }
    return out;
}

/// Point count of the patch-wise rule: ceil(n_k / 2) summed over the continuous pieces.
inline int patchwise_point_count(const SplineSpace1D& target) {
    int n = 0;
    for (const auto& piece : continuous_pieces(target)) n += optimal_point_count(piece.dimension());
    return n;
}

}  // namespace detail

/// Patch-wise rule integrating every basis function of `target` exactly, with ceil(n/2) points
/// when the target is continuous. A target with discontinuous knots is solved piece by piece.
inline QuadRule1D solve_patchwise_1d(const SplineSpace1D& target) {
    if (target.dimension() < 1) throw ValidationError("target space must be non-empty");
    const auto pieces = detail::continuous_pieces(target);
    if (pieces.size() > 1) {
        QuadRule1D rule;
        for (const auto& piece : pieces) {
            const auto r = solve_patchwise_1d(piece);
            rule.points.insert(rule.points.end(), r.points.begin(), r.points.end());
            rule.weights.insert(rule.weights.end(), r.weights.begin(), r.weights.end());
        }
        rule.lower = target.lower();
        rule.upper = target.upper();
        rule.degree = target.degree();
        rule.knots = target.knots();
        return rule;
    }
    const SplineSpace1D even = detail::make_even(target);
    const detail::ExactnessSystem sys(even);

    std::vector<double> x, w;
    detail::density_initial_guess(even, x, w);
    auto res = detail::newton_solve(sys, x, w);
    if (!res.converged) {
        res = detail::knot_position_continuation(even, x, w);
        if (!res.converged) {
            throw NonConvergence("patch-wise rule did not converge for degree " + std::to_string(target.degree()) +
                                     " with " + std::to_string(target.dimension()) + " functions",
                                 res.residual);
        }
    }
    QuadRule1D rule;
    rule.points = std::move(x);
    rule.weights = std::move(w);
    rule.lower = target.lower();
    rule.upper = target.upper();
    rule.degree = target.degree();
    rule.knots = target.knots();
    return rule;
}

// ---------------------------------------------------------------------------
// 2D rules

/// One point of a 2D rule over the patch parameter domain.
struct QuadPoint2D {
    double u = 0.0;
    double v = 0.0;
    double weight = 0.0;
};

/// Tensor mesh of a patch: element breakpoints per direction.
struct ElementMesh {
    std::vector<double> u_breaks;
    std::vector<double> v_breaks;

    ElementMesh() = default;
    ElementMesh(std::vector<double> u, std::vector<double> v) : u_breaks(std::move(u)), v_breaks(std::move(v)) {}
    ElementMesh(const SplineSpace1D& su, const SplineSpace1D& sv) : u_breaks(su.breakpoints()), v_breaks(sv.breakpoints()) {}

    int nu() const { return static_cast<int>(u_breaks.size()) - 1; }
    int nv() const { return static_cast<int>(v_breaks.size()) - 1; }
    int size() const { return nu() * nv(); }
    int index(int eu, int ev) const { return eu + ev * nu(); }
    int eu(int e) const { return e % nu(); }
    int ev(int e) const { return e / nu(); }
    double area(int e) const {
        return (u_breaks[eu(e) + 1] - u_breaks[eu(e)]) * (v_breaks[ev(e) + 1] - v_breaks[ev(e)]);
    }
};

struct QuadRule2D {
    std::vector<QuadPoint2D> points;
    /// buckets[e]: indices into points lying in element e.
    std::vector<std::vector<int>> buckets;

    double weight_sum() const {
        double s = 0.0;
        for (const auto& q : points) s += q.weight;
        return s;
    }
};

namespace detail {

/// Interval index for a coordinate; a point on a breakpoint goes to the lower interval.
inline int bucket_index(const std::vector<double>& brk, double x) {
    const double tol = 1e-12 * (brk.back() - brk.front());
    const int n = static_cast<int>(brk.size()) - 1;
    auto it = std::lower_bound(brk.begin(), brk.end(), x - tol);
    int e = static_cast<int>(it - brk.begin()) - 1;
    return std::clamp(e, 0, n - 1);
}

}  // namespace detail

/// Assign every point to exactly one element.
inline std::vector<std::vector<int>> bucket_points(const std::vector<QuadPoint2D>& points, const ElementMesh& mesh) {
    std::vector<std::vector<int>> buckets(mesh.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        const int eu = detail::bucket_index(mesh.u_breaks, points[k].u);
        const int ev = detail::bucket_index(mesh.v_breaks, points[k].v);
        buckets[mesh.index(eu, ev)].push_back(static_cast<int>(k));
    }
    return buckets;
}

inline QuadRule2D tensor_rule(const QuadRule1D& rule_u, const QuadRule1D& rule_v, const ElementMesh& mesh) {
    QuadRule2D rule;
    rule.points.reserve(rule_u.size() * rule_v.size());
    for (std::size_t j = 0; j < rule_v.size(); ++j)
        for (std::size_t i = 0; i < rule_u.size(); ++i)
            rule.points.push_back({rule_u.points[i], rule_v.points[j], rule_u.weights[i] * rule_v.weights[j]});
    rule.buckets = bucket_points(rule.points, mesh);
    return rule;
}

// ---------------------------------------------------------------------------
// Point count predictors

/// Element counts per integration group.
struct GroupCounts {
    int pw = 0;   ///< patch-wise
    int tra = 0;  ///< transition
    int t = 0;    ///< trimmed
    int ia = 0;   ///< inactive

    int total() const { return pw + tra + t + ia; }
    int active() const { return pw + tra + t; }
};

struct CountReport {
    long long n_gauss_total = 0;
    long long n_gauss_active = 0;
    double n_pw_trimm = 0.0;  ///< predicted
    long long n_actual = 0;
    GroupCounts groups;
    double ratio = 0.0;  ///< n_actual / n_gauss_active
    bool use_rule = false;
    double c = 0.0;
};

/// Constant c of the transition/patch-wise element ratio criterion.
inline double efficiency_constant(int p, int q, ElementType type) {
    const int s = type == ElementType::plane ? 2 : 3;
    const double pw = static_cast<double>((p + s) * (q + s));
    return (4.0 * (p + 1) * (q + 1) - pw) / pw;
}

/// A-priori counts: Gauss baseline over active elements and the mixed-integration estimate.
inline CountReport predict_counts(int p, int q, ElementType type, const GroupCounts& groups,
                                  long long n_actual = 0) {
    CountReport r;
    r.groups = groups;
    const long long gauss = static_cast<long long>(p + 1) * (q + 1);
    r.n_gauss_total = gauss * groups.total();
    r.n_gauss_active = gauss * groups.active();
    const int s = type == ElementType::plane ? 2 : 3;
    r.n_pw_trimm = static_cast<double>(gauss) * (groups.t + groups.tra) +
                   static_cast<double>((p + s) * (q + s)) / 4.0 * (groups.pw + groups.tra);
    r.use_rule = r.n_pw_trimm < static_cast<double>(r.n_gauss_active);
    r.c = efficiency_constant(p, q, type);
    r.n_actual = n_actual;
    r.ratio = r.n_gauss_active > 0 ? static_cast<double>(n_actual) / static_cast<double>(r.n_gauss_active) : 0.0;
    return r;
}

/// Points per element and direction that a max-regularity patch-wise rule approaches.
inline double asymptotic_points_per_element(int p, ElementType type) {
    return type == ElementType::plane ? 0.5 * (p + 2) : 0.5 * (p + 3);
}

/// Limit of n_pw / n_gauss on an untrimmed patch under uniform refinement.
inline double theoretical_ratio_limit(int p, ElementType type) {
    const double r = asymptotic_points_per_element(p, type) / (p + 1);
    return r * r;
}

}  // namespace trimquad
