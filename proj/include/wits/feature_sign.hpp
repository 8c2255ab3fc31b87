#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace wits {

struct FeatureSignResult {
    int iterations = 0;
    bool converged = false;
};

/// Feature-sign search for
///
///     min_x  x'Ax - 2 b'x + gamma * |x|_1,      A symmetric PSD.
///
/// Warm-started from the incoming `x`. Each step guesses the signs of the
/// active coefficients, solves the resulting unconstrained quadratic, and
/// runs a discrete line search over the zero crossings between the current
/// point and that solution. The objective never increases.
inline FeatureSignResult feature_sign_search(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                                             double gamma, Eigen::VectorXd& x, int max_iter = 0) {
    using Eigen::Index;
    const Index n = b.size();
    if (max_iter <= 0) max_iter = static_cast<int>(20 * n + 50);

    const double scale = std::max({1.0, gamma, b.cwiseAbs().maxCoeff()});
    const double tol = 1e-11 * scale;

    // f(v) - f(x) in a form that stays accurate for small steps.
    auto decrease = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& from) {
        const Eigen::VectorXd step = v - from;
        return step.dot(A * (v + from) - 2.0 * b) + gamma * (v.lpNorm<1>() - from.lpNorm<1>());
    };
    auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

    FeatureSignResult res;
    Eigen::VectorXd theta = x.unaryExpr(sgn);
    std::vector<Index> active;

    for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
        const Eigen::VectorXd grad = 2.0 * (A * x - b);

        bool nonzero_optimal = true;
        for (Index j = 0; j < n; ++j)
            if (x(j) != 0.0 && std::abs(grad(j) + gamma * theta(j)) > tol) nonzero_optimal = false;

        if (nonzero_optimal) {
            Index pick = -1;
            double best = gamma + tol;
            for (Index j = 0; j < n; ++j) {
                if (x(j) == 0.0 && std::abs(grad(j)) > best) {
                    best = std::abs(grad(j));
                    pick = j;
                }
            }
            if (pick < 0) {
                res.converged = true;
                return res;
            }
            theta(pick) = grad(pick) > 0.0 ? -1.0 : 1.0;
        }

        active.clear();
        for (Index j = 0; j < n; ++j)
            if (theta(j) != 0.0) active.push_back(j);
        const auto na = static_cast<Index>(active.size());

        Eigen::MatrixXd Aa(na, na);
        Eigen::VectorXd rhs(na), xa(na);
        for (Index p = 0; p < na; ++p) {
            rhs(p) = b(active[p]) - 0.5 * gamma * theta(active[p]);
            xa(p) = x(active[p]);
            for (Index q = 0; q < na; ++q) Aa(p, q) = A(active[p], active[q]);
        }
        Eigen::VectorXd target;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(Aa);
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) target = ldlt.solve(rhs);
        if (target.size() != na || !target.allFinite())
            target = Aa.completeOrthogonalDecomposition().solve(rhs);

        // Candidates: the quadratic's minimizer and every zero crossing on the
        // way there. Without a crossing the minimizer is taken as is: the
        // objective is a convex quadratic along the segment, minimal at its end.
        bool crosses = false;
        for (Index p = 0; p < na; ++p)
            if (sgn(target(p)) != theta(active[p])) crosses = true;
        Eigen::VectorXd best_x = x;
        double best_f = 0.0;
        bool moved = false;
        Eigen::VectorXd cand = x;
        auto consider = [&](double t, Index zero_at) {
            for (Index p = 0; p < na; ++p) cand(active[p]) = xa(p) + t * (target(p) - xa(p));
            if (zero_at >= 0) cand(active[zero_at]) = 0.0;
            const double f = decrease(cand, x);
            if (f < best_f || (!crosses && zero_at < 0)) {
                best_f = std::min(f, 0.0);
                best_x = cand;
                moved = true;
            }
        };
        consider(1.0, -1);
        for (Index p = 0; p < na; ++p) {
            const double from = xa(p), to = target(p);
            if (from != 0.0 && sgn(from) != sgn(to)) consider(from / (from - to), p);
        }

        if (!moved || best_x == x) {
            // No progress from this sign guess; drop the guessed coefficient.
            bool changed = false;
            for (Index j = 0; j < n; ++j) {
                if (x(j) == 0.0 && theta(j) != 0.0) {
                    theta(j) = 0.0;
                    changed = true;
                }
            }
            if (!changed || nonzero_optimal) return res;
            continue;
        }
        x = best_x;
        theta = x.unaryExpr(sgn);
    }
    return res;
}

}  // namespace wits
