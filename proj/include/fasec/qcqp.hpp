#pragma once
#include <algorithm>
#include <cmath>
#include <optional>
#include <Eigen/Cholesky>
#include <fasec/errors.hpp>
#include <fasec/types.hpp>

namespace fasec {

/// 0.5 x^T P x + q^T x + r with P positive semidefinite.
struct ConvexQuadratic
{
    rmat P;
    rvec q;
    double r = 0;

    double value(const rvec& x) const { return 0.5 * x.dot(P * x) + q.dot(x) + r; }
    rvec gradient(const rvec& x) const { return P * x + q; }
};

/*
 * minimize 0.5 x^T H x + f^T x
 * subject to G x <= h and, optionally, one convex quadratic constraint <= 0.
 */
struct QcqpProblem
{
    rmat H;
    rvec f;
    rmat G;
    rvec h;
    std::optional<ConvexQuadratic> quad;
};

struct QcqpOptions
{
    double tol = 1e-11;
    int max_iter = 200;
};

struct QcqpResult
{
    rvec x;
    rvec z; // multipliers, linear rows first, quadratic last
    bool converged = false;
    int iterations = 0;
    double dual_residual = 0;
    double primal_residual = 0;
    double gap = 0;
};

/*
 * Infeasible-start primal-dual interior point with slacks and Mehrotra
 * predictor-corrector. Each iteration solves the reduced system
 *   (H + z_q P + J^T S^{-1} Z J) dx = -r_d - J^T S^{-1} (Z r_p - r_c).
 * Meant for a few dozen variables; everything is dense. A breakdown of the
 * Newton system (typically an empty or interior-less feasible set) ends the
 * loop with converged = false and the last finite iterate.
 */
inline QcqpResult solve_qcqp(const QcqpProblem& pb, const rvec& x0, const QcqpOptions& opts = {})
{
    const auto n = pb.H.rows();
    const auto m_lin = pb.G.rows();
    const auto m = m_lin + (pb.quad ? 1 : 0);
    if (x0.size() != n || pb.f.size() != n || (m_lin > 0 && pb.G.cols() != n) || pb.h.size() != m_lin) {
        throw InvalidArgument("solve_qcqp: inconsistent dimensions");
    }

    auto constraints = [&](const rvec& x) {
        rvec c(m);
        if (m_lin > 0) c.head(m_lin) = pb.G * x - pb.h;
        if (pb.quad) c(m_lin) = pb.quad->value(x);
        return c;
    };
    auto jacobian = [&](const rvec& x) {
        rmat J(m, n);
        if (m_lin > 0) J.topRows(m_lin) = pb.G;
        if (pb.quad) J.row(m_lin) = pb.quad->gradient(x).transpose();
        return J;
    };

    QcqpResult res;
    rvec x = x0;
    rvec s = (-constraints(x)).cwiseMax(1.0);
    rvec z = rvec::Ones(m);
    const double scale = 1.0 + pb.f.lpNorm<Eigen::Infinity>();

    for (int it = 0; it < opts.max_iter; ++it) {
        const rvec c = constraints(x);
        const rmat J = jacobian(x);
        const rvec r_d = pb.H * x + pb.f + J.transpose() * z;
        const rvec r_p = c + s;
        const double mu = m > 0 ? s.dot(z) / m : 0.0;
        res.dual_residual = r_d.lpNorm<Eigen::Infinity>();
        res.primal_residual = m > 0 ? r_p.lpNorm<Eigen::Infinity>() : 0.0;
        res.gap = mu;
        res.iterations = it;
        if (res.dual_residual <= opts.tol * scale && res.primal_residual <= opts.tol && mu <= opts.tol) {
            res.converged = true;
            break;
        }

        rmat K = pb.H + J.transpose() * (z.cwiseQuotient(s).asDiagonal()) * J;
        if (pb.quad) K += z(m_lin) * pb.quad->P;
        K.diagonal().array() += 1e-14 * (1.0 + K.diagonal().cwiseAbs().maxCoeff());
        const Eigen::LDLT<rmat> ldlt(K);
        if (ldlt.info() != Eigen::Success || !K.allFinite()) break; // reported as not converged

        auto direction = [&](const rvec& r_c, rvec& dx, rvec& ds, rvec& dz) {
            const rvec rhs = -r_d - J.transpose() * (z.cwiseProduct(r_p) - r_c).cwiseQuotient(s);
            dx = ldlt.solve(rhs);
            ds = -r_p - J * dx;
            dz = (-r_c - z.cwiseProduct(ds)).cwiseQuotient(s);
        };
        auto max_step = [](const rvec& v, const rvec& dv) {
            double a = 1.0;
            for (Eigen::Index i = 0; i < v.size(); ++i)
                if (dv(i) < 0) a = std::min(a, -v(i) / dv(i));
            return a;
        };

        rvec dx, ds, dz;
        direction(s.cwiseProduct(z), dx, ds, dz);
        const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
        const double mu_aff = m > 0 ? (s + a_aff * ds).dot(z + a_aff * dz) / m : 0.0;
        const double sigma = mu > 0 ? std::pow(mu_aff / mu, 3) : 0.0;
        // Do not let complementarity run far ahead of the residuals: once s
        // and z underflow together the remaining infeasibility cannot be fixed.
        const double infeas = std::max(res.dual_residual / scale, res.primal_residual);
        const double target = std::max(sigma * mu, 0.1 * std::min(mu, infeas));
        const rvec r_c = s.cwiseProduct(z) + ds.cwiseProduct(dz) - rvec::Constant(m, target);
        direction(r_c, dx, ds, dz);

        const double alpha = std::min(1.0, 0.995 * std::min(max_step(s, ds), max_step(z, dz)));
        if (!dx.allFinite() || !ds.allFinite() || !dz.allFinite()) break;
        x += alpha * dx;
        s += alpha * ds;
        z += alpha * dz;
    }
    res.x = x;
    res.z = z;
    return res;
}

} // namespace fasec
