#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <fasec/surrogate.hpp>

namespace fasec {

// =======================================================================
// Projections
// =======================================================================

/// Euclidean projection onto sum_k |w_k|^2 <= P_max (uniform rescaling).
inline BeamformerSet project_power(const BeamformerSet& w, double power_budget)
{
    const double p = w.total_power();
    if (p <= power_budget) return w;
    return BeamformerSet(std::sqrt(power_budget / p) * w.w);
}

/*
 * Euclidean projection onto {w : sum_k |a^H w_k|^2 >= P_d}. When violated the
 * nearest point is (I - mu a a^H)^{-1} w_k with
 * mu = (1 - sqrt(P(w) / P_d)) / |a|^2, applied through the rank-1 inverse
 * w_k + mu / (1 - mu |a|^2) a (a^H w_k). It scales the component of every
 * stream along a by sqrt(P_d / P(w)).
 */
inline BeamformerSet project_probing(const BeamformerSet& w, const cvec& steering, double threshold)
{
    const double pw = probing_power(steering, w);
    if (pw >= threshold) return w;
    if (!(pw > 0)) {
        throw DegenerateProjection("project_probing: zero probing power, projection direction undefined");
    }
    // mu / (1 - mu |a|^2) simplifies to (sqrt(P_d / P(w)) - 1) / |a|^2, which
    // avoids the cancellation in 1 - mu |a|^2 when P(w) << P_d.
    const double factor = (std::sqrt(threshold / pw) - 1.0) / steering.squaredNorm();
    const Eigen::RowVectorXcd aw = steering.adjoint() * w.w;
    return BeamformerSet(w.w + factor * steering * aw);
}

inline BeamformerSet project_probing(const BeamformerSet& w, const Eigen::Ref<const rvec>& d, double angle,
                                     double wavelength, double threshold)
{
    return project_probing(w, steering_vector(d, angle, wavelength), threshold);
}

/// project_probing with the degenerate case repaired by nudging w_1 along a.
inline BeamformerSet project_probing_or_perturb(const BeamformerSet& w, const cvec& steering, double threshold,
                                                double power_budget)
{
    if (threshold <= 0 || probing_power(steering, w) > 0) return project_probing(w, steering, threshold);
    BeamformerSet nudged = w;
    nudged.w.col(0) += (1e-9 * std::sqrt(power_budget) / steering.norm()) * steering;
    return project_probing(nudged, steering, threshold);
}

inline double power_violation(const BeamformerSet& w, double power_budget)
{
    return std::max(0.0, w.total_power() - power_budget);
}

inline double probing_violation(const BeamformerSet& w, const cvec& steering, double threshold)
{
    return std::max(0.0, threshold - probing_power(steering, w));
}

/*
 * Map w into C_BS ∩ C_d. Tries project_power(project_probing(w)) first; when
 * the rescaling pushes the probing power back under P_d, the components
 * orthogonal to a are shrunk instead, keeping the along-a energy at
 * max(P_d / |a|^2, current) capped by P_max.
 */
inline BeamformerSet restore_feasibility(const BeamformerSet& w, const cvec& steering, double power_budget,
                                         double threshold)
{
    const double a2 = steering.squaredNorm();
    if (threshold > a2 * power_budget * (1 + 1e-12)) {
        throw InfeasibleScenario("restore_feasibility: probing threshold exceeds |a|^2 * P_max");
    }
    if (w.total_power() <= power_budget && probing_power(steering, w) >= threshold) return w;

    BeamformerSet first = project_power(project_probing_or_perturb(w, steering, threshold, power_budget),
                                        power_budget);
    if (probing_power(steering, first) >= threshold) return first;

    BeamformerSet src = w;
    if (!(probing_power(steering, src) > 0)) {
        src.w.col(0) += (1e-9 * std::sqrt(power_budget) / std::sqrt(a2)) * steering;
    }
    const cvec unit = steering / std::sqrt(a2);
    const Eigen::RowVectorXcd coef = unit.adjoint() * src.w;
    const cmat parallel = unit * coef;
    const cmat perp = src.w - parallel;
    const double e_par = coef.squaredNorm();
    const double e_perp = perp.squaredNorm();
    const double target_par = std::min(std::max(e_par, threshold / a2), power_budget);
    const double target_perp = std::min(e_perp, std::max(0.0, power_budget - target_par));
    cmat out = std::sqrt(target_par / e_par) * parallel;
    if (e_perp > 0) out += std::sqrt(target_perp / e_perp) * perp;
    return BeamformerSet(std::move(out));
}

// =======================================================================
// Proximal distance update
// =======================================================================

/// Surrogate (w, d)-dependent part plus mu * (dist^2(w, C_BS) + dist^2(w, C_d)).
inline double penalized_objective(const ChannelSet& ch, const BeamformerSet& w, const SurrogateState& st,
                                  const Scenario& s, double mu)
{
    const auto& p = s.params();
    const cvec& a = ch.sensing_steering();
    const double d_bs = (w.w - project_power(w, p.power_budget).w).squaredNorm();
    const double d_d = (w.w - project_probing_or_perturb(w, a, p.probing_threshold, p.power_budget).w).squaredNorm();
    return eval_surrogate(ch, w, st).dependent + mu * (d_bs + d_d);
}

/*
 * One majorize-minimize step: with both distances majorized at the current
 * point, stream k solves
 *   (A + T + E - E_k + 2 mu I) w_k = b_k + g_k + mu ([w_BS]_k + [w_d]_k).
 */
inline BeamformerSet pda_update(const ChannelSet& ch, const SurrogateState& st, const BeamformerSet& w,
                                const Scenario& s, double mu)
{
    if (!(mu > 0)) throw InvalidArgument("pda_update: penalty weight must be positive");
    const auto& p = s.params();
    const cvec& a = ch.sensing_steering();
    const BeamformerSet w_bs = project_power(w, p.power_budget);
    const BeamformerSet w_d = project_probing_or_perturb(w, a, p.probing_threshold, p.power_budget);
    const auto M = w.num_antennas();

    BeamformerSet out = BeamformerSet::zeros(M, w.num_users());
    for (Eigen::Index k = 0; k < w.num_users(); ++k) {
        cmat op = st.stream_operator(k);
        op.diagonal().array() += 2.0 * mu;
        const cvec rhs = st.stream_rhs(k) + mu * (w_bs.w.col(k) + w_d.w.col(k));
        Eigen::LLT<cmat> llt(op);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("pda_update: stream operator is not positive definite");
        }
        out.w.col(k) = llt.solve(rhs);
    }
    if (!out.w.allFinite()) throw NumericalError("pda_update: non-finite beamformer after solve");
    return out;
}

/// Scale used for the penalty schedule: max_k |A + T + E - E_k|_2 + |[b + g]|_F / sqrt(P_max).
inline double penalty_scale(const SurrogateState& st, double power_budget)
{
    double op_norm = 0;
    for (Eigen::Index k = 0; k < st.b.cols(); ++k) {
        Eigen::SelfAdjointEigenSolver<cmat> es(st.stream_operator(k), Eigen::EigenvaluesOnly);
        op_norm = std::max(op_norm, es.eigenvalues().cwiseAbs().maxCoeff());
    }
    const double rhs_norm = (st.b + st.g).norm();
    const double scale = op_norm + rhs_norm / std::sqrt(power_budget);
    return scale > 0 ? scale : 1.0;
}

struct PdaOptions
{
    double mu_init_factor = 1.0;  // initial mu as a multiple of penalty_scale()
    double mu_max_factor = 1e6;
    int mu_double_every = 0;      // 0: double only once the objective stalls at the current mu
    int max_inner = 2000;
    double tol = 1e-8;            // relative change of the penalized objective
    double feasibility_tol = 1e-6;
    double kkt_tol = 1e-9;        // skip the block when w_init is already stationary
    bool momentum = true;         // extrapolate between MM steps, restarting on ascent
};

/*
 * Relative KKT residual of the constrained block problem at a feasible w:
 * min over lambda, nu >= 0 (zero when the constraint is slack) of
 *   |[Q_k w_k - r_k + lambda w_k - nu a a^H w_k]_k| / |[r_k]_k|.
 */
inline double block_kkt_residual(const SurrogateState& st, const BeamformerSet& w, const cvec& steering,
                                 double power_budget, double threshold, double slack_tol = 1e-9)
{
    const auto K = w.num_users();
    const auto M = w.num_antennas();
    cmat grad(M, K);
    for (Eigen::Index k = 0; k < K; ++k) grad.col(k) = st.stream_operator(k) * w.w.col(k) - st.stream_rhs(k);
    const cmat x_pow = w.w;
    const cmat x_probe = -steering * (steering.adjoint() * w.w);
    const bool pow_active = w.total_power() >= power_budget * (1 - slack_tol);
    const bool probe_active = threshold > 0 && probing_power(steering, w) <= threshold * (1 + slack_tol);

    auto re = [](const cmat& a, const cmat& b) { return (a.array().conjugate() * b.array()).real().sum(); };
    const double g11 = re(x_pow, x_pow), g22 = re(x_probe, x_probe), g12 = re(x_pow, x_probe);
    const double c1 = -re(x_pow, grad), c2 = -re(x_probe, grad);
    auto residual = [&](double lam, double nu) { return (grad + lam * x_pow + nu * x_probe).norm(); };

    double best = residual(0, 0);
    if (pow_active && g11 > 0) best = std::min(best, residual(std::max(0.0, c1 / g11), 0));
    if (probe_active && g22 > 0) best = std::min(best, residual(0, std::max(0.0, c2 / g22)));
    const double det = g11 * g22 - g12 * g12;
    if (pow_active && probe_active && det > 1e-14 * g11 * g22) {
        const double lam = (c1 * g22 - c2 * g12) / det;
        const double nu = (c2 * g11 - c1 * g12) / det;
        if (lam >= 0 && nu >= 0) best = std::min(best, residual(lam, nu));
    }
    const double ref = (st.b + st.g).norm();
    return ref > 0 ? best / ref : best;
}

struct BeamformerBlockResult
{
    BeamformerSet w;              // feasible for C_BS and C_d
    std::vector<double> trace;    // penalized objective after every inner iteration
    std::vector<double> mu_trace; // penalty weight used at every inner iteration
    int iterations = 0;
    bool converged = false;          // false means max_inner was hit
    bool improved = false;        // output differs from the repaired w_init
    double surrogate = 0;         // eval_surrogate(...).total() at the output
};

/*
 * Beamformer block of the BSUM loop. Iterates pda_update with a doubling
 * penalty; every iterate is mapped into C_BS ∩ C_d and the best mapped point
 * by surrogate value is returned, so the block never increases the surrogate
 * relative to a feasible w_init.
 */
inline BeamformerBlockResult solve_beamformer_block(const ChannelSet& ch, SurrogateState& st,
                                                    const BeamformerSet& w_init, const Scenario& s,
                                                    const PdaOptions& opts = {})
{
    const auto& p = s.params();
    const cvec& a = ch.sensing_steering();
    const double scale = penalty_scale(st, p.power_budget);
    const double mu_cap = opts.mu_max_factor * scale;
    double mu = std::min(opts.mu_init_factor * scale, mu_cap);

    BeamformerBlockResult res;
    res.w = restore_feasibility(w_init, a, p.power_budget, p.probing_threshold);
    res.surrogate = eval_surrogate(ch, res.w, st).total();

    auto relative_violation = [&](const BeamformerSet& x) {
        const double pv = power_violation(x, p.power_budget) / p.power_budget;
        const double dv = p.probing_threshold > 0 ? probing_violation(x, a, p.probing_threshold) / p.probing_threshold : 0.0;
        return std::max(pv, dv);
    };

    if (res.w.w == w_init.w &&
        block_kkt_residual(st, res.w, a, p.power_budget, p.probing_threshold) <= opts.kkt_tol) {
        res.converged = true;
        st.penalty_weight = mu;
        return res;
    }

    BeamformerSet w = w_init;
    BeamformerSet w_prev = w_init;
    double momentum_k = 0;
    double prev = penalized_objective(ch, w, st, s, mu);
    for (int it = 1; it <= opts.max_inner; ++it) {
        // Extrapolated MM step; falls back to a plain step when it does not descend.
        BeamformerSet next;
        double obj = 0;
        bool stepped = false;
        if (opts.momentum && momentum_k > 0) {
            const double beta = momentum_k / (momentum_k + 3);
            const BeamformerSet y(w.w + beta * (w.w - w_prev.w));
            next = pda_update(ch, st, y, s, mu);
            obj = penalized_objective(ch, next, st, s, mu);
            stepped = obj <= prev;
        }
        if (!stepped) {
            next = pda_update(ch, st, w, s, mu);
            obj = penalized_objective(ch, next, st, s, mu);
            momentum_k = 0;
        }
        momentum_k += 1;
        w_prev = std::move(w);
        w = std::move(next);
        res.trace.push_back(obj);
        res.mu_trace.push_back(mu);
        res.iterations = it;

        const BeamformerSet cand = restore_feasibility(w, a, p.power_budget, p.probing_threshold);
        const double f_cand = eval_surrogate(ch, cand, st).total();
        if (f_cand < res.surrogate) {
            res.surrogate = f_cand;
            res.w = cand;
            res.improved = true;
        }

        const double rel = std::abs(prev - obj) / std::max(std::abs(obj), std::numeric_limits<double>::min());
        const bool at_cap = mu >= mu_cap;
        bool raise = opts.mu_double_every > 0 && it % opts.mu_double_every == 0;
        if (rel < opts.tol) {
            if (relative_violation(w) <= opts.feasibility_tol || at_cap) {
                res.converged = true;
                break;
            }
            raise = true;
        }
        if (raise && !at_cap) {
            mu = std::min(2 * mu, mu_cap);
            prev = penalized_objective(ch, w, st, s, mu);
            momentum_k = 0;
        } else {
            prev = obj;
        }
    }
    st.penalty_weight = mu;
    return res;
}

} // namespace fasec
