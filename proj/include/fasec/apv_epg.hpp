#pragma once
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>
#include <fasec/qcqp.hpp>
#include <fasec/surrogate.hpp>

namespace fasec {

// =======================================================================
// Surrogate as a function of the antenna positions
// =======================================================================

/*
 * With the auxiliaries fixed the link weights do not depend on d, so
 *   F(d) = sum_links sum_i quad_i delta^2 |a^H w_i|^2 - 2 Re{lin_i^* delta a^H w_i} + const.
 * Returns the d-dependent part only.
 */
inline double surrogate_in_positions(const Scenario& s, const Eigen::Ref<const rvec>& d, const BeamformerSet& w,
                                     const SurrogateState& st)
{
    return eval_surrogate(build_channels(s, d), w, st).dependent;
}

/*
 * dF/dd_m. With z_i = a^H w_i, dz_i/dd_m = -j v conj(a_m) w_{m,i}, so every
 * link contributes Re{kappa_i (-j v) conj(a_m) w_{m,i}} with
 * kappa_i = 2 quad_i delta^2 conj(z_i) - 2 delta conj(lin_i).
 */
inline rvec apv_gradient(const ChannelSet& ch, const BeamformerSet& w, const SurrogateState& st)
{
    const auto M = ch.num_antennas();
    rvec grad = rvec::Zero(M);
    auto add_link = [&](const Link& l, const LinkWeights& lw) {
        const Eigen::RowVectorXcd z = l.steering.adjoint() * w.w;
        cvec kappa_w = cvec::Zero(M);
        for (Eigen::Index i = 0; i < w.num_users(); ++i) {
            const complex_t kappa = 2.0 * lw.quad(i) * l.gain * l.gain * std::conj(z(i)) -
                                    2.0 * l.gain * std::conj(lw.lin(i));
            kappa_w += kappa * w.w.col(i);
        }
        const complex_t factor(0.0, -l.phase_rate);
        grad += (factor * l.steering.conjugate().cwiseProduct(kappa_w)).real();
    };
    for (std::size_t k = 0; k < ch.users.size(); ++k) add_link(ch.users[k], st.weights.users[k]);
    for (std::size_t q = 0; q < ch.eves.size(); ++q) add_link(ch.eves[q], st.weights.eves[q]);
    return grad;
}

// =======================================================================
// Quadratic minorant of the probing power
// =======================================================================

/*
 * P(d) = sum_{m,n} |R_mn| cos(theta_mn), theta_mn = v (d_n - d_m) + angle(R_mn),
 * R = sum_k w_k w_k^H. Using cos(t) >= cos(t0) - sin(t0)(t - t0) - (t - t0)^2 / 2
 * gives g(d) = d^T Q d - 2 p^T d + c <= P(d), tight at the expansion point, with
 *   Q   = -v^2 (diag(r) - |R|),  r the row sums of |R|
 *   p_n = sum_m |R_mn| [v sin(theta_mn) - v^2 (d_n - d_m)]
 *   c   = sum_{m,n} |R_mn| [cos(theta_mn) + v sin(theta_mn)(d_n - d_m) - v^2 (d_n - d_m)^2 / 2]
 * with theta and differences taken at the expansion point.
 */
struct TaylorBound
{
    rmat Q;
    rvec p;
    double c = 0;
    rvec center;

    double evaluate(const Eigen::Ref<const rvec>& d) const { return d.dot(Q * d) - 2.0 * p.dot(d) + c; }
};

inline TaylorBound build_taylor_bound(const BeamformerSet& w, const Eigen::Ref<const rvec>& center, double angle,
                                      double wavelength)
{
    const auto M = center.size();
    if (w.num_antennas() != M) throw InvalidArgument("build_taylor_bound: dimension mismatch");
    const double v = phase_rate(angle, wavelength);
    const cmat R = w.covariance();
    const rmat absR = R.cwiseAbs();

    TaylorBound tb;
    tb.center = center;
    tb.Q = -v * v * (rmat(absR.rowwise().sum().asDiagonal()) - absR);
    tb.p = rvec::Zero(M);
    for (Eigen::Index m = 0; m < M; ++m) {
        for (Eigen::Index n = 0; n < M; ++n) {
            if (absR(m, n) == 0) continue;
            const double gap = center(n) - center(m);
            const double theta = v * gap + std::arg(R(m, n));
            tb.p(n) += absR(m, n) * (v * std::sin(theta) - v * v * gap);
            tb.c += absR(m, n) * (std::cos(theta) + v * std::sin(theta) * gap - 0.5 * v * v * gap * gap);
        }
    }
    return tb;
}

// =======================================================================
// Projection onto the relaxed feasible set
// =======================================================================

struct ApvProjection
{
    rvec d;
    bool relaxed_set_empty = false; // probing constraint dropped; d is the polyhedron projection
    bool converged = false;
    int iterations = 0;
};

namespace detail {

// Chain/box rows in normalized coordinates x = d / L.
inline void chain_constraints(Eigen::Index M, double aperture, double min_spacing, rmat& G, rvec& h)
{
    G = rmat::Zero(M + 1, M);
    h = rvec::Zero(M + 1);
    G(0, 0) = -1.0;
    G(1, M - 1) = 1.0;
    h(1) = 1.0;
    for (Eigen::Index m = 1; m < M; ++m) {
        G(m + 1, m - 1) = 1.0;
        G(m + 1, m) = -1.0;
        h(m + 1) = -min_spacing / aperture;
    }
}

// Remove the last ~1e-12 of constraint violation left by the interior point.
inline rvec snap_to_chain(rvec d, double aperture, double min_spacing)
{
    const auto M = d.size();
    d(0) = std::max(d(0), 0.0);
    for (Eigen::Index m = 1; m < M; ++m) d(m) = std::max(d(m), d(m - 1) + min_spacing);
    if (d(M - 1) > aperture) {
        d(M - 1) = aperture;
        for (Eigen::Index m = M - 1; m-- > 0;) d(m) = std::min(d(m), d(m + 1) - min_spacing);
    }
    return d;
}

} // namespace detail

/*
 * argmin |d - kappa|^2 over 0 <= d_1, d_M <= L, d_m - d_{m-1} >= L0 and
 * g(d) >= P_d. The quadratic constraint is imposed on (1 + 1e-9) P_d so the
 * returned point keeps a margin after rounding. When g cannot reach P_d on
 * the polyhedron (with a small interior margin), the polyhedron projection
 * is returned and flagged.
 */
inline ApvProjection project_feasible(const Eigen::Ref<const rvec>& kappa, const TaylorBound& tb,
                                      const Scenario& s, const QcqpOptions& opts = {})
{
    const auto& par = s.params();
    const auto M = kappa.size();
    const double L = par.aperture_length;
    const double L0 = par.min_spacing;
    const double target = par.probing_threshold * (1 + 1e-9);

    QcqpProblem pb;
    pb.H = 2.0 * rmat::Identity(M, M);
    pb.f = -2.0 * kappa / L;
    detail::chain_constraints(M, L, L0, pb.G, pb.h);

    // (target - g(L x)) / P_d <= 0
    ConvexQuadratic quad;
    const bool use_quad = par.probing_threshold > 0;
    if (use_quad) {
        const double sc = 1.0 / par.probing_threshold;
        quad.P = -2.0 * L * L * sc * tb.Q;
        quad.q = 2.0 * L * sc * tb.p;
        quad.r = sc * (target - tb.c);
    }

    ApvProjection out;
    if (apv_violation(kappa, L, L0) <= 0 && (!use_quad || tb.evaluate(kappa) >= target)) {
        out.d = kappa;
        out.converged = true;
        return out;
    }
    const rvec x0 = detail::snap_to_chain(kappa, L, L0) / L;
    if (use_quad) {
        // The interior point needs a strictly feasible relaxed set. The
        // expansion point usually certifies one for free; otherwise maximize
        // g over the polyhedron and require a margin above the target.
        const double margin = 1e-8;
        const bool center_ok = tb.center.size() == M && apv_violation(tb.center, L, L0) <= 1e-12 &&
                               quad.value(tb.center / L) <= -margin;
        if (!center_ok) {
            QcqpProblem maxg;
            maxg.H = quad.P;
            maxg.f = quad.q;
            maxg.G = pb.G;
            maxg.h = pb.h;
            const auto r = solve_qcqp(maxg, x0, opts);
            if (!r.converged || quad.value(r.x) > -margin) out.relaxed_set_empty = true;
        }
        if (!out.relaxed_set_empty) pb.quad = quad;
    }

    auto r = solve_qcqp(pb, x0, opts);
    if (!r.converged && pb.quad) {
        out.relaxed_set_empty = true;
        pb.quad.reset();
        r = solve_qcqp(pb, x0, opts);
    }
    if (!r.converged) throw NumericalError("project_feasible: polyhedron projection did not converge");
    out.d = detail::snap_to_chain(r.x * L, L, L0);
    out.converged = r.converged;
    out.iterations = r.iterations;
    return out;
}

// =======================================================================
// Extrapolated projected gradient
// =======================================================================

struct EpgOptions
{
    int max_inner = 100;
    double tol = 1e-6;          // stop when |d_{i+1} - d_i|_inf < tol * L
    double step_factor = 1e-2;  // first trial moves the largest coordinate by step_factor * L
    int max_halvings = 30;
};

struct EpgState
{
    rvec d;               // last accepted (projected) iterate
    rvec lambda;          // extrapolated point where the gradient is taken
    double varsigma = 0;  // momentum sequence, starts at 0
    double eta = 0;       // extrapolation coefficient
    double step = 0;      // last accepted step size
    double value = 0;     // F at d
    bool stalled = false;
    bool projection_fallback = false;

    static EpgState start(rvec d0, double value)
    {
        EpgState st;
        st.lambda = d0;
        st.d = std::move(d0);
        st.value = value;
        return st;
    }
};

/// Momentum recursion: varsigma' = (1 + sqrt(1 + 4 varsigma^2)) / 2, eta' = (varsigma' - 1) / varsigma'.
inline void advance_momentum(EpgState& st)
{
    st.varsigma = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * st.varsigma * st.varsigma));
    st.eta = (st.varsigma - 1.0) / st.varsigma;
}

/*
 * One EPG step with backtracking. The Taylor bound is expanded at the current
 * iterate d; a trial point is accepted when F does not increase. If every
 * trial from the extrapolated point fails the momentum is reset and the step
 * is retried from d itself; if that fails too the state is marked stalled.
 */
inline EpgState epg_step(const EpgState& in, const ChannelSet& ch, const BeamformerSet& w,
                         const SurrogateState& st, const Scenario& s, const EpgOptions& opts = {})
{
    const auto& par = s.params();
    const double L = par.aperture_length;
    const TaylorBound tb = build_taylor_bound(w, in.d, par.sensing_angle, par.wavelength);

    auto try_from = [&](const rvec& base, EpgState& out) {
        const rvec grad = base == ch.positions ? apv_gradient(ch, w, st) : apv_gradient(build_channels(s, base), w, st);
        const double gmax = grad.lpNorm<Eigen::Infinity>();
        double alpha = gmax > 0 ? opts.step_factor * L / gmax : 0.0;
        for (int h = 0; h <= opts.max_halvings; ++h, alpha *= 0.5) {
            const auto proj = project_feasible(base - alpha * grad, tb, s);
            if (proj.relaxed_set_empty) {
                out.projection_fallback = true;
                if (probing_power(proj.d, w, par.sensing_angle, par.wavelength) < par.probing_threshold) continue;
            }
            const double f = surrogate_in_positions(s, proj.d, w, st);
            if (f <= in.value) {
                out.d = proj.d;
                out.value = f;
                out.step = alpha;
                return true;
            }
            if (alpha == 0) break;
        }
        return false;
    };

    EpgState out = in;
    out.stalled = false;
    bool ok = try_from(in.lambda, out);
    if (!ok && (in.lambda - in.d).lpNorm<Eigen::Infinity>() > 0) {
        out.varsigma = 0;
        ok = try_from(in.d, out);
    }
    if (!ok) {
        out.d = in.d;
        out.value = in.value;
        out.step = 0;
        out.stalled = true;
        out.varsigma = 0;
    }
    advance_momentum(out);
    out.lambda = out.d + out.eta * (out.d - in.d);
    return out;
}

struct ApvBlockResult
{
    rvec d;
    std::vector<double> trace; // F (d-dependent part) after every accepted step
    int iterations = 0;
    bool converged = false;
    bool stalled = false;
    bool projection_fallback = false;
};

inline ApvBlockResult solve_apv_block(const ChannelSet& ch, const BeamformerSet& w, const SurrogateState& st,
                                      const Eigen::Ref<const rvec>& d_init, const Scenario& s,
                                      const EpgOptions& opts = {})
{
    const auto& par = s.params();
    ApvBlockResult res;
    if (d_init.size() == 1) {
        // a single element only sets a global phase, which the beamformer absorbs
        res.d = d_init;
        res.trace.push_back(surrogate_in_positions(s, d_init, w, st));
        res.converged = true;
        return res;
    }
    EpgState state = EpgState::start(d_init, surrogate_in_positions(s, d_init, w, st));
    res.trace.push_back(state.value);
    for (int it = 1; it <= opts.max_inner; ++it) {
        EpgState next = epg_step(state, ch, w, st, s, opts);
        const double move = (next.d - state.d).lpNorm<Eigen::Infinity>();
        res.iterations = it;
        res.projection_fallback |= next.projection_fallback;
        res.trace.push_back(next.value);
        state = std::move(next);
        if (state.stalled) {
            res.stalled = true;
            break;
        }
        if (move < opts.tol * par.aperture_length) {
            res.converged = true;
            break;
        }
    }
    res.d = state.d;
    return res;
}

} // namespace fasec
