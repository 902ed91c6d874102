#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>
#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <fasec/driver.hpp>

namespace fasec {

// =======================================================================
// Oracles. None of these reuse the analytic gradient, projection or solver
// code they are used to check.
// =======================================================================

using ScalarField = std::function<double(const rvec&)>;

/// Central differences (F(d + h e_m) - F(d - h e_m)) / 2h.
inline rvec fd_gradient(const ScalarField& F, const rvec& d, double h)
{
    if (!(h > 0)) throw InvalidArgument("fd_gradient: step must be positive");
    rvec g(d.size());
    rvec x = d;
    for (Eigen::Index m = 0; m < d.size(); ++m) {
        x(m) = d(m) + h;
        const double fp = F(x);
        x(m) = d(m) - h;
        const double fm = F(x);
        x(m) = d(m);
        if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericalError("fd_gradient: non-finite sample");
        g(m) = (fp - fm) / (2 * h);
    }
    return g;
}

/// Feasible set for grid_project: box, spacing and an optional lower bound on a scalar function.
struct GridConstraint
{
    double aperture = 0;
    double min_spacing = 0;
    ScalarField probing;  // may be empty
    double threshold = 0;
};

/*
 * Nearest feasible point of the grid {0, r, 2r, ...}^M to kappa by exhaustive
 * scan. Returns nullopt when no grid point is feasible.
 */
inline std::optional<rvec> grid_project(const rvec& kappa, const GridConstraint& c, double resolution)
{
    const auto M = kappa.size();
    if (M < 1 || M > 3) throw InvalidArgument("grid_project: only 1 <= M <= 3 is supported");
    if (!(resolution > 0)) throw InvalidArgument("grid_project: resolution must be positive");
    const auto n = static_cast<long>(std::floor(c.aperture / resolution + 1e-9)) + 1;

    std::optional<rvec> best;
    double best_dist = std::numeric_limits<double>::infinity();
    rvec x(M);
    auto visit = [&] {
        for (Eigen::Index m = 1; m < M; ++m)
            if (x(m) - x(m - 1) < c.min_spacing * (1 - 1e-12)) return;
        const double dist = (x - kappa).squaredNorm();
        if (dist >= best_dist) return;
        if (c.probing && c.probing(x) < c.threshold) return;
        best_dist = dist;
        best = x;
    };
    for (long i = 0; i < n; ++i) {
        x(0) = i * resolution;
        if (M == 1) { visit(); continue; }
        for (long j = i; j < n; ++j) {
            x(1) = j * resolution;
            if (M == 2) { visit(); continue; }
            for (long l = j; l < n; ++l) {
                x(2) = l * resolution;
                visit();
            }
        }
    }
    return best;
}

struct ExhaustiveGrid
{
    int spacings = 100; // d_2 - d_1 values in [L0, L]
    int powers = 10;    // total power levels in (0, P_max]
    int splits = 60;    // amplitude split angle in [0, pi/2]
    int phases = 120;   // relative phase in [0, 2 pi)
};

struct ExhaustiveResult
{
    BeamformerSet w;
    rvec d;
    double secrecy = -1; // -1 when no grid point is feasible
    long evaluated = 0;
};

/*
 * Global reference for M <= 2, K = 1. With one user the secrecy rate depends
 * on the layout only through d_2 - d_1 and on w only up to a global phase, so
 * the grid covers (spacing, power, amplitude split, relative phase).
 * Everything is evaluated from scratch with scalar arithmetic.
 */
inline ExhaustiveResult exhaustive_secrecy_search(const Scenario& s, const ExhaustiveGrid& g = {})
{
    const auto& p = s.params();
    const int M = p.num_antennas;
    if (M > 2 || p.num_users != 1) throw InvalidArgument("exhaustive_secrecy_search: needs M <= 2 and K = 1");
    if (static_cast<double>(g.spacings) * g.powers * g.splits * g.phases > 1e7) {
        throw InvalidArgument("exhaustive_secrecy_search: grid exceeds 1e7 points");
    }
    const double vu = 2 * pi / p.wavelength * std::cos(p.user_angles[0]);
    const double gu = s.user_gain(0);
    std::vector<double> ve, ge;
    for (Eigen::Index q = 0; q < s.num_eves(); ++q) {
        ve.push_back(2 * pi / p.wavelength * std::cos(p.eavesdropper_angles[q]));
        ge.push_back(s.eve_gain(q));
    }
    const double vs = 2 * pi / p.wavelength * std::cos(p.sensing_angle);

    ExhaustiveResult best;
    const int nsp = M == 1 ? 1 : g.spacings;
    const int nsplit = M == 1 ? 1 : g.splits;
    const int nph = M == 1 ? 1 : g.phases;
    for (int a = 0; a < nsp; ++a) {
        const double delta = M == 1 ? 0.0 : p.min_spacing + (p.aperture_length - p.min_spacing) * a / std::max(1, nsp - 1);
        for (int b = 1; b <= g.powers; ++b) {
            const double pw = p.power_budget * b / g.powers;
            for (int c = 0; c < nsplit; ++c) {
                const double th = M == 1 ? 0.0 : 0.5 * pi * c / std::max(1, nsplit - 1);
                const double r1 = std::sqrt(pw) * std::cos(th), r2 = std::sqrt(pw) * std::sin(th);
                for (int e = 0; e < nph; ++e) {
                    const double psi = 2 * pi * e / nph;
                    ++best.evaluated;
                    // |a(v)^H w|^2 with a = [1, e^{j v delta}], w = [r1, r2 e^{j psi}]
                    auto gain2 = [&](double v) {
                        if (M == 1) return r1 * r1;
                        return r1 * r1 + r2 * r2 + 2 * r1 * r2 * std::cos(psi - v * delta);
                    };
                    if (gain2(vs) < p.probing_threshold) continue;
                    const double gam_u = gu * gu * gain2(vu) / p.noise_user[0];
                    double gam_e = 0;
                    for (std::size_t q = 0; q < ve.size(); ++q) {
                        gam_e = std::max(gam_e, ge[q] * ge[q] * gain2(ve[q]) / p.noise_eve);
                    }
                    const double sec = std::max(0.0, (std::log1p(gam_u) - std::log1p(gam_e)) / std::log(2.0));
                    if (sec > best.secrecy) {
                        best.secrecy = sec;
                        cmat w(M, 1);
                        w(0, 0) = r1;
                        if (M == 2) w(1, 0) = std::polar(r2, psi);
                        best.w = BeamformerSet(w);
                        best.d = rvec(M);
                        best.d(0) = 0.5 * (p.aperture_length - delta);
                        if (M == 2) best.d(1) = best.d(0) + delta;
                    }
                }
            }
        }
    }
    return best;
}

struct BlockOptimum
{
    BeamformerSet w;        // primal point recovered from the final multipliers
    double lower_bound = 0; // dual value, a lower bound on the block minimum
    double value = 0;       // surrogate at w
    bool certified = false; // w feasible and value == lower_bound up to 1e-9 relative
};

/*
 * Beamformer block (fixed auxiliaries and positions) through its Lagrangian
 * dual over (lambda, nu) >= 0:
 *   w_k(lambda, nu) = (Q_k + lambda I - nu a a^H)^{-1} r_k.
 * Nested bisection: lambda enforces |w|^2 <= P_max for each nu, nu enforces
 * the probing constraint. The dual value is always a valid lower bound and is
 * tight (two constraints, complex variables). When Q_k is singular the
 * minimizer may need a null-space component that the multipliers do not
 * determine; the returned w is then not certified.
 */
inline BlockOptimum exact_beamformer_block(const SurrogateState& st, const cvec& steering, double power_budget,
                                           double threshold)
{
    const auto K = st.b.cols();
    const auto M = st.A.rows();
    const cmat aa = steering * steering.adjoint();

    auto solve = [&](double lam, double nu, BeamformerSet& w) {
        w = BeamformerSet::zeros(M, K);
        for (Eigen::Index k = 0; k < K; ++k) {
            cmat op = st.A + st.T + st.E - st.E_k[k] - nu * aa;
            op.diagonal().array() += lam;
            Eigen::LLT<cmat> llt(op);
            if (llt.info() != Eigen::Success) return false;
            w.w.col(k) = llt.solve(st.b.col(k) + st.g.col(k));
        }
        return w.w.allFinite();
    };
    auto lambda_floor = [&](double nu) {
        double lo = 0;
        for (Eigen::Index k = 0; k < K; ++k) {
            Eigen::SelfAdjointEigenSolver<cmat> es(st.A + st.T + st.E - st.E_k[k] - nu * aa, Eigen::EigenvaluesOnly);
            lo = std::max(lo, -es.eigenvalues().minCoeff());
        }
        return lo;
    };
    struct Inner { BeamformerSet w; double lam = 0; };
    auto for_nu = [&](double nu) {
        Inner r;
        const double floor = lambda_floor(nu);
        double lo = floor > 0 ? floor * (1 + 1e-12) + 1e-300 : 0.0;
        if (solve(lo, nu, r.w) && r.w.total_power() <= power_budget) {
            r.lam = lo;
            return r;
        }
        double hi = std::max(1.0, 2 * lo + 1);
        while (!solve(hi, nu, r.w) || r.w.total_power() > power_budget) hi *= 2;
        for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (!solve(mid, nu, r.w) || r.w.total_power() > power_budget) lo = mid;
            else hi = mid;
        }
        solve(hi, nu, r.w);
        r.lam = hi;
        return r;
    };
    auto dual_value = [&](const Inner& r, double nu) {
        double v = st.weights.constant - r.lam * power_budget + nu * threshold;
        for (Eigen::Index k = 0; k < K; ++k) v -= (st.b.col(k) + st.g.col(k)).dot(r.w.w.col(k)).real();
        return v;
    };

    Inner best = for_nu(0);
    double nu = 0;
    if (threshold > 0 && probing_power(steering, best.w) < threshold) {
        double lo = 0, hi = 1;
        while (probing_power(steering, for_nu(hi).w) < threshold) {
            hi *= 2;
            if (hi > 1e300) throw NumericalError("exact_beamformer_block: probing multiplier diverged");
        }
        for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
            const double mid = 0.5 * (lo + hi);
            if (probing_power(steering, for_nu(mid).w) < threshold) lo = mid;
            else hi = mid;
        }
        nu = hi;
        best = for_nu(hi);
    }

    BlockOptimum out;
    out.w = best.w;
    out.lower_bound = dual_value(best, nu);
    out.value = eval_surrogate_from_caches(best.w, st);
    const bool feasible = best.w.total_power() <= power_budget * (1 + 1e-9) &&
                          probing_power(steering, best.w) >= threshold * (1 - 1e-9);
    out.certified = feasible && out.value - out.lower_bound <= 1e-9 * (1 + std::abs(out.lower_bound));
    return out;
}

// =======================================================================
// Gate suites (CLI `verify`)
// =======================================================================

struct GateResult
{
    std::string name;
    double residual = 0;
    double tolerance = 0;
    bool passed = false;
};

using GradientFn = std::function<rvec(const ChannelSet&, const BeamformerSet&, const SurrogateState&)>;

namespace detail {

// Operating point with randomized directions, used by the gate suites.
inline ScenarioParams gate_params(std::mt19937_64& rng, int M, int K, double probing)
{
    std::uniform_real_distribution<double> ang(deg_to_rad(5), deg_to_rad(175));
    ScenarioParams p;
    p.num_antennas = M;
    p.num_users = K;
    p.wavelength = 0.01;
    p.aperture_length = 0.1;
    p.min_spacing = 0.005;
    for (int k = 0; k < K; ++k) p.user_angles.push_back(ang(rng));
    p.sensing_angle = ang(rng);
    p.user_distances.assign(K, 100.0);
    p.target_distance = 100.0;
    p.reference_gain = 1e-4;
    p.pathloss_exponent = 2.8;
    p.noise_user.assign(K, 1e-11);
    p.noise_eve = 1e-11;
    p.power_budget = 1.0;
    p.probing_threshold = probing;
    return p;
}

inline rvec gate_layout(std::mt19937_64& rng, const Scenario& s)
{
    const auto& p = s.params();
    const auto M = s.num_antennas();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> gaps(M + 1);
    double tot = 0;
    for (auto& g : gaps) tot += (g = u(rng));
    const double slack = p.aperture_length - (M - 1) * p.min_spacing;
    rvec d(M);
    double pos = slack * gaps[0] / tot;
    for (Eigen::Index m = 0; m < M; ++m) {
        if (m > 0) pos += p.min_spacing + slack * gaps[m] / tot;
        d(m) = pos;
    }
    return d;
}

inline BeamformerSet gate_beamformers(std::mt19937_64& rng, Eigen::Index M, Eigen::Index K, double power)
{
    std::normal_distribution<double> n(0.0, 1.0);
    cmat w(M, K);
    for (Eigen::Index j = 0; j < K; ++j)
        for (Eigen::Index i = 0; i < M; ++i) w(i, j) = complex_t(n(rng), n(rng));
    return BeamformerSet(w * std::sqrt(power / w.squaredNorm()));
}

} // namespace detail

/// Analytic vs central-difference gradient at random (d, w, auxiliaries), M = 8, K = 2.
inline std::vector<GateResult> verify_gradients(int points = 100, double h = 1e-6, std::uint64_t seed = 1,
                                                const GradientFn& grad = apv_gradient)
{
    std::mt19937_64 rng(seed);
    double worst = 0;
    for (int i = 0; i < points; ++i) {
        auto p = detail::gate_params(rng, 8, 2, 0.0);
        if (i % 2) p.gain_convention = GainConvention::power;
        const Scenario s(p);
        const rvec d = detail::gate_layout(rng, s);
        const auto ch = build_channels(s, d);
        const auto w = detail::gate_beamformers(rng, 8, 2, 1.0);
        // auxiliaries from an unrelated point so the gradient is generic
        const auto st = initial_surrogate(ch, detail::gate_beamformers(rng, 8, 2, 0.5), s);
        const rvec fd = fd_gradient([&](const rvec& x) { return surrogate_in_positions(s, x, w, st); }, d, h);
        const rvec an = grad(ch, w, st);
        worst = std::max(worst, (an - fd).norm() / std::max(fd.norm(), 1e-300));
    }
    return {{"gradient_vs_fd", worst, 1e-5, worst <= 1e-5}};
}

inline std::vector<GateResult> verify_projections(std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    std::vector<GateResult> out;

    // project_power: norm-exact and idempotent
    double pw_err = 0;
    for (int i = 0; i < 50; ++i) {
        const auto w = detail::gate_beamformers(rng, 6, 3, 1.5 + i);
        const auto p = project_power(w, 1.0);
        pw_err = std::max({pw_err, std::abs(p.total_power() - 1.0), (project_power(p, 1.0).w - p.w).norm()});
    }
    out.push_back({"project_power_exact_idempotent", pw_err, 1e-12, pw_err <= 1e-12});

    // project_probing lands on the boundary
    double bd_err = 0;
    for (int i = 0; i < 50; ++i) {
        const Scenario s(detail::gate_params(rng, 2 + i % 7, 1 + i % 3, 0.0));
        const rvec d = detail::gate_layout(rng, s);
        const auto w = detail::gate_beamformers(rng, s.num_antennas(), s.num_users(), 1.0);
        const cvec a = steering_vector(d, s.params().sensing_angle, 0.01);
        const double Pd = 2.0 * probing_power(a, w) + 0.1;
        bd_err = std::max(bd_err, std::abs(probing_power(a, project_probing(w, a, Pd)) - Pd) / Pd);
    }
    out.push_back({"project_probing_boundary", bd_err, 1e-8, bd_err <= 1e-8});

    // Taylor minorant: below the true probing power, tight at the center, Q <= 0
    double slack = 0, tight = 0, qpos = 0;
    for (int i = 0; i < 10; ++i) {
        const Scenario s(detail::gate_params(rng, 4 + i % 5, 2, 0.0));
        const auto& p = s.params();
        const rvec c = detail::gate_layout(rng, s);
        const auto w = detail::gate_beamformers(rng, s.num_antennas(), 2, 1.0);
        const auto tb = build_taylor_bound(w, c, p.sensing_angle, p.wavelength);
        const double pc = probing_power(c, w, p.sensing_angle, p.wavelength);
        tight = std::max(tight, std::abs(tb.evaluate(c) - pc) / pc);
        std::uniform_real_distribution<double> u(0, p.aperture_length);
        for (int j = 0; j < 10000; ++j) {
            rvec x(s.num_antennas());
            for (auto& v : x) v = u(rng);
            slack = std::max(slack, tb.evaluate(x) - probing_power(x, w, p.sensing_angle, p.wavelength));
        }
        Eigen::SelfAdjointEigenSolver<rmat> es(tb.Q, Eigen::EigenvaluesOnly);
        qpos = std::max(qpos, es.eigenvalues().maxCoeff() / std::max(1e-300, std::abs(es.eigenvalues().minCoeff())));
    }
    out.push_back({"taylor_minorant_slack", slack, 1e-9, slack <= 1e-9});
    out.push_back({"taylor_tight_at_center", tight, 1e-9, tight <= 1e-9});
    out.push_back({"taylor_Q_nsd", qpos, 1e-10, qpos <= 1e-10});

    // QCQP projection vs grid scan, M = 2 with the probing constraint active
    double qc_err = 0;
    int cases = 0;
    while (cases < 5) {
        const Scenario s0(detail::gate_params(rng, 2, 1, 0.0));
        const auto& p0 = s0.params();
        const rvec c = detail::gate_layout(rng, s0);
        const auto w = detail::gate_beamformers(rng, 2, 1, 1.0);
        const auto tb = build_taylor_bound(w, c, p0.sensing_angle, p0.wavelength);
        std::uniform_real_distribution<double> u(0, p0.aperture_length);
        rvec kappa(2);
        kappa << u(rng), u(rng);
        // threshold between g(kappa-projection) and g(center) so the constraint binds
        const double gk = tb.evaluate(detail::snap_to_chain(kappa, p0.aperture_length, p0.min_spacing));
        const double gc = tb.evaluate(c);
        if (!(gc > gk * 1.05) || gk <= 0) continue;
        auto p = p0;
        p.probing_threshold = 0.5 * (gk + gc);
        const Scenario s(p);
        const auto proj = project_feasible(kappa, tb, s);
        GridConstraint gcn{p.aperture_length, p.min_spacing,
                           [&](const rvec& x) { return tb.evaluate(x); }, p.probing_threshold};
        const auto grid = grid_project(kappa, gcn, 1e-3 * p.aperture_length);
        if (!grid) continue;
        qc_err = std::max(qc_err, (proj.d - *grid).lpNorm<Eigen::Infinity>() / p.aperture_length);
        ++cases;
    }
    out.push_back({"qcqp_vs_grid", qc_err, 1e-3, qc_err <= 1e-3});
    return out;
}

/// Tolerance for comparing a continuous solver against the grid optimum.
inline double grid_slack(double oracle_secrecy) { return 1e-2 * std::max(oracle_secrecy, 0.0) + 1e-9; }

/// Toy M = 2, K = 1 instances in the power convention (rates of order one bit).
inline Scenario toy_instance(std::mt19937_64& rng)
{
    auto p = detail::gate_params(rng, 2, 1, 0.0);
    p.gain_convention = GainConvention::power;
    p.probing_threshold = std::uniform_real_distribution<double>(0.0, 1.5)(rng);
    return Scenario(p);
}

/// bsum_multistart against the exhaustive toy search, and FA vs FPA dominance.
inline std::vector<GateResult> verify_oracle(std::uint64_t seed = 1, int instances = 10, int starts = 8)
{
    std::mt19937_64 rng(seed);
    double worst_gap = -1e300;
    for (int i = 0; i < instances; ++i) {
        const Scenario s = toy_instance(rng);
        const auto oracle = exhaustive_secrecy_search(s);
        const auto rep = bsum_multistart(s, starts);
        const double slack = grid_slack(oracle.secrecy);
        worst_gap = std::max(worst_gap, oracle.secrecy - slack - rep.metrics.sum_secrecy);
    }
    std::vector<GateResult> out;
    out.push_back({"bsum_vs_exhaustive", std::max(worst_gap, 0.0), 0.0, worst_gap <= 0});

    double worst_dom = -1e300;
    for (int i = 0; i < 5; ++i) {
        const Scenario s(detail::gate_params(rng, 4, 2, 1.0));
        const auto fpa = fpa_baseline(s);
        const auto fa = bsum_solve(s, {fpa.w, fpa.d});
        worst_dom = std::max(worst_dom, fpa.metrics.sum_secrecy - fa.metrics.sum_secrecy);
    }
    out.push_back({"fa_dominates_fpa", std::max(worst_dom, 0.0), 1e-6, worst_dom <= 1e-6});
    return out;
}

inline std::vector<GateResult> run_verify_suite(const std::string& suite, double h = 1e-6, std::uint64_t seed = 1,
                                                const GradientFn& grad = apv_gradient)
{
    std::vector<GateResult> out;
    auto append = [&](std::vector<GateResult> r) { out.insert(out.end(), r.begin(), r.end()); };
    if (suite == "gradients" || suite == "all") append(verify_gradients(100, h, seed, grad));
    if (suite == "projections" || suite == "all") append(verify_projections(seed));
    if (suite == "oracle" || suite == "all") append(verify_oracle(seed));
    if (out.empty()) throw InvalidArgument("unknown verify suite '" + suite + "'");
    return out;
}

} // namespace fasec
