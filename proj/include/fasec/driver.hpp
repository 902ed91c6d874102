#pragma once
#include <chrono>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>
#include <fasec/apv_epg.hpp>
#include <fasec/beamformer_pda.hpp>

namespace fasec {

/*
 * BSUM outer loop: auxiliaries -> beamformers (PDA) -> positions (EPG).
 *
 * Cost per outer iteration is dominated by the beamformer block,
 * O(I_w K M^3) for I_w inner iterations of K Hermitian solves, plus the
 * position block, O(I_d (M^3 + M^2 K)) for I_d EPG steps each with a dense
 * M-variable interior point projection and an O(M^2) covariance scan.
 */

enum class SolverStatus { converged, max_iters, stalled };

// Starting antenna layout: `compact` is the half-wavelength (or L0) uniform
// array centered in the aperture, `spread` spaces the M elements uniformly
// over the whole aperture.
enum class InitialLayout { compact, spread, random };

inline const char* to_string(SolverStatus s)
{
    switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::max_iters: return "max_iters";
    case SolverStatus::stalled: return "stalled";
    }
    return "unknown";
}

struct SolverOptions
{
    int max_outer = 300;
    double tol = 1e-3;                     // relative change of F between outer iterations
    bool optimize_positions = true;        // false gives the fixed-position baseline
    bool refresh_before_positions = false; // extra auxiliary update between the two blocks
    bool clamp_rates = false;              // majorize the clamped sum instead of the unclamped one
    InitialLayout layout = InitialLayout::spread; // used when the initial point has no positions
    PdaOptions pda;
    EpgOptions epg;
};

/// Starting point; missing parts use the defaults of default_initial_point().
struct InitialPoint
{
    std::optional<BeamformerSet> w;
    std::optional<rvec> d;
};

struct IterationRecord
{
    int iteration = 0;
    double surrogate = 0;    // F after the position block
    double sum_secrecy = 0;  // clamped, at the iterate
    double probing_power = 0;
    double total_power = 0;
    double max_violation = 0;
    double wall_time = 0;    // seconds since the solve started
    int beamformer_iterations = 0;
    int position_iterations = 0;
};

struct FeasibilityAudit
{
    double power_excess = 0;    // (sum |w_k|^2 - P_max) / P_max, <= 0 when feasible
    double probing_deficit = 0; // (P_d - P(w, d)) / P_d, <= 0 when feasible
    double apv_violation = 0;   // meters
    bool passed = false;
};

inline FeasibilityAudit audit_feasibility(const Scenario& s, const BeamformerSet& w, const Eigen::Ref<const rvec>& d)
{
    const auto& p = s.params();
    FeasibilityAudit a;
    a.power_excess = (w.total_power() - p.power_budget) / p.power_budget;
    a.probing_deficit = p.probing_threshold > 0
                            ? (p.probing_threshold - probing_power(d, w, p.sensing_angle, p.wavelength)) / p.probing_threshold
                            : 0.0;
    a.apv_violation = apv_violation(d, p.aperture_length, p.min_spacing);
    a.passed = a.power_excess <= 1e-8 && a.probing_deficit <= 1e-6 && a.apv_violation <= 1e-9;
    return a;
}

struct SolverReport
{
    std::vector<IterationRecord> trace; // row 0 is the initial point
    SolverStatus status = SolverStatus::max_iters;
    BeamformerSet w;                    // best iterate by clamped sum secrecy
    rvec d;
    int best_iteration = 0;
    MetricsReport metrics;              // at (w, d)
    double initial_sum_secrecy = 0;
    FeasibilityAudit audit;
    std::vector<std::string> warnings;

    int iterations() const { return trace.empty() ? 0 : trace.back().iteration; }
};


/// Uniformly drawn feasible layout: M + 1 random gaps share the slack L - (M - 1) L0.
inline rvec random_layout(const Scenario& s, std::mt19937_64& rng)
{
    const auto& p = s.params();
    const auto M = s.num_antennas();
    std::exponential_distribution<double> e(1.0);
    rvec gaps(M + 1);
    for (auto& g : gaps) g = e(rng);
    gaps *= (p.aperture_length - (M - 1) * p.min_spacing) / gaps.sum();
    rvec d(M);
    d(0) = gaps(0);
    for (Eigen::Index m = 1; m < M; ++m) d(m) = d(m - 1) + p.min_spacing + gaps(m);
    return d;
}

inline rvec initial_layout(const Scenario& s, InitialLayout layout)
{
    if (layout == InitialLayout::compact || s.num_antennas() == 1) return uniform_layout(s);
    if (layout == InitialLayout::random) {
        std::mt19937_64 rng(0);
        return random_layout(s, rng);
    }
    return rvec::LinSpaced(s.num_antennas(), 0.0, s.params().aperture_length);
}

/// Matched filters sqrt(P_max / K) h_k / |h_k| on the given layout, mapped into C_BS ∩ C_d.
inline InitialPoint default_initial_point(const Scenario& s, InitialLayout layout = InitialLayout::compact)
{
    const auto& p = s.params();
    InitialPoint ip;
    ip.d = initial_layout(s, layout);
    const auto ch = build_channels(s, *ip.d);
    cmat w(s.num_antennas(), s.num_users());
    for (Eigen::Index k = 0; k < s.num_users(); ++k) {
        w.col(k) = std::sqrt(p.power_budget / s.num_users()) * ch.users[k].channel.normalized();
    }
    ip.w = restore_feasibility(BeamformerSet(w), ch.sensing_steering(), p.power_budget, p.probing_threshold);
    return ip;
}

/// Seeded random beamformers at full power. `layout` = random draws the positions too.
inline InitialPoint random_initial_point(const Scenario& s, std::uint64_t seed,
                                         InitialLayout layout = InitialLayout::compact)
{
    const auto& p = s.params();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    cmat w(s.num_antennas(), s.num_users());
    for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = complex_t(n(rng), n(rng));
    w *= std::sqrt(p.power_budget / w.squaredNorm());
    InitialPoint ip;
    ip.d = layout == InitialLayout::random ? random_layout(s, rng) : initial_layout(s, layout);
    const auto ch = build_channels(s, *ip.d);
    ip.w = restore_feasibility(BeamformerSet(w), ch.sensing_steering(), p.power_budget, p.probing_threshold);
    return ip;
}

/// Seed 0 selects the matched-filter start, any other seed a random one.
inline InitialPoint seeded_initial_point(const Scenario& s, std::uint64_t seed,
                                         InitialLayout layout = InitialLayout::compact)
{
    return seed == 0 ? default_initial_point(s, layout) : random_initial_point(s, seed, layout);
}

inline SolverReport bsum_solve(const Scenario& s, const InitialPoint& init = {}, const SolverOptions& opts = {})
{
    if (auto why = s.feasibility_diagnostic()) throw InfeasibleScenario(*why);
    const auto& p = s.params();
    const auto t0 = std::chrono::steady_clock::now();

    InitialPoint def;
    if (!init.w || !init.d) {
        def = default_initial_point(s, opts.optimize_positions ? opts.layout : InitialLayout::compact);
    }
    rvec d = init.d ? *init.d : *def.d;
    if (d.size() != s.num_antennas()) throw InvalidArgument("bsum_solve: initial positions have wrong length");
    if (apv_violation(d, p.aperture_length, p.min_spacing) > 1e-9) {
        throw InvalidArgument("bsum_solve: initial positions violate the box/spacing constraints");
    }
    ChannelSet ch = build_channels(s, d);
    BeamformerSet w = init.w ? *init.w : *def.w;
    if (w.num_antennas() != s.num_antennas() || w.num_users() != s.num_users()) {
        throw InvalidArgument("bsum_solve: initial beamformers have wrong shape");
    }
    w = restore_feasibility(w, ch.sensing_steering(), p.power_budget, p.probing_threshold);

    SolverReport rep;
    SurrogateState st = initial_surrogate(ch, w, s, opts.clamp_rates);
    auto record = [&](int it, double F, int nw, int nd) {
        const auto m = evaluate_metrics(s, ch, w);
        const auto a = audit_feasibility(s, w, d);
        IterationRecord r;
        r.iteration = it;
        r.surrogate = F;
        r.sum_secrecy = m.sum_secrecy;
        r.probing_power = m.probing_power;
        r.total_power = m.total_power;
        r.max_violation = std::max({a.power_excess * p.power_budget,
                                    a.probing_deficit * p.probing_threshold, a.apv_violation, 0.0});
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r.beamformer_iterations = nw;
        r.position_iterations = nd;
        rep.trace.push_back(r);
        if (it == 0 || m.sum_secrecy > rep.metrics.sum_secrecy) {
            rep.w = w;
            rep.d = d;
            rep.metrics = m;
            rep.best_iteration = it;
        }
    };

    double F_prev = eval_surrogate(ch, w, st).total();
    record(0, F_prev, 0, 0);
    rep.initial_sum_secrecy = rep.metrics.sum_secrecy;

    for (int it = 1; it <= opts.max_outer; ++it) {
        if (it > 1) update_auxiliaries(ch, w, st, s);

        auto wb = solve_beamformer_block(ch, st, w, s, opts.pda);
        w = wb.w;
        if (!wb.converged) rep.warnings.push_back("outer " + std::to_string(it) + ": beamformer block hit max_inner");

        int nd = 0;
        bool d_stalled = false;
        if (opts.optimize_positions) {
            if (opts.refresh_before_positions) update_auxiliaries(ch, w, st, s);
            auto db = solve_apv_block(ch, w, st, d, s, opts.epg);
            nd = db.iterations;
            d_stalled = db.stalled && db.iterations <= 1;
            if (db.projection_fallback) {
                rep.warnings.push_back("outer " + std::to_string(it) + ": relaxed probing set empty, polyhedron projection used");
            }
            d = db.d;
            ch = build_channels(s, d);
            rebuild_caches(ch, st, s);
        }

        const double F = eval_surrogate(ch, w, st).total();
        record(it, F, wb.iterations, nd);
        const double change = std::abs(F_prev - F);
        F_prev = F;
        if (change <= opts.tol * std::abs(F)) {
            rep.status = (change == 0 && !wb.improved && (d_stalled || !opts.optimize_positions) && !wb.converged)
                             ? SolverStatus::stalled : SolverStatus::converged;
            break;
        }
    }

    rep.audit = audit_feasibility(s, rep.w, rep.d);
    if (!rep.audit.passed) throw NumericalError("bsum_solve: final iterate failed the feasibility audit");
    return rep;
}

/// Beamformer-only optimization on the compact uniform layout.
inline SolverReport fpa_baseline(const Scenario& s, const InitialPoint& init = {}, SolverOptions opts = {})
{
    opts.optimize_positions = false;
    InitialPoint ip = init;
    ip.d = uniform_layout(s);
    return bsum_solve(s, ip, opts);
}

/// Seed 0 is the default start; other seeds draw random beamformers and a random layout.
inline InitialPoint solver_start(const Scenario& s, std::uint64_t seed)
{
    return seed == 0 ? InitialPoint{} : random_initial_point(s, seed, InitialLayout::random);
}

/*
 * Best of `starts` runs from seeds first_seed, first_seed + 1, ... (see
 * solver_start). Each run is an ordinary bsum_solve; the position block is
 * local, so this is the only globalization offered.
 */
inline SolverReport bsum_multistart(const Scenario& s, int starts, const SolverOptions& opts = {},
                                    std::uint64_t first_seed = 0)
{
    if (starts < 1) throw InvalidArgument("bsum_multistart: starts must be >= 1");
    SolverReport best;
    for (int i = 0; i < starts; ++i) {
        auto rep = bsum_solve(s, solver_start(s, first_seed + i), opts);
        if (i == 0 || rep.metrics.sum_secrecy > best.metrics.sum_secrecy) best = std::move(rep);
    }
    return best;
}

} // namespace fasec
