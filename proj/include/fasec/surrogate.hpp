#pragma once
#include <cmath>
#include <vector>
#include <fasec/metrics.hpp>

namespace fasec {

/*
 * Block-successive upper-bound surrogate of the negative sum secrecy rate.
 *
 * For fixed auxiliaries the surrogate is a convex quadratic in the
 * beamformers. Per user k and eavesdropper e (c_i = h_e^H w_i,
 * S = sum_i |c_i|^2, I_k = S - |c_k|^2):
 *
 *   user:  rho_k [1 - 2Re{u_k^* h_k^H w_k} + |u_k|^2 (sum_i |h_k^H w_i|^2 + s_k)]
 *            - ln rho_k - 1                                       >= -ln(1 + gamma_k)
 *   eve:   tau_k (S + s_e) - ln tau_k - 1                           >=  ln(S + s_e)
 *          omega_k [1 - 2Re{sum_{i!=k} v_ki^* c_i} + |v_k|^2 (I_k + s_e)]
 *            - ln omega_k - 1 - ln s_e                              >= -ln(I_k + s_e)
 *
 * with omega_k = 1 / (s_e eta_k tau_k) and v_ki = -j eta_k xi_i. Each bound
 * is tight at the closed-form auxiliaries of update_auxiliaries(), where
 * rho_k = 1 + gamma_k and eta_k = 1 + gamma_{e,k}, so the surrogate equals
 * -ln 2 times the unclamped sum secrecy rate (summed over eavesdroppers).
 *
 * Collecting terms gives, for stream i,
 *   w_i^H (A + T + E - E_i) w_i - 2 Re{(b_i + g_i)^H w_i}
 * with A = sum_k rho_k |u_k|^2 h_k h_k^H, b_k = rho_k u_k h_k,
 * T = sum_k tau_k h_e h_e^H, E_k = omega_k |v_k|^2 h_e h_e^H and
 * g_i = sum_{k != i} omega_k v_ki h_e.
 *
 * Restricting both sums to the users with [C_k]^+ = C_k at the expansion
 * point still gives a majorant of -ln 2 * sum_k [C_k]^+, tight there, so the
 * same machinery can descend on the clamped sum (clamp_rates).
 */

struct EveAuxiliaries
{
    cvec xi;  // eavesdropper MMSE receiver per stream
    rvec eta; // 1 + gamma_{e,k} at the optimum
    rvec tau; // 1 / (S + s_e) at the optimum
};

// Weights of one link in the surrogate: quad(i) |h^H w_i|^2 - 2 Re{lin(i)^* h^H w_i}.
struct LinkWeights
{
    rvec quad;
    cvec lin;
};

struct SurrogateWeights
{
    std::vector<LinkWeights> users;
    std::vector<LinkWeights> eves;
    double constant = 0; // auxiliary-only part
};

struct SurrogateState
{
    cvec u;
    rvec rho;
    std::vector<EveAuxiliaries> eves;
    double penalty_weight = 0;
    // Users whose terms enter the surrogate. All users unless clamp_rates is
    // set, in which case update_auxiliaries keeps only users whose secrecy
    // rate is nonnegative at the expansion point.
    std::vector<bool> active;
    bool clamp_rates = false;

    // Caches consistent with the channel set passed to rebuild_caches().
    cmat A;
    cmat T;
    std::vector<cmat> E_k;
    cmat E;
    cmat b; // column k is b_k
    cmat g; // column k is g_k
    SurrogateWeights weights;

    /// Quadratic operator A + T + E - E_k acting on stream k.
    cmat stream_operator(Eigen::Index k) const { return A + T + E - E_k[k]; }
    /// Linear coefficient b_k + g_k.
    cvec stream_rhs(Eigen::Index k) const { return b.col(k) + g.col(k); }
};

struct SurrogateValue
{
    double dependent = 0; // terms that depend on (w, d)
    double constant = 0;  // auxiliary-only terms
    double total() const { return dependent + constant; }
};

namespace detail {

// omega_k, |v_k|^2 and t_k = omega_k |v_k|^2 of one eavesdropper block.
struct EveTerms
{
    rvec omega;
    rvec vnorm2;
    rvec t;
};

inline EveTerms eve_terms(const EveAuxiliaries& ea, double noise_eve)
{
    if ((ea.eta.array() <= 0).any() || (ea.tau.array() <= 0).any()) {
        throw NumericalError("surrogate: eta and tau must be positive");
    }
    const auto K = ea.xi.size();
    const double xi_energy = ea.xi.squaredNorm();
    EveTerms e{rvec(K), rvec(K), rvec(K)};
    for (Eigen::Index k = 0; k < K; ++k) {
        e.omega(k) = 1.0 / (noise_eve * ea.eta(k) * ea.tau(k));
        e.vnorm2(k) = ea.eta(k) * ea.eta(k) * std::max(0.0, xi_energy - std::norm(ea.xi(k)));
    }
    e.t = e.omega.cwiseProduct(e.vnorm2);
    return e;
}

} // namespace detail

inline bool is_active(const SurrogateState& st, Eigen::Index k)
{
    return st.active.empty() || st.active[static_cast<std::size_t>(k)];
}

inline SurrogateWeights surrogate_weights(const SurrogateState& st, const Scenario& s)
{
    const auto& p = s.params();
    const auto K = st.u.size();
    const double se = p.noise_eve;
    SurrogateWeights out;

    for (Eigen::Index k = 0; k < K; ++k) {
        if (!(st.rho(k) > 0)) throw NumericalError("surrogate: rho must be positive");
        LinkWeights lw;
        lw.quad = rvec::Zero(K);
        lw.lin = cvec::Zero(K);
        if (is_active(st, k)) {
            lw.quad.setConstant(st.rho(k) * std::norm(st.u(k)));
            lw.lin(k) = st.rho(k) * st.u(k);
            out.constant += st.rho(k) * (1 + std::norm(st.u(k)) * p.noise_user[k]) - std::log(st.rho(k)) - 1;
        }
        out.users.push_back(std::move(lw));
    }

    for (const auto& ea : st.eves) {
        const auto e = detail::eve_terms(ea, se);
        double tau_sum = 0, t_sum = 0, inv_tau_sum = 0;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (!is_active(st, k)) continue;
            tau_sum += ea.tau(k);
            t_sum += e.t(k);
            inv_tau_sum += 1.0 / (se * ea.tau(k));
        }

        // sum_{k != i} omega_k v_ki = -j xi_i sum_{k != i} 1 / (s_e tau_k)
        LinkWeights lw;
        lw.quad.resize(K);
        lw.lin.resize(K);
        for (Eigen::Index i = 0; i < K; ++i) {
            const bool own = is_active(st, i);
            lw.quad(i) = tau_sum + t_sum - (own ? e.t(i) : 0.0);
            lw.lin(i) = -imag_unit * ea.xi(i) * (inv_tau_sum - (own ? 1.0 / (se * ea.tau(i)) : 0.0));
        }
        out.eves.push_back(std::move(lw));

        for (Eigen::Index k = 0; k < K; ++k) {
            if (!is_active(st, k)) continue;
            out.constant += ea.tau(k) * se - std::log(ea.tau(k)) - 1;
            out.constant += e.omega(k) * (1 + e.vnorm2(k) * se) - std::log(e.omega(k)) - 1 - std::log(se);
        }
    }
    return out;
}

/// Recompute A, T, E_k, E, b_k, g_k and the link weights for the current channels.
inline void rebuild_caches(const ChannelSet& ch, SurrogateState& st, const Scenario& s)
{
    const auto M = ch.num_antennas();
    const auto K = st.u.size();
    st.weights = surrogate_weights(st, s);

    st.A = cmat::Zero(M, M);
    st.b = cmat::Zero(M, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const cvec& h = ch.users[k].channel;
        st.A.noalias() += st.weights.users[k].quad(0) * (h * h.adjoint());
        st.b.col(k) = st.weights.users[k].lin(k) * h;
    }

    st.T = cmat::Zero(M, M);
    st.E_k.assign(K, cmat::Zero(M, M));
    st.g = cmat::Zero(M, K);
    for (std::size_t q = 0; q < st.eves.size(); ++q) {
        const auto& ea = st.eves[q];
        const auto e = detail::eve_terms(ea, s.params().noise_eve);
        const cvec& h = ch.eves[q].channel;
        const cmat hh = h * h.adjoint();
        st.T += ea.tau.sum() * hh;
        for (Eigen::Index k = 0; k < K; ++k) {
            if (is_active(st, k)) st.E_k[k] += e.t(k) * hh;
            st.g.col(k) += st.weights.eves[q].lin(k) * h;
        }
    }
    st.E = cmat::Zero(M, M);
    for (const auto& e : st.E_k) st.E += e;
}

/// Closed-form block minimizer over (u, rho, xi, eta, tau); caches are rebuilt.
inline void update_auxiliaries(const ChannelSet& ch, const BeamformerSet& w, SurrogateState& st,
                               const Scenario& s)
{
    const auto& p = s.params();
    const auto K = w.num_users();
    st.u.resize(K);
    st.rho.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        const cvec& h = ch.users[k].channel;
        const complex_t c = h.dot(w.stream(k));
        st.u(k) = c / (detail::received_power(h, w.w) + p.noise_user[k]);
        const double denom = 1.0 - (std::conj(st.u(k)) * c).real();
        if (!(denom > 0)) throw NumericalError("update_auxiliaries: nonpositive rho denominator");
        st.rho(k) = 1.0 / denom;
    }

    st.eves.resize(ch.eves.size());
    for (std::size_t q = 0; q < ch.eves.size(); ++q) {
        const cvec& h = ch.eves[q].channel;
        auto& ea = st.eves[q];
        ea.xi.resize(K);
        ea.eta.resize(K);
        const double total = detail::received_power(h, w.w) + p.noise_eve;
        ea.tau = rvec::Constant(K, 1.0 / total);
        for (Eigen::Index k = 0; k < K; ++k) {
            const complex_t c = h.dot(w.stream(k));
            ea.xi(k) = imag_unit * c / total;
            const double denom = (1.0 - imag_unit * std::conj(ea.xi(k)) * c).real();
            if (!(denom > 0)) throw NumericalError("update_auxiliaries: nonpositive eta denominator");
            ea.eta(k) = 1.0 / denom;
        }
    }

    st.active.assign(static_cast<std::size_t>(K), true);
    if (st.clamp_rates) {
        // rho = 1 + gamma and eta = 1 + gamma_e, so the rate sign needs no extra SINR evaluation
        for (Eigen::Index k = 0; k < K; ++k) {
            double leak = 0;
            for (const auto& ea : st.eves) leak += std::log(ea.eta(k));
            st.active[k] = std::log(st.rho(k)) >= leak;
        }
    }
    rebuild_caches(ch, st, s);
}

/// Surrogate value through the per-link weights.
inline SurrogateValue eval_surrogate(const ChannelSet& ch, const BeamformerSet& w, const SurrogateState& st)
{
    SurrogateValue v;
    v.constant = st.weights.constant;
    auto link_term = [&](const Link& l, const LinkWeights& lw) {
        const Eigen::RowVectorXcd z = l.channel.adjoint() * w.w;
        double acc = 0;
        for (Eigen::Index i = 0; i < w.num_users(); ++i) {
            acc += lw.quad(i) * std::norm(z(i)) - 2.0 * (std::conj(lw.lin(i)) * z(i)).real();
        }
        return acc;
    };
    for (std::size_t k = 0; k < ch.users.size(); ++k) v.dependent += link_term(ch.users[k], st.weights.users[k]);
    for (std::size_t q = 0; q < ch.eves.size(); ++q) v.dependent += link_term(ch.eves[q], st.weights.eves[q]);
    return v;
}

/// Same value assembled from the cached matrices; used to cross-check the caches.
inline double eval_surrogate_from_caches(const BeamformerSet& w, const SurrogateState& st)
{
    double acc = st.weights.constant;
    for (Eigen::Index k = 0; k < w.num_users(); ++k) {
        const auto wk = w.stream(k);
        acc += wk.dot(st.stream_operator(k) * wk).real() - 2.0 * st.stream_rhs(k).dot(wk).real();
    }
    return acc;
}

inline SurrogateState initial_surrogate(const ChannelSet& ch, const BeamformerSet& w, const Scenario& s,
                                        bool clamp_rates = false)
{
    SurrogateState st;
    st.clamp_rates = clamp_rates;
    update_auxiliaries(ch, w, st, s);
    return st;
}

} // namespace fasec
