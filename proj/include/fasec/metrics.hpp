#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>
#include <fasec/scenario.hpp>

namespace fasec {

/// K transmit beamformers stored as the columns of an M x K matrix.
struct BeamformerSet
{
    cmat w;

    BeamformerSet() = default;
    explicit BeamformerSet(cmat columns) : w(std::move(columns)) {}
    static BeamformerSet zeros(Eigen::Index M, Eigen::Index K) { return BeamformerSet(cmat::Zero(M, K)); }

    Eigen::Index num_antennas() const noexcept { return w.rows(); }
    Eigen::Index num_users() const noexcept { return w.cols(); }
    auto stream(Eigen::Index k) const { return w.col(k); }
    double total_power() const { return w.squaredNorm(); }
    /// R_w = sum_k w_k w_k^H.
    cmat covariance() const { return w * w.adjoint(); }
};

namespace detail {

inline void check_index(Eigen::Index k, Eigen::Index K, const char* what)
{
    if (k < 0 || k >= K) throw InvalidArgument(std::string(what) + ": user index out of range");
}

// |h^H w_i|^2 for all i, optionally excluding one stream.
inline double received_power(const cvec& h, const cmat& w, Eigen::Index exclude = -1)
{
    double acc = 0;
    for (Eigen::Index i = 0; i < w.cols(); ++i) {
        if (i == exclude) continue;
        acc += std::norm(h.dot(w.col(i)));
    }
    return acc;
}

} // namespace detail

/// gamma_k = |h_k^H w_k|^2 / (sum_{i != k} |h_k^H w_i|^2 + sigma_k^2).
inline double user_sinr(const ChannelSet& ch, const BeamformerSet& w, Eigen::Index k, double noise)
{
    detail::check_index(k, w.num_users(), "user_sinr");
    const cvec& h = ch.users.at(k).channel;
    return std::norm(h.dot(w.stream(k))) / (detail::received_power(h, w.w, k) + noise);
}

/// SINR of stream k at eavesdropper `eve` (0 is the sensing target).
inline double eve_sinr(const ChannelSet& ch, const BeamformerSet& w, Eigen::Index k, double noise,
                       std::size_t eve = 0)
{
    detail::check_index(k, w.num_users(), "eve_sinr");
    const cvec& h = ch.eves.at(eve).channel;
    return std::norm(h.dot(w.stream(k))) / (detail::received_power(h, w.w, k) + noise);
}

/// [log2(1 + gamma_user) - log2(1 + gamma_eve)]^+ in bits/s/Hz.
inline double secrecy_rate(double gamma_user, double gamma_eve)
{
    if (!(gamma_user >= 0) || !(gamma_eve >= 0)) {
        throw InvalidArgument("secrecy_rate: SINRs must be nonnegative");
    }
    return std::max(0.0, (std::log1p(gamma_user) - std::log1p(gamma_eve)) / std::log(2.0));
}

/// a^H R_w a = sum_k |a^H w_k|^2 for a precomputed steering vector.
inline double probing_power(const cvec& steering, const BeamformerSet& w)
{
    return (steering.adjoint() * w.w).squaredNorm();
}

inline double probing_power(const Eigen::Ref<const rvec>& d, const BeamformerSet& w, double angle,
                            double wavelength)
{
    return probing_power(steering_vector(d, angle, wavelength), w);
}

inline std::vector<double> beampattern(const Eigen::Ref<const rvec>& d, const BeamformerSet& w,
                                       double wavelength, const std::vector<double>& angle_grid)
{
    if (angle_grid.empty()) throw InvalidArgument("beampattern: empty angle grid");
    std::vector<double> out;
    out.reserve(angle_grid.size());
    for (double a : angle_grid) out.push_back(probing_power(d, w, a, wavelength));
    return out;
}

struct MetricsReport
{
    std::vector<double> user_sinrs;
    // eve_sinrs[q][k]: SINR of stream k at eavesdropper q.
    std::vector<std::vector<double>> eve_sinrs;
    std::vector<double> secrecy_rates;
    double sum_secrecy = 0;
    // Sum of log2(1+gamma_k) - max_q log2(1+gamma_{e,k}) without the positive part.
    double unclamped_sum_secrecy = 0;
    double probing_power = 0;
    double total_power = 0;

    /// Worst-case (largest) eavesdropper SINR for stream k.
    double worst_eve_sinr(std::size_t k) const
    {
        double g = 0;
        for (const auto& per_eve : eve_sinrs) g = std::max(g, per_eve.at(k));
        return g;
    }

    static std::string csv_header(std::size_t num_users)
    {
        std::string h = "seed,iteration,sum_secrecy";
        for (std::size_t k = 0; k < num_users; ++k) h += ",secrecy_" + std::to_string(k + 1);
        return h + ",probing_power,total_power";
    }

    std::string csv_row(std::uint64_t seed, std::size_t iteration) const
    {
        std::ostringstream os;
        os.precision(17);
        os << seed << ',' << iteration << ',' << sum_secrecy;
        for (double c : secrecy_rates) os << ',' << c;
        os << ',' << probing_power << ',' << total_power;
        return os.str();
    }
};

inline MetricsReport evaluate_metrics(const Scenario& s, const ChannelSet& ch, const BeamformerSet& w)
{
    const auto& p = s.params();
    const auto K = w.num_users();
    MetricsReport r;
    r.eve_sinrs.assign(ch.eves.size(), std::vector<double>(K));
    for (Eigen::Index k = 0; k < K; ++k) {
        r.user_sinrs.push_back(user_sinr(ch, w, k, p.noise_user[k]));
        for (std::size_t q = 0; q < ch.eves.size(); ++q) {
            r.eve_sinrs[q][k] = eve_sinr(ch, w, k, p.noise_eve, q);
        }
    }
    for (Eigen::Index k = 0; k < K; ++k) {
        const double ge = r.worst_eve_sinr(k);
        const double c = secrecy_rate(r.user_sinrs[k], ge);
        r.secrecy_rates.push_back(c);
        r.sum_secrecy += c;
        r.unclamped_sum_secrecy += (std::log1p(r.user_sinrs[k]) - std::log1p(ge)) / std::log(2.0);
    }
    r.probing_power = probing_power(ch.sensing_steering(), w);
    r.total_power = w.total_power();
    return r;
}

} // namespace fasec
