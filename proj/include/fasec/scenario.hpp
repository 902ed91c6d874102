#pragma once
#include <cmath>
#include <optional>
#include <string>
#include <vector>
#include <fasec/errors.hpp>
#include <fasec/types.hpp>

namespace fasec {

// How the propagation gain enters the channel. `amplitude` multiplies the
// steering vector by g0 * d^-alpha directly; `power` treats g0 * d^-alpha as a
// power ratio and uses its square root.
enum class GainConvention { amplitude, power };

/*
 * Raw problem description. All angles in radians, lengths in meters, powers
 * in watts, gains linear. Unit conversion happens at the config boundary.
 */
struct ScenarioParams
{
    int num_antennas = 0;
    int num_users = 0;
    double aperture_length = 0;
    double min_spacing = 0;
    double wavelength = 0;
    std::vector<double> user_angles;
    double sensing_angle = 0;
    // Empty means {sensing_angle}. When given, the first entry must equal
    // sensing_angle; the rest are extra eavesdroppers.
    std::vector<double> eavesdropper_angles;
    std::vector<double> user_distances;
    double target_distance = 0;
    // Optional per-eavesdropper distances; empty means target_distance for all.
    std::vector<double> eavesdropper_distances;
    double reference_gain = 0;
    double pathloss_exponent = 0;
    std::vector<double> noise_user;
    double noise_eve = 0;
    double power_budget = 0;
    double probing_threshold = 0;
    GainConvention gain_convention = GainConvention::amplitude;
};

inline double propagation_gain(double reference_gain, double distance, double exponent)
{
    if (!(reference_gain > 0) || !(distance > 0) || !std::isfinite(exponent) || exponent < 0) {
        throw InvalidArgument("propagation_gain: reference gain and distance must be positive, "
                              "exponent finite and nonnegative");
    }
    return reference_gain * std::pow(distance, -exponent);
}

/*
 * Validated, immutable problem instance. Construction checks every structural
 * invariant; satisfiability of the probing constraint (P_d <= M * P_max) is
 * reported separately by feasibility_diagnostic() so callers can tell a bad
 * config from an infeasible one.
 */
class Scenario
{
public:
    explicit Scenario(ScenarioParams p) : p_(std::move(p))
    {
        if (p_.eavesdropper_angles.empty()) p_.eavesdropper_angles = {p_.sensing_angle};
        if (p_.eavesdropper_distances.empty()) {
            p_.eavesdropper_distances.assign(p_.eavesdropper_angles.size(), p_.target_distance);
        }
        validate();
        for (int k = 0; k < p_.num_users; ++k) {
            user_gain_.push_back(link_gain(p_.user_distances[k]));
        }
        for (double d : p_.eavesdropper_distances) eve_gain_.push_back(link_gain(d));
    }

    const ScenarioParams& params() const noexcept { return p_; }
    Eigen::Index num_antennas() const noexcept { return p_.num_antennas; }
    Eigen::Index num_users() const noexcept { return p_.num_users; }
    Eigen::Index num_eves() const noexcept { return static_cast<Eigen::Index>(p_.eavesdropper_angles.size()); }

    double user_gain(Eigen::Index k) const { return user_gain_.at(k); }
    double eve_gain(Eigen::Index q) const { return eve_gain_.at(q); }

    /// Empty when C_d and C_BS intersect; otherwise a human-readable reason.
    std::optional<std::string> feasibility_diagnostic() const
    {
        const double max_probing = p_.num_antennas * p_.power_budget;
        if (p_.probing_threshold > max_probing) {
            return "probing threshold " + std::to_string(p_.probing_threshold) +
                   " W exceeds the maximum achievable probing power M*P_max = " +
                   std::to_string(max_probing) + " W";
        }
        return std::nullopt;
    }

private:
    double link_gain(double distance) const
    {
        const double g = propagation_gain(p_.reference_gain, distance, p_.pathloss_exponent);
        return p_.gain_convention == GainConvention::power ? std::sqrt(g) : g;
    }

    void validate() const
    {
        auto fail = [](const std::string& msg) { throw InvalidArgument("scenario: " + msg); };
        auto angle_ok = [](double a) { return std::isfinite(a) && a > 0 && a < pi; };
        auto positive = [](double x) { return std::isfinite(x) && x > 0; };

        if (p_.num_antennas < 1) fail("num_antennas must be >= 1");
        if (p_.num_users < 1) fail("num_users must be >= 1");
        if (!positive(p_.aperture_length)) fail("aperture_length must be > 0");
        if (!positive(p_.min_spacing)) fail("min_spacing must be > 0");
        if (!positive(p_.wavelength)) fail("wavelength must be > 0");
        if ((p_.num_antennas - 1) * p_.min_spacing > p_.aperture_length * (1 + 1e-12)) {
            fail("(M-1)*min_spacing exceeds aperture_length; no feasible antenna layout");
        }
        const auto K = static_cast<std::size_t>(p_.num_users);
        if (p_.user_angles.size() != K) fail("user_angles must have num_users entries");
        if (p_.user_distances.size() != K) fail("user_distances must have num_users entries");
        if (p_.noise_user.size() != K) fail("noise_user must have num_users entries");
        for (double a : p_.user_angles) if (!angle_ok(a)) fail("user angles must lie in (0, pi)");
        if (!angle_ok(p_.sensing_angle)) fail("sensing_angle must lie in (0, pi)");
        for (double a : p_.eavesdropper_angles) if (!angle_ok(a)) fail("eavesdropper angles must lie in (0, pi)");
        if (p_.eavesdropper_angles.front() != p_.sensing_angle) {
            fail("first eavesdropper angle must equal sensing_angle");
        }
        if (p_.eavesdropper_distances.size() != p_.eavesdropper_angles.size()) {
            fail("eavesdropper_distances must match eavesdropper_angles in length");
        }
        for (double d : p_.user_distances) if (!positive(d)) fail("user distances must be > 0");
        if (!positive(p_.target_distance)) fail("target_distance must be > 0");
        for (double d : p_.eavesdropper_distances) if (!positive(d)) fail("eavesdropper distances must be > 0");
        if (!positive(p_.reference_gain)) fail("reference_gain must be > 0");
        if (!std::isfinite(p_.pathloss_exponent) || p_.pathloss_exponent < 0) {
            fail("pathloss_exponent must be finite and >= 0");
        }
        for (double s : p_.noise_user) if (!positive(s)) fail("user noise powers must be > 0");
        if (!positive(p_.noise_eve)) fail("noise_eve must be > 0");
        if (!positive(p_.power_budget)) fail("power_budget must be > 0");
        // P_d = 0 switches the probing constraint off.
        if (!std::isfinite(p_.probing_threshold) || p_.probing_threshold < 0) {
            fail("probing_threshold must be finite and >= 0");
        }
    }

    ScenarioParams p_;
    std::vector<double> user_gain_;
    std::vector<double> eve_gain_;
};

// ---------------------------------------------------------------------------
// Antenna positions
// ---------------------------------------------------------------------------

/// Largest violation (meters) of 0 <= d_1, d_M <= L, d_m - d_{m-1} >= L0.
inline double apv_violation(const Eigen::Ref<const rvec>& d, double aperture, double min_spacing)
{
    if (d.size() == 0) return 0.0;
    double v = std::max(0.0, -d(0));
    v = std::max(v, d(d.size() - 1) - aperture);
    for (Eigen::Index m = 1; m < d.size(); ++m) {
        v = std::max(v, min_spacing - (d(m) - d(m - 1)));
    }
    return v;
}

/*
 * Antenna position vector together with its distance from the feasible set.
 * Iterates of the position solver may be slightly infeasible; callers decide
 * what tolerance to accept.
 */
struct ApvState
{
    rvec positions;
    double violation = 0.0;

    static ApvState make(rvec d, const Scenario& s)
    {
        const double v = apv_violation(d, s.params().aperture_length, s.params().min_spacing);
        return {std::move(d), v};
    }
    bool feasible(double tol = 1e-9) const noexcept { return violation <= tol; }
};

/// Uniform layout spaced max(lambda/2, L0), centered in [0, L].
inline rvec uniform_layout(const Scenario& s)
{
    const auto& p = s.params();
    const auto M = s.num_antennas();
    const double spacing = std::max(p.wavelength / 2, p.min_spacing);
    const double span = spacing * static_cast<double>(M - 1);
    if (span > p.aperture_length) {
        throw InfeasibleScenario("uniform half-wavelength layout does not fit in the aperture");
    }
    const double start = 0.5 * (p.aperture_length - span);
    rvec d(M);
    for (Eigen::Index m = 0; m < M; ++m) d(m) = start + spacing * static_cast<double>(m);
    return d;
}

// ---------------------------------------------------------------------------
// Steering vectors and channels
// ---------------------------------------------------------------------------

inline double phase_rate(double angle, double wavelength)
{
    if (!std::isfinite(angle)) throw InvalidArgument("phase_rate: non-finite angle");
    if (!(wavelength > 0) || !std::isfinite(wavelength)) {
        throw InvalidArgument("phase_rate: wavelength must be positive");
    }
    return 2.0 * pi / wavelength * std::cos(angle);
}

/// a(d, angle) with entries exp(j * (2 pi / lambda) cos(angle) * d_m).
inline cvec steering_vector(const Eigen::Ref<const rvec>& d, double angle, double wavelength)
{
    const double v = phase_rate(angle, wavelength);
    cvec a(d.size());
    for (Eigen::Index m = 0; m < d.size(); ++m) a(m) = std::polar(1.0, v * d(m));
    return a;
}

struct Link
{
    cvec steering;   // unit modulus
    cvec channel;    // gain * steering
    double gain = 0; // linear amplitude
    double phase_rate = 0;
};

/*
 * LoS channels for every user and eavesdropper at one antenna layout.
 * eves.front() is the sensing target; its steering vector also defines the
 * probing direction.
 */
struct ChannelSet
{
    rvec positions;
    std::vector<Link> users;
    std::vector<Link> eves;

    const cvec& sensing_steering() const { return eves.front().steering; }
    Eigen::Index num_antennas() const noexcept { return positions.size(); }
    Eigen::Index num_users() const noexcept { return static_cast<Eigen::Index>(users.size()); }
};

inline Link make_link(const Eigen::Ref<const rvec>& d, double angle, double wavelength, double gain)
{
    Link l;
    l.steering = steering_vector(d, angle, wavelength);
    l.channel = gain * l.steering;
    l.gain = gain;
    l.phase_rate = phase_rate(angle, wavelength);
    return l;
}

inline ChannelSet build_channels(const Scenario& s, const Eigen::Ref<const rvec>& d)
{
    if (d.size() != s.num_antennas()) {
        throw InvalidArgument("build_channels: position vector length does not match num_antennas");
    }
    const auto& p = s.params();
    ChannelSet ch;
    ch.positions = d;
    ch.users.reserve(p.num_users);
    for (Eigen::Index k = 0; k < s.num_users(); ++k) {
        ch.users.push_back(make_link(d, p.user_angles[k], p.wavelength, s.user_gain(k)));
    }
    for (Eigen::Index q = 0; q < s.num_eves(); ++q) {
        ch.eves.push_back(make_link(d, p.eavesdropper_angles[q], p.wavelength, s.eve_gain(q)));
    }
    return ch;
}

} // namespace fasec
