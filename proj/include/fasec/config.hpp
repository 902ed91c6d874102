#pragma once
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <json.hpp>
#include <fasec/driver.hpp>

namespace fasec {

/*
 * JSON scenario files. Quantities are numbers or strings with a unit suffix:
 *   angles   "60 deg", "1.047 rad"; bare numbers are degrees
 *   lengths  "10 lambda", "5 mm", "0.1 m"; bare numbers are meters
 *   powers   "30 dBm", "3 W", "100 mW"; bare numbers are watts
 *   gains    "-40 dB"; bare numbers are linear ratios
 * Per-user lists accept a single value, which is repeated K times.
 *
 * Every scenario key is required except eavesdropper_angles,
 * eavesdropper_distances and gain_convention. The optional "solver" block
 * overrides SolverOptions and verification settings.
 */
struct RunConfig
{
    ScenarioParams scenario;
    SolverOptions solver;
    int starts = 1;         // multi-start count for run/sweep
    double fd_step = 1e-6;  // meters, used by verify
    std::string hash;       // FNV-1a of the canonical JSON text
};

namespace config_detail {

enum class Unit { angle, length, power, gain, plain };

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

/// Quantity in SI units (radians, meters, watts, linear ratio).
inline double parse_quantity(const nlohmann::json& v, Unit unit, const std::string& key, double wavelength = 0)
{
    auto fail = [&](const std::string& why) -> double { throw ConfigError("'" + key + "': " + why); };
    if (v.is_number()) {
        const double x = v.get<double>();
        return unit == Unit::angle ? deg_to_rad(x) : x;
    }
    if (!v.is_string()) return fail("expected a number or a string with a unit");
    const std::string text = trim(v.get<std::string>());
    std::size_t used = 0;
    double x = 0;
    try {
        x = std::stod(text, &used);
    } catch (const std::exception&) {
        return fail("cannot read a number from \"" + text + "\"");
    }
    const std::string suffix = trim(text.substr(used));
    switch (unit) {
    case Unit::angle:
        if (suffix == "deg" || suffix.empty()) return deg_to_rad(x);
        if (suffix == "rad") return x;
        break;
    case Unit::length:
        if (suffix == "m" || suffix.empty()) return x;
        if (suffix == "mm") return 1e-3 * x;
        if (suffix == "cm") return 1e-2 * x;
        if (suffix == "lambda") {
            if (!(wavelength > 0)) return fail("'lambda' needs a positive wavelength");
            return x * wavelength;
        }
        break;
    case Unit::power:
        if (suffix == "W" || suffix.empty()) return x;
        if (suffix == "mW") return 1e-3 * x;
        if (suffix == "dBm") return dbm_to_watts(x);
        if (suffix == "dBW") return db_to_linear(x);
        break;
    case Unit::gain:
        if (suffix.empty()) return x;
        if (suffix == "dB") return db_to_linear(x);
        break;
    case Unit::plain:
        if (suffix.empty()) return x;
        break;
    }
    return fail("unsupported unit \"" + suffix + "\"");
}

inline const nlohmann::json& require(const nlohmann::json& j, const std::string& key)
{
    if (!j.contains(key)) throw ConfigError("missing key '" + key + "'");
    return j.at(key);
}

inline std::vector<double> parse_list(const nlohmann::json& v, Unit unit, const std::string& key, std::size_t n,
                                      double wavelength = 0)
{
    std::vector<double> out;
    if (v.is_array()) {
        for (const auto& e : v) out.push_back(parse_quantity(e, unit, key, wavelength));
        if (n > 0 && out.size() != n) {
            throw ConfigError("'" + key + "': expected " + std::to_string(n) + " entries, got " + std::to_string(out.size()));
        }
    } else {
        out.assign(n == 0 ? 1 : n, parse_quantity(v, unit, key, wavelength));
    }
    return out;
}

inline int parse_int(const nlohmann::json& v, const std::string& key)
{
    if (!v.is_number_integer()) throw ConfigError("'" + key + "': expected an integer");
    return v.get<int>();
}

} // namespace config_detail

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline RunConfig parse_config(const nlohmann::json& j)
{
    using namespace config_detail;
    if (!j.is_object()) throw ConfigError("top level must be a JSON object");
    RunConfig rc;
    auto& p = rc.scenario;
    p.num_antennas = parse_int(require(j, "num_antennas"), "num_antennas");
    p.num_users = parse_int(require(j, "num_users"), "num_users");
    if (p.num_antennas < 1 || p.num_users < 1) throw ConfigError("num_antennas and num_users must be >= 1");
    const auto K = static_cast<std::size_t>(p.num_users);

    p.wavelength = parse_quantity(require(j, "wavelength"), Unit::length, "wavelength");
    p.aperture_length = parse_quantity(require(j, "aperture_length"), Unit::length, "aperture_length", p.wavelength);
    p.min_spacing = parse_quantity(require(j, "min_spacing"), Unit::length, "min_spacing", p.wavelength);
    p.user_angles = parse_list(require(j, "user_angles"), Unit::angle, "user_angles", K);
    p.sensing_angle = parse_quantity(require(j, "sensing_angle"), Unit::angle, "sensing_angle");
    if (j.contains("eavesdropper_angles")) {
        p.eavesdropper_angles = parse_list(j.at("eavesdropper_angles"), Unit::angle, "eavesdropper_angles", 0);
    }
    p.user_distances = parse_list(require(j, "user_distances"), Unit::length, "user_distances", K, p.wavelength);
    p.target_distance = parse_quantity(require(j, "target_distance"), Unit::length, "target_distance", p.wavelength);
    if (j.contains("eavesdropper_distances")) {
        p.eavesdropper_distances =
            parse_list(j.at("eavesdropper_distances"), Unit::length, "eavesdropper_distances", 0, p.wavelength);
    }
    p.reference_gain = parse_quantity(require(j, "reference_gain"), Unit::gain, "reference_gain");
    p.pathloss_exponent = parse_quantity(require(j, "pathloss_exponent"), Unit::plain, "pathloss_exponent");
    p.noise_user = parse_list(require(j, "noise_user"), Unit::power, "noise_user", K);
    p.noise_eve = parse_quantity(require(j, "noise_eve"), Unit::power, "noise_eve");
    p.power_budget = parse_quantity(require(j, "power_budget"), Unit::power, "power_budget");
    p.probing_threshold = parse_quantity(require(j, "probing_threshold"), Unit::power, "probing_threshold");
    if (j.contains("gain_convention")) {
        const auto& g = j.at("gain_convention");
        if (g == "amplitude") p.gain_convention = GainConvention::amplitude;
        else if (g == "power") p.gain_convention = GainConvention::power;
        else throw ConfigError("'gain_convention' must be \"amplitude\" or \"power\"");
    }

    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        if (!s.is_object()) throw ConfigError("'solver' must be an object");
        static const char* known[] = {"max_outer", "tol", "layout", "clamp_rates", "starts", "fd_step",
                                      "pda_max_inner", "epg_max_inner"};
        for (auto it = s.begin(); it != s.end(); ++it) {
            if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) {
                throw ConfigError("unknown solver key '" + it.key() + "'");
            }
        }
        auto& o = rc.solver;
        if (s.contains("max_outer")) o.max_outer = parse_int(s.at("max_outer"), "solver.max_outer");
        if (s.contains("tol")) o.tol = parse_quantity(s.at("tol"), Unit::plain, "solver.tol");
        if (s.contains("clamp_rates")) {
            if (!s.at("clamp_rates").is_boolean()) throw ConfigError("'solver.clamp_rates' must be a boolean");
            o.clamp_rates = s.at("clamp_rates").get<bool>();
        }
        if (s.contains("layout")) {
            const auto& l = s.at("layout");
            if (l == "compact") o.layout = InitialLayout::compact;
            else if (l == "spread") o.layout = InitialLayout::spread;
            else if (l == "random") o.layout = InitialLayout::random;
            else throw ConfigError("'solver.layout' must be \"compact\", \"spread\" or \"random\"");
        }
        if (s.contains("pda_max_inner")) o.pda.max_inner = parse_int(s.at("pda_max_inner"), "solver.pda_max_inner");
        if (s.contains("epg_max_inner")) o.epg.max_inner = parse_int(s.at("epg_max_inner"), "solver.epg_max_inner");
        if (s.contains("starts")) rc.starts = parse_int(s.at("starts"), "solver.starts");
        if (s.contains("fd_step")) rc.fd_step = parse_quantity(s.at("fd_step"), Unit::length, "solver.fd_step");
        if (o.max_outer < 1 || !(o.tol > 0) || rc.starts < 1 || !(rc.fd_step > 0) || o.pda.max_inner < 1 ||
            o.epg.max_inner < 1) {
            throw ConfigError("solver settings out of range");
        }
    }

    // structural validation; an unsatisfiable probing threshold is not a config error
    try {
        Scenario check(p);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    rc.hash = fnv1a_hex(j.dump());
    return rc;
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    return parse_config(j);
}

} // namespace fasec
