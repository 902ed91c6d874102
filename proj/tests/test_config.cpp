#include <gtest/gtest.h>
#include <fasec/config.hpp>

using namespace fasec;
using nlohmann::json;

namespace {

json two_user()
{
    return json::parse(R"({
      "num_antennas": 8, "num_users": 2,
      "wavelength": "10 mm", "aperture_length": "10 lambda", "min_spacing": "0.5 lambda",
      "user_angles": ["100 deg", "130 deg"], "sensing_angle": "60 deg",
      "user_distances": "100 m", "target_distance": 100,
      "reference_gain": "-40 dB", "pathloss_exponent": 2.8,
      "noise_user": "-80 dBm", "noise_eve": "-80 dBm",
      "power_budget": "30 dBm", "probing_threshold": "3 W"
    })");
}

} // namespace

TEST(Config, UnitsConvertedAtTheBoundary)
{
    const auto rc = parse_config(two_user());
    const auto& p = rc.scenario;
    EXPECT_EQ(p.num_antennas, 8);
    EXPECT_DOUBLE_EQ(p.wavelength, 0.01);
    EXPECT_DOUBLE_EQ(p.aperture_length, 0.1);
    EXPECT_DOUBLE_EQ(p.min_spacing, 0.005);
    EXPECT_DOUBLE_EQ(p.user_angles[0], deg_to_rad(100));
    EXPECT_DOUBLE_EQ(p.sensing_angle, deg_to_rad(60));
    EXPECT_EQ(p.user_distances, std::vector<double>(2, 100.0));
    EXPECT_DOUBLE_EQ(p.reference_gain, 1e-4);
    EXPECT_DOUBLE_EQ(p.noise_user[1], 1e-11);
    EXPECT_DOUBLE_EQ(p.power_budget, 1.0);
    EXPECT_DOUBLE_EQ(p.probing_threshold, 3.0);
    EXPECT_EQ(p.gain_convention, GainConvention::amplitude);
    EXPECT_TRUE(p.eavesdropper_angles.empty());
}

TEST(Config, AlternativeUnits)
{
    using config_detail::parse_quantity;
    using config_detail::Unit;
    EXPECT_DOUBLE_EQ(parse_quantity(json("1.5 rad"), Unit::angle, "x"), 1.5);
    EXPECT_DOUBLE_EQ(parse_quantity(json(90), Unit::angle, "x"), pi / 2);
    EXPECT_DOUBLE_EQ(parse_quantity(json("250 mW"), Unit::power, "x"), 0.25);
    EXPECT_DOUBLE_EQ(parse_quantity(json("0 dBW"), Unit::power, "x"), 1.0);
    EXPECT_DOUBLE_EQ(parse_quantity(json("2 cm"), Unit::length, "x"), 0.02);
    EXPECT_DOUBLE_EQ(parse_quantity(json("3 lambda"), Unit::length, "x", 0.01), 0.03);
    EXPECT_THROW(parse_quantity(json("3 furlong"), Unit::length, "x"), ConfigError);
    EXPECT_THROW(parse_quantity(json("lambda"), Unit::length, "x", 0.01), ConfigError);
    EXPECT_THROW(parse_quantity(json(true), Unit::power, "x"), ConfigError);
    EXPECT_THROW(parse_quantity(json("3 dB"), Unit::power, "x"), ConfigError);
}

TEST(Config, EveryScenarioKeyIsRequired)
{
    const json base = two_user();
    for (auto it = base.begin(); it != base.end(); ++it) {
        const std::string key = it.key();
        auto j = base;
        j.erase(key);
        EXPECT_THROW(parse_config(j), ConfigError) << key;
    }
}

TEST(Config, OptionalKeys)
{
    auto j = two_user();
    j["eavesdropper_angles"] = {"60 deg", "20 deg"};
    j["eavesdropper_distances"] = {100, 50};
    j["gain_convention"] = "power";
    j["solver"] = {{"max_outer", 50}, {"tol", 1e-4}, {"layout", "compact"}, {"clamp_rates", true}, {"starts", 3},
                   {"fd_step", "1e-3 mm"}};
    const auto rc = parse_config(j);
    EXPECT_EQ(rc.scenario.eavesdropper_angles.size(), 2u);
    EXPECT_EQ(rc.scenario.gain_convention, GainConvention::power);
    EXPECT_EQ(rc.solver.max_outer, 50);
    EXPECT_EQ(rc.solver.tol, 1e-4);
    EXPECT_EQ(rc.solver.layout, InitialLayout::compact);
    EXPECT_TRUE(rc.solver.clamp_rates);
    EXPECT_EQ(rc.starts, 3);
    EXPECT_DOUBLE_EQ(rc.fd_step, 1e-6);
}

TEST(Config, RejectsBadValues)
{
    auto bad = [](auto edit) {
        auto j = two_user();
        edit(j);
        return j;
    };
    EXPECT_THROW(parse_config(bad([](json& j) { j["user_angles"] = {"100 deg"}; })), ConfigError);
    EXPECT_THROW(parse_config(bad([](json& j) { j["num_users"] = 1.5; })), ConfigError);
    EXPECT_THROW(parse_config(bad([](json& j) { j["min_spacing"] = "3 lambda"; })), ConfigError);
    EXPECT_THROW(parse_config(bad([](json& j) { j["sensing_angle"] = "200 deg"; })), ConfigError);
    EXPECT_THROW(parse_config(bad([](json& j) { j["gain_convention"] = "watts"; })), ConfigError);
    EXPECT_THROW(parse_config(bad([](json& j) { j["solver"] = {{"bogus", 1}}; })), ConfigError);
    EXPECT_THROW(parse_config(bad([](json& j) { j["solver"] = {{"starts", 0}}; })), ConfigError);
    EXPECT_THROW(parse_config(json::array()), ConfigError);
}

TEST(Config, UnreachableProbingIsNotAConfigError)
{
    auto j = two_user();
    j["probing_threshold"] = "9 W";
    const auto rc = parse_config(j);
    EXPECT_TRUE(Scenario(rc.scenario).feasibility_diagnostic().has_value());
}

TEST(Config, HashTracksContent)
{
    const auto a = parse_config(two_user());
    const auto b = parse_config(two_user());
    auto j = two_user();
    j["probing_threshold"] = "3.5 W";
    const auto c = parse_config(j);
    EXPECT_EQ(a.hash, b.hash);
    EXPECT_NE(a.hash, c.hash);
    EXPECT_EQ(a.hash.size(), 16u);
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Config, LoadFromFile)
{
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
    const auto rc = load_config(FASEC_SOURCE_DIR "/configs/two_user.json");
    EXPECT_EQ(rc.scenario.num_users, 2);
    const auto rc8 = load_config(FASEC_SOURCE_DIR "/configs/eight_user.json");
    EXPECT_EQ(rc8.scenario.num_users, 8);
}
