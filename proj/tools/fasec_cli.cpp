#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>
#include <CLI11.hpp>
#include <fasec/fasec.hpp>

namespace fs = std::filesystem;
using namespace fasec;

namespace {

enum Exit { ok = 0, verify_failed = 1, config_error = 2, infeasible = 3, numerical = 4 };

const char* trace_schema =
    "# fasec.trace v1: iteration,surrogate,sum_secrecy,probing_power,total_power,max_violation,wall_time_s,"
    "beamformer_iterations,position_iterations";
const char* beampattern_schema = "# fasec.beampattern v1: angle_deg,power_w,power_db_norm";
const char* sweep_schema = "# fasec.sweep v1: value,seed,fa_secrecy,fpa_secrecy,probing,iterations,status";

std::string num(double x)
{
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

std::string trace_csv(const SolverReport& r)
{
    std::ostringstream os;
    os << trace_schema << "\n"
       << "iteration,surrogate,sum_secrecy,probing_power,total_power,max_violation,wall_time_s,"
          "beamformer_iterations,position_iterations\n";
    for (const auto& t : r.trace) {
        os << t.iteration << ',' << num(t.surrogate) << ',' << num(t.sum_secrecy) << ',' << num(t.probing_power)
           << ',' << num(t.total_power) << ',' << num(t.max_violation) << ',' << num(t.wall_time) << ','
           << t.beamformer_iterations << ',' << t.position_iterations << '\n';
    }
    return os.str();
}

std::string beampattern_csv(const Scenario& s, const SolverReport& r)
{
    std::vector<double> grid;
    for (int i = 0; i <= 360; ++i) grid.push_back(deg_to_rad(0.5 * i));
    const auto bp = beampattern(r.d, r.w, s.params().wavelength, grid);
    const double peak = *std::max_element(bp.begin(), bp.end());
    std::ostringstream os;
    os << beampattern_schema << "\nangle_deg,power_w,power_db_norm\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double db = peak > 0 ? 10 * std::log10(std::max(bp[i] / peak, 1e-300)) : 0.0;
        os << num(0.5 * static_cast<double>(i)) << ',' << num(bp[i]) << ',' << num(db) << '\n';
    }
    return os.str();
}

nlohmann::json summary_json(const std::string& command, const RunConfig& rc, std::uint64_t seed, const SolverReport& r)
{
    nlohmann::json j;
    j["schema"] = "fasec.summary v1";
    j["command"] = command;
    j["config_hash"] = rc.hash;
    j["seed"] = seed;
    j["starts"] = rc.starts;
    j["status"] = to_string(r.status);
    j["iterations"] = r.iterations();
    j["best_iteration"] = r.best_iteration;
    j["sum_secrecy"] = r.metrics.sum_secrecy;
    j["unclamped_sum_secrecy"] = r.metrics.unclamped_sum_secrecy;
    j["initial_sum_secrecy"] = r.initial_sum_secrecy;
    j["secrecy_rates"] = r.metrics.secrecy_rates;
    j["user_sinrs"] = r.metrics.user_sinrs;
    j["probing_power"] = r.metrics.probing_power;
    j["total_power"] = r.metrics.total_power;
    j["final_surrogate"] = r.trace.empty() ? 0.0 : r.trace.back().surrogate;
    j["positions_m"] = std::vector<double>(r.d.data(), r.d.data() + r.d.size());
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index k = 0; k < r.w.num_users(); ++k) {
        nlohmann::json col = nlohmann::json::array();
        for (Eigen::Index m = 0; m < r.w.num_antennas(); ++m) col.push_back({r.w.w(m, k).real(), r.w.w(m, k).imag()});
        w.push_back(col);
    }
    j["beamformers_re_im"] = w;
    j["audit"] = {{"passed", r.audit.passed},
                  {"power_excess_rel", r.audit.power_excess},
                  {"probing_deficit_rel", r.audit.probing_deficit},
                  {"apv_violation_m", r.audit.apv_violation}};
    j["warnings"] = r.warnings;
    j["wall_time_s"] = r.trace.empty() ? 0.0 : r.trace.back().wall_time;
    return j;
}

void write_file(const fs::path& path, const std::string& text)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << text;
}

// Maps library errors to exit codes. Nothing is written before `body` returns.
template <class F>
int guarded(F&& body)
{
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return config_error;
    } catch (const InvalidArgument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return config_error;
    } catch (const InfeasibleScenario& e) {
        std::cerr << "infeasible scenario: " << e.what() << "\n";
        return infeasible;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return numerical;
    }
}

SolverReport solve(const Scenario& s, const RunConfig& rc, std::uint64_t seed, bool fpa)
{
    if (auto why = s.feasibility_diagnostic()) throw InfeasibleScenario(*why);
    if (fpa) return fpa_baseline(s, seeded_initial_point(s, seed), rc.solver);
    return bsum_multistart(s, rc.starts, rc.solver, seed);
}

int cmd_run(const std::string& cfg, std::uint64_t seed, const std::string& out, bool fpa)
{
    return guarded([&] {
        const auto rc = load_config(cfg);
        const Scenario s(rc.scenario);
        const auto rep = solve(s, rc, seed, fpa);
        const std::string trace = trace_csv(rep);
        const std::string bp = beampattern_csv(s, rep);
        const std::string summary = summary_json(fpa ? "baseline" : "run", rc, seed, rep).dump(2) + "\n";
        fs::create_directories(out);
        write_file(fs::path(out) / "trace.csv", trace);
        write_file(fs::path(out) / "beampattern.csv", bp);
        write_file(fs::path(out) / "summary.json", summary);
        std::cout << "status " << to_string(rep.status) << ", " << rep.iterations() << " iterations, sum secrecy "
                  << num(rep.metrics.sum_secrecy) << " bit/s/Hz\n";
        return static_cast<int>(ok);
    });
}

int cmd_beampattern(const std::string& cfg, std::uint64_t seed, const std::string& out, bool fpa)
{
    return guarded([&] {
        const auto rc = load_config(cfg);
        const Scenario s(rc.scenario);
        const auto rep = solve(s, rc, seed, fpa);
        const std::string bp = beampattern_csv(s, rep);
        if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
        write_file(out, bp);
        return static_cast<int>(ok);
    });
}

struct SweepRow
{
    std::string value;
    std::uint64_t seed = 0;
    double fa = std::nan("");
    double fpa = std::nan("");
    double probing = std::nan("");
    int iterations = 0;
    std::string status;
};

// FA is reported as the better of its own start and a warm start from the FPA
// solution, so the FPA column never exceeds it on a finished cell.
SweepRow sweep_cell(const RunConfig& rc, const std::string& vary, double value, const std::string& label,
                    std::uint64_t seed, bool with_fpa)
{
    SweepRow row;
    row.value = label;
    row.seed = seed;
    try {
        auto p = rc.scenario;
        if (vary == "P_max") p.power_budget = value;
        else if (vary == "P_d") p.probing_threshold = value;
        else p.num_antennas = static_cast<int>(value);
        const Scenario s(p);
        if (auto why = s.feasibility_diagnostic()) throw InfeasibleScenario(*why);
        auto fa = bsum_multistart(s, rc.starts, rc.solver, seed);
        if (with_fpa) {
            const auto fpa = fpa_baseline(s, seeded_initial_point(s, seed), rc.solver);
            row.fpa = fpa.metrics.sum_secrecy;
            auto warm = bsum_solve(s, {fpa.w, fpa.d}, rc.solver);
            if (warm.metrics.sum_secrecy > fa.metrics.sum_secrecy) fa = std::move(warm);
        }
        row.fa = fa.metrics.sum_secrecy;
        row.probing = fa.metrics.probing_power;
        row.iterations = fa.iterations();
        row.status = to_string(fa.status);
    } catch (const InfeasibleScenario&) {
        row.status = "infeasible";
    } catch (const InvalidArgument&) {
        row.status = "invalid";
    } catch (const std::exception&) {
        row.status = "numerical_error";
    }
    return row;
}

int cmd_sweep(const std::string& cfg, const std::string& vary, const std::vector<std::string>& values,
              const std::string& baseline, int seeds, const std::string& out, unsigned threads)
{
    return guarded([&] {
        const auto rc = load_config(cfg);
        if (vary != "P_max" && vary != "P_d" && vary != "M") throw ConfigError("--vary must be P_max, P_d or M");
        if (!baseline.empty() && baseline != "fpa") throw ConfigError("--baseline only accepts 'fpa'");
        if (seeds < 1) throw ConfigError("--seeds must be >= 1");
        std::vector<double> parsed;
        for (const auto& v : values) {
            if (vary == "M") {
                std::size_t used = 0;
                int m = 0;
                try {
                    m = std::stoi(v, &used);
                } catch (const std::exception&) {
                    used = 0;
                }
                if (used != v.size() || m < 1) throw ConfigError("--values: '" + v + "' is not a positive integer");
                parsed.push_back(m);
            } else {
                parsed.push_back(config_detail::parse_quantity(nlohmann::json(v), config_detail::Unit::power, "--values"));
            }
        }

        std::vector<SweepRow> rows(parsed.size() * static_cast<std::size_t>(seeds));
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < rows.size(); i = next++) {
                const auto vi = i / static_cast<std::size_t>(seeds);
                rows[i] = sweep_cell(rc, vary, parsed[vi], values[vi], i % static_cast<std::size_t>(seeds),
                                     baseline == "fpa");
            }
        };
        const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rows.size())));
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();

        std::ostringstream os;
        os << sweep_schema << "\nvalue,seed,fa_secrecy,fpa_secrecy,probing,iterations,status\n";
        for (const auto& r : rows) {
            os << r.value << ',' << r.seed << ',' << num(r.fa) << ',' << num(r.fpa) << ',' << num(r.probing) << ','
               << r.iterations << ',' << r.status << '\n';
        }
        if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
        write_file(out, os.str());
        std::cout << rows.size() << " cells written to " << out << "\n";
        return static_cast<int>(ok);
    });
}

int cmd_verify(const std::string& suite, double h, std::uint64_t seed, bool flip_gradient)
{
    return guarded([&] {
        GradientFn grad = apv_gradient;
        // test fixture: a sign error the gradient gate must catch
        if (flip_gradient) grad = [](const ChannelSet& c, const BeamformerSet& w, const SurrogateState& st) {
            return rvec(-apv_gradient(c, w, st));
        };
        const auto gates = run_verify_suite(suite, h, seed, grad);
        bool all = true;
        std::cout << std::left << std::setw(34) << "gate" << std::setw(14) << "residual" << std::setw(12) << "tolerance"
                  << "result\n";
        for (const auto& g : gates) {
            all &= g.passed;
            std::cout << std::left << std::setw(34) << g.name << std::setw(14) << std::setprecision(3)
                      << std::scientific << g.residual << std::setw(12) << g.tolerance << std::defaultfloat
                      << (g.passed ? "PASS" : "FAIL") << "\n";
        }
        return static_cast<int>(all ? ok : verify_failed);
    });
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Secure ISAC beamforming with movable antenna positions"};
    app.require_subcommand(1);

    std::string cfg, out = "out", suite = "all", vary, baseline, sweep_out = "sweep.csv", bp_out = "beampattern.csv";
    std::uint64_t seed = 0;
    double h = 1e-6;
    int seeds = 1;
    bool flip = false, bp_fpa = false;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::string> values;

    auto* run = app.add_subcommand("run", "optimize beamformers and antenna positions");
    run->add_option("config", cfg, "scenario JSON")->required();
    run->add_option("--seed", seed, "0 = default start, otherwise random start");
    run->add_option("--out", out, "output directory");

    auto* base = app.add_subcommand("baseline", "beamformers only, fixed uniform array");
    base->add_option("config", cfg, "scenario JSON")->required();
    base->add_option("--seed", seed, "0 = matched filters, otherwise random beamformers");
    base->add_option("--out", out, "output directory");

    auto* sweep = app.add_subcommand("sweep", "parameter sweep, cells run in parallel");
    sweep->add_option("config", cfg, "scenario JSON")->required();
    sweep->add_option("--vary", vary, "P_max, P_d or M")->required();
    sweep->add_option("--values", values, "comma separated; powers may carry units (30dBm, 3W)")
        ->required()
        ->delimiter(',');
    sweep->add_option("--baseline", baseline, "also run the fixed array ('fpa')");
    sweep->add_option("--seeds", seeds, "seeds 0..n-1 per value");
    sweep->add_option("--out", sweep_out, "output CSV");
    sweep->add_option("--threads", threads, "worker threads");

    auto* verify = app.add_subcommand("verify", "gradient, projection and oracle gates");
    verify->set_help_flag("--help", "print this help message"); // frees the name for --h
    verify->add_option("--suite", suite, "gradients | projections | oracle | all");
    verify->add_option("--h", h, "finite-difference step in meters");
    verify->add_option("--seed", seed, "seed for the random instances");
    verify->add_flag("--flip-gradient-sign", flip, "mutation fixture: negate the analytic gradient");

    auto* bp = app.add_subcommand("beampattern", "solve and write the 361-point beampattern");
    bp->add_option("config", cfg, "scenario JSON")->required();
    bp->add_option("--seed", seed, "start seed");
    bp->add_option("--out", bp_out, "output CSV");
    bp->add_flag("--fpa", bp_fpa, "use the fixed-array baseline");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(config_error);
    }

    if (*run) return cmd_run(cfg, seed, out, false);
    if (*base) return cmd_run(cfg, seed, out, true);
    if (*sweep) return cmd_sweep(cfg, vary, values, baseline, seeds, sweep_out, threads);
    if (*verify) return cmd_verify(suite, h, seed, flip);
    if (*bp) return cmd_beampattern(cfg, seed, bp_out, bp_fpa);
    return config_error;
}
