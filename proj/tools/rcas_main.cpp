#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rcas/braking.hpp"
#include "rcas/sim.hpp"
#include "rcas/track_map.hpp"

namespace {

// exit codes: 0 ok, 2 validation error, 3 numerical failure, 4 no-fit
constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitNoFit = 4;

int cmd_run(const std::string& scenario_path, const std::string& out_dir, long long seed,
            bool verbose) {
    rcas::ScenarioConfig cfg;
    try {
        cfg = rcas::ScenarioConfig::load(scenario_path);
        if (seed >= 0) {
            cfg.seed = static_cast<std::uint64_t>(seed);
            cfg.channel.seed = 0;  // re-derive from the run seed
        }
    } catch (const std::exception& e) {
        std::cerr << "rcas run: " << e.what() << "\n";
        return kExitValidation;
    }
    try {
        if (verbose)
            std::cerr << "running scenario " << scenario_path << " (seed " << cfg.seed << ", "
                      << cfg.trams.size() << " trams, " << cfg.duration << " s)\n";
        const rcas::SimResult result = rcas::run_scenario(cfg);
        rcas::write_outputs(result, out_dir);
        std::cout << (std::filesystem::path(out_dir) / "summary.json").string() << "\n";
        return kExitOk;
    } catch (const rcas::ScenarioError& e) {
        std::cerr << "rcas run: " << e.what() << "\n";
        return kExitValidation;
    } catch (const rcas::MapError& e) {
        std::cerr << "rcas run: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "rcas run: " << e.what() << "\n";
        return kExitNumerical;
    }
}

int cmd_map_check(const std::string& map_path) {
    try {
        const rcas::TrackMap map = rcas::TrackMap::load(map_path);
        nlohmann::ordered_json j;
        j["file"] = map_path;
        j["segments"] = map.segment_count();
        j["switches"] = map.switch_count();
        j["total_length_m"] = map.total_length();
        j["reference"] = {map.reference_point().lon, map.reference_point().lat};
        std::cout << j.dump(2) << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "rcas map-check: " << e.what() << "\n";
        return kExitValidation;
    }
}

int cmd_braking_curve(const std::string& params_path, double v_min_kmh, double v_max_kmh,
                      double a_naive, const std::string& out_csv) {
    if (v_min_kmh < 0.0 || v_max_kmh <= v_min_kmh) {
        std::cerr << "rcas braking-curve: invalid speed range\n";
        return kExitValidation;
    }
    rcas::BrakingParams params;
    try {
        if (!params_path.empty()) params = rcas::BrakingParams::load(params_path);
    } catch (const std::exception& e) {
        std::cerr << "rcas braking-curve: " << e.what() << "\n";
        return kExitValidation;
    }
    try {
        std::ofstream out(out_csv);
        if (!out) {
            std::cerr << "rcas braking-curve: cannot write " << out_csv << "\n";
            return kExitValidation;
        }
        out << "v_kmh,d_model,d_naive\n";
        for (int kmh = static_cast<int>(v_min_kmh); kmh <= static_cast<int>(v_max_kmh); ++kmh) {
            const double v = kmh / 3.6;
            double d_model = 0.0;
            if (v > 0.0)
                d_model = rcas::simulate_braking(v, [](double) { return 0.0; }, params)
                              .total_distance;
            const double d_naive = v > 0.0 ? rcas::braking_distance_naive(v, a_naive) : 0.0;
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%d,%.4f,%.4f\n", kmh, d_model, d_naive);
            out << buf;
        }
        std::cout << out_csv << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "rcas braking-curve: " << e.what() << "\n";
        return kExitNumerical;
    }
}

int cmd_identify(const std::string& logs_dir, const std::string& fixed_path,
                 const std::string& bounds_path, const std::string& out_path) {
    std::vector<rcas::BrakingRun> runs;
    rcas::BrakingParams fixed;
    std::map<std::string, std::pair<double, double>> bounds;
    try {
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(logs_dir))
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) runs.push_back(rcas::load_braking_run_csv(f.string()));
        if (runs.empty()) {
            std::cerr << "rcas identify: no .csv run logs in " << logs_dir << "\n";
            return kExitValidation;
        }
        if (!fixed_path.empty()) fixed = rcas::BrakingParams::load(fixed_path);
        std::ifstream in(bounds_path);
        if (!in) {
            std::cerr << "rcas identify: cannot open bounds file " << bounds_path << "\n";
            return kExitValidation;
        }
        const nlohmann::json jb = nlohmann::json::parse(in);
        for (const auto& [key, val] : jb.items())
            bounds[key] = {val.at(0).get<double>(), val.at(1).get<double>()};
    } catch (const std::exception& e) {
        std::cerr << "rcas identify: " << e.what() << "\n";
        return kExitValidation;
    }

    try {
        const rcas::IdentifyResult result = rcas::identify_params(runs, fixed, bounds);
        std::ofstream out(out_path);
        if (!out) {
            std::cerr << "rcas identify: cannot write " << out_path << "\n";
            return kExitValidation;
        }
        out << result.params.to_json_text();
        std::cerr << "fit MSE: " << result.mse << " (m/s)^2 over " << runs.size() << " runs\n";
        std::cout << out_path << "\n";
        return kExitOk;
    } catch (const rcas::BrakingError& e) {
        std::cerr << "rcas identify: " << e.what() << "\n";
        return kExitNoFit;
    } catch (const std::exception& e) {
        std::cerr << "rcas identify: " << e.what() << "\n";
        return kExitValidation;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tram collision-warning simulation toolkit"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out";
    long long seed = -1;
    bool verbose = false;
    auto* run = app.add_subcommand("run", "run a scenario and write CSV logs + summary.json");
    run->add_option("--scenario", scenario_path, "scenario JSON file")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--seed", seed, "override the scenario seed");
    run->add_flag("--verbose", verbose, "diagnostics on stderr");

    std::string map_path;
    auto* map_check = app.add_subcommand("map-check", "validate a map file and print stats");
    map_check->add_option("--map", map_path, "map JSON file")->required()->check(CLI::ExistingFile);

    std::string params_path, curve_out = "braking_curve.csv";
    double v_min = 0.0, v_max = 60.0, a_naive = 2.2;
    auto* curve = app.add_subcommand("braking-curve",
                                     "tabulate model vs constant-deceleration braking distance");
    curve->add_option("--params", params_path, "tram parameter JSON file")
        ->check(CLI::ExistingFile);
    curve->add_option("--v-min", v_min, "lowest speed [km/h]");
    curve->add_option("--v-max", v_max, "highest speed [km/h]");
    curve->add_option("--a-br", a_naive, "constant deceleration for the reference curve [m/s^2]");
    curve->add_option("--out", curve_out, "output CSV");

    std::string logs_dir, fixed_path, bounds_path, fitted_out = "fitted_params.json";
    auto* identify =
        app.add_subcommand("identify", "fit tram parameters to measured deceleration logs");
    identify->add_option("--logs", logs_dir, "directory of t,v run CSVs")
        ->required()
        ->check(CLI::ExistingDirectory);
    identify->add_option("--fixed", fixed_path, "JSON with fixed parameters")
        ->check(CLI::ExistingFile);
    identify->add_option("--bounds", bounds_path, "JSON {param: [lo, hi]} of free parameters")
        ->required()
        ->check(CLI::ExistingFile);
    identify->add_option("--out", fitted_out, "fitted parameter JSON output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    if (run->parsed()) return cmd_run(scenario_path, out_dir, seed, verbose);
    if (map_check->parsed()) return cmd_map_check(map_path);
    if (curve->parsed()) return cmd_braking_curve(params_path, v_min, v_max, a_naive, curve_out);
    if (identify->parsed()) return cmd_identify(logs_dir, fixed_path, bounds_path, fitted_out);
    return kExitValidation;
}
