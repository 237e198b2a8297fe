#include "ctha/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "ctha/scenario.hpp"

#include "CLI11.hpp"

namespace ctha::cli {

namespace {

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw DomainError("cannot open output file '" + out_path + "'");
    out << text;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open input file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Constrained temporal-hierarchy coordination runtime"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    app.add_option("--seed", seed, "Seed for seeded experiments")->capture_default_str();

    // run
    auto* run_cmd = app.add_subcommand("run", "Execute a scenario and emit its report");
    std::string run_scenario_path, run_mode = "ctha", run_out;
    bool run_csv = false;
    run_cmd->add_option("scenario", run_scenario_path, "Scenario file")->required();
    run_cmd->add_option("--mode", run_mode, "ctha | unconstrained | single-scale")
        ->capture_default_str();
    run_cmd->add_option("--out", run_out, "Report path (default stdout)");
    run_cmd->add_flag("--csv", run_csv, "Tabular output instead of line-delimited objects");

    // gain
    auto* gain_cmd = app.add_subcommand("gain", "Gain-versus-depth curves for random chains");
    std::size_t gain_depth = 8, gain_trials = 1000, gain_n = 4;
    double gain_lo = 0.0, gain_hi = 1.5;
    std::string gain_out;
    bool gain_csv = false;
    gain_cmd->add_option("--depth", gain_depth, "Chain depth")->capture_default_str();
    gain_cmd->add_option("--trials", gain_trials, "Sampled chains")->capture_default_str();
    gain_cmd->add_option("--n", gain_n, "Matrix dimension")->capture_default_str();
    gain_cmd->add_option("--lo", gain_lo, "Entry distribution lower bound")
        ->capture_default_str();
    gain_cmd->add_option("--hi", gain_hi, "Entry distribution upper bound")
        ->capture_default_str();
    gain_cmd->add_option("--out", gain_out, "Output path (default stdout)");
    gain_cmd->add_flag("--csv", gain_csv, "CSV output");

    // overhead
    auto* overhead_cmd =
        app.add_subcommand("overhead", "Per-step traffic totals for one all-active step");
    int overhead_n_max = 4;
    std::string overhead_out;
    bool overhead_csv = false;
    overhead_cmd->add_option("--n-max", overhead_n_max, "Largest layer count")
        ->capture_default_str();
    overhead_cmd->add_option("--out", overhead_out, "Output path (default stdout)");
    overhead_cmd->add_flag("--csv", overhead_csv, "CSV output");

    // validate
    auto* validate_cmd = app.add_subcommand("validate", "Validate a message file");
    std::string validate_path, validate_kind;
    validate_cmd->add_option("file", validate_path, "Message file")->required();
    validate_cmd->add_option("--kind", validate_kind, "summary | plan | policy")->required();

    // activation
    auto* activation_cmd =
        app.add_subcommand("activation", "Active-layer histogram for a scenario");
    std::string activation_path, activation_out;
    std::uint64_t activation_horizon = 0;
    bool activation_csv = false;
    activation_cmd->add_option("scenario", activation_path, "Scenario file")->required();
    activation_cmd->add_option("--horizon", activation_horizon,
                               "Override the scenario horizon");
    activation_cmd->add_option("--out", activation_out, "Output path (default stdout)");
    activation_cmd->add_flag("--csv", activation_csv, "CSV output");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) {
            ScenarioScript script = ScenarioScript::load(run_scenario_path);
            if (app.count("--seed") > 0) script.seed = seed;
            const ExperimentReport report =
                run_scenario(script, mode_from_name(run_mode));
            emit(run_csv ? report.to_csv() : report.to_jsonl(), run_out);
        } else if (gain_cmd->parsed()) {
            const GainCurve curve =
                gain_experiment(gain_depth, gain_trials, seed, {gain_n, gain_lo, gain_hi});
            emit(gain_csv ? curve.to_csv() : canonical_encode(curve.to_json()) + "\n",
                 gain_out);
        } else if (overhead_cmd->parsed()) {
            std::vector<int> range;
            for (int n = 1; n <= overhead_n_max; ++n) range.push_back(n);
            const OverheadTable table = overhead_experiment(range);
            emit(overhead_csv ? table.to_csv() : canonical_encode(table.to_json()) + "\n",
                 overhead_out);
        } else if (validate_cmd->parsed()) {
            const auto kind = msg::kind_from_name(validate_kind);
            const Json raw = msg::parse(read_file(validate_path), kind);
            const auto outcome = msg::validate(raw, kind);
            std::cout << msg::status_name(outcome.status) << "\n";
            for (const auto& line : outcome.diagnostics) std::cout << "  " << line << "\n";
        } else if (activation_cmd->parsed()) {
            ScenarioScript script = ScenarioScript::load(activation_path);
            if (app.count("--seed") > 0) script.seed = seed;
            const auto horizon =
                activation_horizon > 0 ? activation_horizon : script.horizon;
            const auto histogram = activation_experiment(script, horizon);
            if (activation_csv) {
                std::string out = "active_layers,steps\n";
                for (const auto& [count, steps] : histogram)
                    out += std::to_string(count) + "," + std::to_string(steps) + "\n";
                emit(out, activation_out);
            } else {
                Json j = Json::object();
                for (const auto& [count, steps] : histogram)
                    j[std::to_string(count)] = steps;
                emit(canonical_encode(j) + "\n", activation_out);
            }
        }
    } catch (const ContractViolation& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "invalid input: " << e.what() << " (byte " << e.byte_offset() << ")\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace ctha::cli
