// hamstab: stability analysis of periodic linear Hamiltonian systems.
#include "hamstab/commands.hpp"
#include "hamstab/errors.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace hamstab;

namespace {

struct Flags {
    std::string config;
    std::string matrix;
    std::string out;
    std::string format = "json";
    unsigned workers = 0;
    double tol = symplectic::kStabilityTol;
    std::vector<std::string> params;
    bool matched = false;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + path.string());
    f << text;
}

void emit(const cli::RunReport& report, const Flags& flags) {
    const std::string json_text = report.to_json().dump(2) + "\n";
    const bool grid = report.command == "scan";
    const std::string csv_text = grid ? cli::scan_csv(report) : cli::summary_csv(report);
    if (flags.out.empty()) {
        std::cout << (flags.format == "csv" ? csv_text : json_text);
        return;
    }
    fs::create_directories(flags.out);
    const std::string stem = report.command;
    write_file(fs::path(flags.out) / (stem + ".json"), json_text);
    if (flags.format == "csv") write_file(fs::path(flags.out) / (stem + ".csv"), csv_text);
    std::cout << report.verdict << "\n";
}

int run(const std::string& command, const Flags& flags) {
    cli::RunOptions opts;
    opts.stability_tol = flags.tol;
    opts.workers = flags.workers;
    opts.matched_columns = flags.matched;

    cli::RunReport report;
    if (command == "decompose" || command == "normal-form") {
        const Mat m = config::load_matrix(flags.matrix);
        report = command == "decompose" ? cli::cmd_decompose(m, opts) : cli::cmd_normal_form(m, opts);
    } else {
        const auto cfg = config::load_lattice(flags.config);
        if (command == "stability") report = cli::cmd_stability(cfg, opts);
        else if (command == "matched") report = cli::cmd_matched(cfg, opts);
        else if (command == "monodromy") report = cli::cmd_monodromy(cfg, opts);
        else {
            std::vector<cli::ParameterSpec> specs;
            for (const auto& p : flags.params) specs.push_back(cli::ParameterSpec::parse(p));
            report = cli::cmd_scan(cfg, specs, opts);
        }
    }
    emit(report, flags);
    return report.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stability of linear Hamiltonian systems with periodic coefficients"};
    app.set_version_flag("--version", std::string(cli::kToolVersion));
    app.require_subcommand(1);

    Flags flags;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", flags.out, "Directory for output files");
        sub->add_option("--format", flags.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--tol", flags.tol, "Stability tolerance")->check(CLI::PositiveNumber);
    };
    auto lattice_cmd = [&](const std::string& name, const std::string& help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", flags.config, "Lattice file")->required()->check(CLI::ExistingFile);
        common(sub);
        return sub;
    };
    auto matrix_cmd = [&](const std::string& name, const std::string& help) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--matrix,--config", flags.matrix, "Matrix file")->required()->check(CLI::ExistingFile);
        common(sub);
        return sub;
    };

    lattice_cmd("stability", "Monodromy eigenvalues, Krein types and verdict");
    lattice_cmd("matched", "Matched envelope and residuals");
    lattice_cmd("monodromy", "One-period transfer map");
    auto* scan = lattice_cmd("scan", "Stability grid over one or two parameters");
    scan->add_option("--param", flags.params, "path=lo:hi:count")->required()->expected(1, 2);
    scan->add_option("--workers", flags.workers, "Worker threads, 0 for all cores");
    scan->add_flag("--matched", flags.matched, "Add matched-envelope residuals per stable cell");
    matrix_cmd("decompose", "Horizontal polar parts and normal form of a symplectic matrix");
    matrix_cmd("normal-form", "Normal form of a stable symplectic matrix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cli::kExitInput;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, flags);
    } catch (const ConfigError& e) {
        std::cerr << "error";
        if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
        std::cerr << ": " << e.what() << "\n";
        return cli::kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cli::exit_code_for(e);
    }
}
