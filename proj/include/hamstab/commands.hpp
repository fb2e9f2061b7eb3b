#pragma once

#include "hamstab/lattice_config.hpp"
#include "hamstab/symplectic_core.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace hamstab::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitUnstable = 2,
    kExitSingular = 3,
    kExitInput = 4,
};

struct RunReport {
    std::string command;
    std::string tool_version = kToolVersion;
    std::string config_hash;  // FNV-1a of the canonical input text
    std::string verdict;      // stable, unstable, matched, unmatched, singular, ok
    int exit_code = kExitOk;
    nlohmann::json result = nlohmann::json::object();
    double elapsed_seconds = 0.0;

    /// Everything except timing.
    nlohmann::json payload() const;
    /// FNV-1a of the serialized payload; identical inputs give identical hashes.
    std::string payload_hash() const;
    nlohmann::json to_json() const;
    static RunReport from_json(const nlohmann::json& j);
};

struct RunOptions {
    double stability_tol = symplectic::kStabilityTol;
    unsigned workers = 0;
    bool matched_columns = false;  // scan: run the matched-envelope check per stable cell
};

// --param path=lo:hi:count
struct ParameterSpec {
    std::string path;
    double lo = 0.0;
    double hi = 0.0;
    int count = 1;

    static ParameterSpec parse(const std::string& text);
    std::vector<double> values() const;
};

RunReport cmd_stability(const config::LatticeConfig& cfg, const RunOptions& opts = {});
RunReport cmd_matched(const config::LatticeConfig& cfg, const RunOptions& opts = {});
RunReport cmd_monodromy(const config::LatticeConfig& cfg, const RunOptions& opts = {});
RunReport cmd_scan(const config::LatticeConfig& cfg, const std::vector<ParameterSpec>& params,
                   const RunOptions& opts = {});
RunReport cmd_decompose(const Mat& m, const RunOptions& opts = {});
RunReport cmd_normal_form(const Mat& m, const RunOptions& opts = {});

/// Scan grid as CSV with 9 significant digits and a fixed column order.
std::string scan_csv(const RunReport& report);
/// Flat key,value CSV of the scalar entries of a report.
std::string summary_csv(const RunReport& report);

nlohmann::json to_json(const Mat& m);
nlohmann::json to_json(const symplectic::StabilityReport& report);

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

}  // namespace hamstab::cli
