#include "hamstab/commands.hpp"

#include "hamstab/decompositions.hpp"
#include "hamstab/envelope.hpp"
#include "hamstab/errors.hpp"
#include "hamstab/parallel.hpp"
#include "hamstab/scalar_cs.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

namespace hamstab::cli {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

json angles_json(const std::vector<double>& angles) {
    json a = json::array();
    for (double x : angles) a.push_back(x);
    return a;
}

json tunes_json(const std::vector<double>& angles) {
    json a = json::array();
    for (double x : angles) a.push_back(x / (2.0 * std::numbers::pi));
    return a;
}

json krein_json(const std::vector<symplectic::KreinType>& types) {
    json a = json::array();
    for (const auto& t : types) a.push_back(json::array({t.p, t.q}));
    return a;
}

json normal_form_json(const decomp::NormalFormResult& nf) {
    return {{"f", to_json(nf.conjugator_f)},
            {"angles", angles_json(nf.angles)},
            {"tunes", tunes_json(nf.angles)},
            {"krein_types", krein_json(nf.cluster_types)},
            {"reconstruction_residual", nf.reconstruction_residual},
            {"symplectic_residual", nf.symplectic_residual}};
}

json transfer_json(const dynamics::TransferMap& tm) {
    return {{"matrix", to_json(tm.matrix)},
            {"t_start", tm.t_start},
            {"t_end", tm.t_end},
            {"method", tm.method},
            {"steps", tm.steps},
            {"error_estimate", tm.error_estimate},
            {"symplectic_residual", tm.symplectic_residual}};
}

dynamics::IntegratorOptions integrator_for(const config::LatticeConfig& cfg) {
    dynamics::IntegratorOptions io;
    io.integ_tol = cfg.integ_tol.value_or(dynamics::kIntegTol);
    return io;
}

bool scalar_compatible(const config::LatticeConfig& cfg) {
    if (cfg.n != 1) return false;
    for (const auto& s : cfg.elements) {
        if (s.r(0, 0) != 0.0 || s.mass_inv(0, 0) != 1.0) return false;
    }
    return true;
}

// Tune from the phase integral of the matched scalar envelope, integer winding included.
double phase_tune(const dynamics::PeriodicHamiltonian& h, const envelope::EnvelopeState& s0) {
    const double w0 = s0.w(0, 0);
    const double wd0 = envelope::w_dot(s0, h.coefficients(0.0))(0, 0);
    const auto traj = scalar_cs::integrate_scalar_envelope(h, w0, wd0, 0.0, h.period());
    return traj.phases().back() / (2.0 * std::numbers::pi);
}

RunReport start(const std::string& command, const std::string& canonical) {
    RunReport r;
    r.command = command;
    r.config_hash = config::fnv1a_hex(canonical);
    return r;
}

void set_verdict(RunReport& r, const std::string& verdict, int code) {
    r.verdict = verdict;
    r.exit_code = code;
}

std::string csv_number(const json& v) {
    if (v.is_null()) return "";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v.get<double>());
    return buf;
}

std::string csv_text(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

json to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

json to_json(const symplectic::StabilityReport& rep) {
    json eig = json::array();
    for (const auto& z : rep.eigenvalues) eig.push_back(complex_json(z));
    json clusters = json::array();
    for (const auto& c : rep.clusters) {
        clusters.push_back({{"value", complex_json(c.value)},
                            {"modulus", std::abs(c.value)},
                            {"argument", std::arg(c.value)},
                            {"algebraic", c.algebraic},
                            {"geometric", c.geometric},
                            {"on_circle", c.on_circle},
                            {"semi_simple", c.semi_simple},
                            {"krein", c.krein ? json::array({c.krein->p, c.krein->q}) : json(nullptr)}});
    }
    return {{"stable", rep.stable},
            {"diagnostic", rep.diagnostic},
            {"tolerance", rep.tolerance},
            {"max_modulus", rep.max_modulus},
            {"eigenvalues", eig},
            {"clusters", clusters}};
}

json RunReport::payload() const {
    return {{"command", command}, {"tool_version", tool_version}, {"config_hash", config_hash},
            {"verdict", verdict}, {"exit_code", exit_code},       {"result", result}};
}

std::string RunReport::payload_hash() const { return config::fnv1a_hex(payload().dump()); }

json RunReport::to_json() const {
    json j = payload();
    j["payload_hash"] = payload_hash();
    j["timing"] = {{"elapsed_seconds", elapsed_seconds}};
    return j;
}

RunReport RunReport::from_json(const json& j) {
    RunReport r;
    r.command = j.at("command").get<std::string>();
    r.tool_version = j.at("tool_version").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.verdict = j.at("verdict").get<std::string>();
    r.exit_code = j.at("exit_code").get<int>();
    r.result = j.at("result");
    if (j.contains("timing")) r.elapsed_seconds = j.at("timing").at("elapsed_seconds").get<double>();
    if (j.contains("payload_hash") && j.at("payload_hash").get<std::string>() != r.payload_hash()) {
        throw InvalidArgument("run report payload hash does not match its contents");
    }
    return r;
}

ParameterSpec ParameterSpec::parse(const std::string& text) {
    const auto eq = text.find('=');
    auto fail = [&] {
        throw ConfigError("parameter spec '" + text + "' must look like path=lo:hi:count", 0, "param");
    };
    if (eq == std::string::npos || eq == 0) fail();
    ParameterSpec p;
    p.path = text.substr(0, eq);
    std::istringstream rest(text.substr(eq + 1));
    std::string lo, hi, count;
    if (!std::getline(rest, lo, ':') || !std::getline(rest, hi, ':') || !std::getline(rest, count)) fail();
    try {
        std::size_t used = 0;
        p.lo = std::stod(lo, &used);
        if (used != lo.size()) fail();
        p.hi = std::stod(hi, &used);
        if (used != hi.size()) fail();
        p.count = std::stoi(count, &used);
        if (used != count.size()) fail();
    } catch (const std::logic_error&) {
        fail();
    }
    if (p.count < 1 || !std::isfinite(p.lo) || !std::isfinite(p.hi)) fail();
    return p;
}

std::vector<double> ParameterSpec::values() const {
    std::vector<double> v;
    for (int i = 0; i < count; ++i) v.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
    return v;
}

RunReport cmd_stability(const config::LatticeConfig& cfg, const RunOptions& opts) {
    const auto t0 = Clock::now();
    RunReport r = start("stability", config::format_lattice(cfg));
    const auto h = config::to_hamiltonian(cfg);
    const auto mono = dynamics::monodromy(h, integrator_for(cfg));
    const auto rep = symplectic::stability_verdict(mono.matrix, opts.stability_tol);
    r.result = {{"name", cfg.name},
                {"n", cfg.n},
                {"period", cfg.period},
                {"monodromy", transfer_json(mono)},
                {"stability", to_json(rep)}};
    if (rep.stable) {
        try {
            decomp::NormalFormOptions no;
            no.stability_tol = opts.stability_tol;
            const auto nf = decomp::stable_normal_form(mono.matrix, no);
            r.result["tunes"] = tunes_json(nf.angles);
        } catch (const Error& e) {
            r.result["normal_form_error"] = e.what();
        }
        set_verdict(r, "stable", kExitOk);
    } else {
        set_verdict(r, "unstable", kExitUnstable);
    }
    r.elapsed_seconds = seconds_since(t0);
    return r;
}

RunReport cmd_matched(const config::LatticeConfig& cfg, const RunOptions& opts) {
    const auto t0 = Clock::now();
    RunReport r = start("matched", config::format_lattice(cfg));
    const auto h = config::to_hamiltonian(cfg);
    envelope::MatchOptions mo;
    mo.integrator = integrator_for(cfg);
    mo.match_tol = cfg.match_tol.value_or(envelope::kMatchTol);
    mo.stability_tol = opts.stability_tol;
    r.result = {{"name", cfg.name}, {"n", cfg.n}, {"period", cfg.period}, {"match_tol", mo.match_tol}};
    try {
        const auto m = envelope::matched_envelope(h, mo);
        r.result["w0"] = to_json(m.initial.w);
        r.result["w_dot0"] = to_json(m.w_dot0);
        r.result["residual"] = m.residual;
        r.result["s0_symplectic_residual"] = m.s0_symplectic_residual;
        r.result["accepted"] = m.accepted;
        r.result["angles"] = angles_json(m.normal_form.angles);
        r.result["tunes"] = tunes_json(m.normal_form.angles);
        r.result["power_bound"] = m.power_bound(opts.stability_tol);
        r.result["envelope_symplectic_residual"] = m.trajectory.max_symplectic_residual();
        r.result["monodromy"] = transfer_json(m.monodromy);
        r.result["stability"] = to_json(m.report);
        if (scalar_compatible(cfg)) r.result["phase_tune"] = phase_tune(h, m.initial);
        if (m.accepted) set_verdict(r, "matched", kExitOk);
        else set_verdict(r, "unmatched", kExitFailure);
    } catch (const envelope::UnstableLattice& e) {
        r.result["stability"] = to_json(e.report());
        r.result["message"] = e.what();
        set_verdict(r, "unstable", kExitUnstable);
    } catch (const Unstable& e) {
        r.result["message"] = e.what();
        set_verdict(r, "unstable", kExitUnstable);
    } catch (const EnvelopeSingular& e) {
        r.result["message"] = e.what();
        r.result["singular_interval"] = json::array({e.t_lo(), e.t_hi()});
        set_verdict(r, "singular", kExitSingular);
    }
    r.elapsed_seconds = seconds_since(t0);
    return r;
}

RunReport cmd_monodromy(const config::LatticeConfig& cfg, const RunOptions&) {
    const auto t0 = Clock::now();
    RunReport r = start("monodromy", config::format_lattice(cfg));
    const auto h = config::to_hamiltonian(cfg);
    r.result = {{"name", cfg.name}, {"n", cfg.n}, {"period", cfg.period},
                {"monodromy", transfer_json(dynamics::monodromy(h, integrator_for(cfg)))}};
    set_verdict(r, "ok", kExitOk);
    r.elapsed_seconds = seconds_since(t0);
    return r;
}

RunReport cmd_scan(const config::LatticeConfig& cfg, const std::vector<ParameterSpec>& params,
                   const RunOptions& opts) {
    const auto t0 = Clock::now();
    if (params.empty() || params.size() > 2) throw ConfigError("scan takes one or two --param specs", 0, "param");
    std::string canonical = config::format_lattice(cfg);
    for (const auto& p : params) {
        config::LatticeConfig probe = cfg;
        config::set_parameter(probe, p.path, p.lo);
        canonical += "param " + p.path + "=" + config::format_number(p.lo) + ":" + config::format_number(p.hi) + ":" +
                     std::to_string(p.count) + "\n";
    }
    RunReport r = start("scan", canonical);

    const std::size_t outer = params[0].values().size();
    const std::size_t inner = params.size() == 2 ? params[1].values().size() : 1;
    std::vector<json> cells(outer * inner);
    const bool scalar = scalar_compatible(cfg);
    dynamics::IntegratorOptions io = integrator_for(cfg);
    io.richardson = false;

    parallel_for(cells.size(), opts.workers, [&](std::size_t idx) {
        std::vector<double> values{params[0].values()[idx / inner]};
        if (params.size() == 2) values.push_back(params[1].values()[idx % inner]);
        json cell = {{"index", idx},
                     {"params", values},
                     {"verdict", "error"},
                     {"max_modulus", nullptr},
                     {"trace", nullptr},
                     {"tunes", json::array()},
                     {"phase_tune", nullptr},
                     {"match_residual", nullptr},
                     {"message", ""}};
        try {
            config::LatticeConfig c = cfg;
            for (std::size_t k = 0; k < params.size(); ++k) config::set_parameter(c, params[k].path, values[k]);
            const auto h = config::to_hamiltonian(c);
            const auto mono = dynamics::monodromy(h, io);
            const auto rep = symplectic::stability_verdict(mono.matrix, opts.stability_tol);
            cell["max_modulus"] = rep.max_modulus;
            cell["trace"] = mono.matrix.trace();
            cell["verdict"] = rep.stable ? "stable" : "unstable";
            if (!rep.stable) {
                cell["message"] = rep.diagnostic;
            } else {
                decomp::NormalFormOptions no;
                no.stability_tol = opts.stability_tol;
                const auto nf = decomp::stable_normal_form(mono.matrix, no);
                cell["tunes"] = tunes_json(nf.angles);
                const bool scalar_cell = scalar && scalar_compatible(c);
                if (opts.matched_columns) {
                    envelope::MatchOptions mo;
                    mo.integrator = integrator_for(c);
                    mo.match_tol = c.match_tol.value_or(envelope::kMatchTol);
                    mo.stability_tol = opts.stability_tol;
                    const auto m = envelope::matched_envelope(h, mo);
                    cell["match_residual"] = m.residual;
                    if (scalar_cell) cell["phase_tune"] = phase_tune(h, m.initial);
                } else if (scalar_cell) {
                    cell["phase_tune"] = phase_tune(h, envelope::matched_initial_state(nf));
                }
            }
        } catch (const std::exception& e) {
            cell["verdict"] = "error";
            cell["message"] = e.what();
        }
        cells[idx] = std::move(cell);
    });

    json plist = json::array();
    for (const auto& p : params) plist.push_back({{"path", p.path}, {"values", p.values()}});
    std::size_t stable = 0;
    for (const auto& c : cells) stable += c["verdict"] == "stable";
    r.result = {{"name", cfg.name},
                {"n", cfg.n},
                {"parameters", plist},
                {"stable_cells", stable},
                {"cells", cells}};
    set_verdict(r, "ok", kExitOk);
    r.elapsed_seconds = seconds_since(t0);
    return r;
}

RunReport cmd_decompose(const Mat& m, const RunOptions& opts) {
    const auto t0 = Clock::now();
    RunReport r = start("decompose", config::format_matrix_file(m));
    symplectic::require_symplectic(m, symplectic::kSympTol, "input matrix");
    const auto parts = decomp::horizontal_polar(m);
    r.result["polar"] = {{"x", to_json(parts.x)},
                         {"y", to_json(parts.y)},
                         {"l", to_json(parts.l)},
                         {"q", to_json(parts.q)},
                         {"reconstruction_residual", (parts.reassemble() - m).norm() / m.norm()}};
    const auto rep = symplectic::stability_verdict(m, opts.stability_tol);
    r.result["stability"] = to_json(rep);
    if (rep.stable) {
        decomp::NormalFormOptions no;
        no.stability_tol = opts.stability_tol;
        r.result["normal_form"] = normal_form_json(decomp::stable_normal_form(m, no));
    } else {
        r.result["normal_form"] = nullptr;
        r.result["normal_form_error"] = rep.diagnostic;
    }
    set_verdict(r, "ok", kExitOk);
    r.elapsed_seconds = seconds_since(t0);
    return r;
}

RunReport cmd_normal_form(const Mat& m, const RunOptions& opts) {
    const auto t0 = Clock::now();
    RunReport r = start("normal-form", config::format_matrix_file(m));
    symplectic::require_symplectic(m, symplectic::kSympTol, "input matrix");
    const auto rep = symplectic::stability_verdict(m, opts.stability_tol);
    r.result["stability"] = to_json(rep);
    if (rep.stable) {
        decomp::NormalFormOptions no;
        no.stability_tol = opts.stability_tol;
        r.result["normal_form"] = normal_form_json(decomp::stable_normal_form(m, no));
        set_verdict(r, "stable", kExitOk);
    } else {
        r.result["message"] = rep.diagnostic;
        set_verdict(r, "unstable", kExitUnstable);
    }
    r.elapsed_seconds = seconds_since(t0);
    return r;
}

std::string scan_csv(const RunReport& report) {
    const auto& res = report.result;
    const int n = res.at("n").get<int>();
    std::ostringstream os;
    os << "index";
    for (const auto& p : res.at("parameters")) os << ',' << csv_text(p.at("path").get<std::string>());
    os << ",verdict,max_modulus,trace";
    for (int k = 1; k <= n; ++k) os << ",tune_" << k;
    os << ",phase_tune,match_residual,message\n";
    for (const auto& c : res.at("cells")) {
        os << c.at("index").get<std::size_t>();
        for (const auto& v : c.at("params")) os << ',' << csv_number(v);
        os << ',' << c.at("verdict").get<std::string>() << ',' << csv_number(c.at("max_modulus")) << ','
           << csv_number(c.at("trace"));
        const auto& tunes = c.at("tunes");
        for (int k = 0; k < n; ++k) os << ',' << (k < static_cast<int>(tunes.size()) ? csv_number(tunes[k]) : "");
        os << ',' << csv_number(c.at("phase_tune")) << ',' << csv_number(c.at("match_residual")) << ','
           << csv_text(c.at("message").get<std::string>()) << '\n';
    }
    return os.str();
}

std::string summary_csv(const RunReport& report) {
    std::ostringstream os;
    os << "key,value\n";
    os << "command," << report.command << "\n";
    os << "verdict," << report.verdict << "\n";
    os << "exit_code," << report.exit_code << "\n";
    os << "config_hash," << report.config_hash << "\n";
    for (const auto& [key, value] : report.result.items()) {
        if (value.is_number()) os << key << ',' << csv_number(value) << '\n';
        else if (value.is_boolean()) os << key << ',' << (value.get<bool>() ? "true" : "false") << '\n';
        else if (value.is_string()) os << key << ',' << csv_text(value.get<std::string>()) << '\n';
        else if (value.is_array() && !value.empty() && value[0].is_number()) {
            for (std::size_t k = 0; k < value.size(); ++k) os << key << '_' << k + 1 << ',' << csv_number(value[k]) << '\n';
        }
    }
    return os.str();
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
        dynamic_cast<const InvalidDimension*>(&e) || dynamic_cast<const NotSymplectic*>(&e)) {
        return kExitInput;
    }
    if (dynamic_cast<const Unstable*>(&e)) return kExitUnstable;
    if (dynamic_cast<const EnvelopeSingular*>(&e)) return kExitSingular;
    return kExitFailure;
}

}  // namespace hamstab::cli
