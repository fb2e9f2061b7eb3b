#include "hamstab/commands.hpp"
#include "hamstab/errors.hpp"
#include "hamstab/lattice_config.hpp"
#include "hamstab/symplectic_core.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace hamstab;
using namespace hamstab::cli;
using config::LatticeConfig;
namespace fs = std::filesystem;

namespace {

const char* kSho = R"(# unit oscillator
name = sho
n = 1
period = 6.283185307179586

[constant]
duration = 6.283185307179586
kappa = 1
mass_inv = 1
r = 0
)";

const char* kFodo = R"(name = fodo
n = 2
period = 4

[constant]
duration = 0.5
kappa = 1.2 0; 0 -1.2

[constant]
duration = 1.5
kappa = 0 0; 0 0

[constant]
duration = 0.5
kappa = -1.2 0; 0 1.2

[constant]
duration = 1.5
kappa = 0 0; 0 0
)";

std::string scalar_fodo(double k, double focus, double drift) {
    std::ostringstream os;
    os << "name = fodo-x\nn = 1\nperiod = " << config::format_number(2 * focus + 2 * drift) << "\n";
    os << "\n[constant]\nduration = " << config::format_number(focus) << "\nkappa = " << config::format_number(k) << "\n";
    os << "\n[constant]\nduration = " << config::format_number(drift) << "\nkappa = 0\n";
    os << "\n[constant]\nduration = " << config::format_number(focus) << "\nkappa = " << config::format_number(-k) << "\n";
    os << "\n[constant]\nduration = " << config::format_number(drift) << "\nkappa = 0\n";
    return os.str();
}

std::string mathieu_text(double a, double q) {
    std::ostringstream os;
    os << "name = mathieu\nn = 1\nperiod = 3.141592653589793\n\n[harmonic]\nduration = 3.141592653589793\n"
       << "frequency = 2\na = " << config::format_number(a) << "\nq = " << config::format_number(-q) << "\n";
    return os.str();
}

// Trace of the Mathieu monodromy from a plain fixed-step RK4 on x'' = -(a - 2q cos 2t) x.
double mathieu_trace(double a, double q, int steps = 8192) {
    const double h = std::numbers::pi / steps;
    double tr = 0.0;
    for (int col = 0; col < 2; ++col) {
        double x = col == 0 ? 1.0 : 0.0, p = col == 0 ? 0.0 : 1.0;
        auto acc = [&](double t, double xx) { return -(a - 2.0 * q * std::cos(2.0 * t)) * xx; };
        for (int k = 0; k < steps; ++k) {
            const double t = k * h;
            const double k1x = p, k1p = acc(t, x);
            const double k2x = p + 0.5 * h * k1p, k2p = acc(t + 0.5 * h, x + 0.5 * h * k1x);
            const double k3x = p + 0.5 * h * k2p, k3p = acc(t + 0.5 * h, x + 0.5 * h * k2x);
            const double k4x = p + h * k3p, k4p = acc(t + h, x + h * k3x);
            x += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
            p += h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
        }
        tr += col == 0 ? x : p;
    }
    return tr;
}

fs::path scratch_file(const std::string& name, const std::string& text) {
    const fs::path dir = fs::temp_directory_path() / "hamstab_test_cli";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

template <class Fn>
ConfigError config_error(Fn&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected ConfigError");
    return ConfigError("", 0, "");
}

}  // namespace

TEST_CASE("load minimal oscillator") {
    const auto cfg = config::load_lattice(scratch_file("sho.lat", kSho).string());
    CHECK(cfg.name == "sho");
    CHECK(cfg.n == 1);
    REQUIRE(cfg.elements.size() == 1);
    CHECK(cfg.elements[0].kappa(0, 0) == 1.0);
    CHECK(config::to_hamiltonian(cfg).period() == doctest::Approx(2 * std::numbers::pi));
}

TEST_CASE("load errors name the field and line") {
    const auto asym = config_error([] {
        config::parse_lattice("name = a\nn = 2\nperiod = 1\n\n[constant]\nduration = 1\nkappa = 1 2; 0 1\n");
    });
    CHECK(asym.field() == "kappa");
    CHECK(asym.line() == 7);
    CHECK(std::string(asym.what()).find("kappa") != std::string::npos);
    CHECK(std::string(asym.what()).find("residual") != std::string::npos);

    const auto short_sum = config_error([] {
        config::parse_lattice("name = a\nn = 1\nperiod = 1\n\n[constant]\nduration = 0.9\nkappa = 1\n");
    });
    CHECK(short_sum.field() == "period");

    const auto unknown = config_error([] { config::parse_lattice("name = a\nn = 1\nperiod = 1\nspeed = 3\n"); });
    CHECK(unknown.field() == "speed");
    CHECK(unknown.line() == 4);

    const auto dup = config_error([] {
        config::parse_lattice("name = a\nn = 1\nperiod = 1\n\n[constant]\nduration = 1\nkappa = 1\nkappa = 2\n");
    });
    CHECK(dup.line() == 8);

    const auto bad_number = config_error([] {
        config::parse_lattice("name = a\nn = 1\nperiod = 1\n\n[constant]\nduration = one\nkappa = 1\n");
    });
    CHECK(bad_number.field() == "duration");

    const auto singular_mass = config_error([] {
        config::parse_lattice("name = a\nn = 1\nperiod = 1\n\n[constant]\nduration = 1\nkappa = 1\nmass_inv = 0\n");
    });
    CHECK(singular_mass.field() == "mass_inv");

    CHECK_THROWS_AS(config::load_lattice("/nonexistent/lattice.lat"), ConfigError);
}

TEST_CASE("canonical form round-trips byte for byte") {
    for (const std::string text : {std::string(kSho), std::string(kFodo), mathieu_text(0.2, 0.1),
                                   scalar_fodo(0.7, 0.3, 1.1)}) {
        const auto canonical = config::format_lattice(config::parse_lattice(text));
        const auto path = scratch_file("canon.lat", canonical);
        config::save_lattice(config::load_lattice(path.string()), path.string());
        CHECK(slurp(path) == canonical);
        CHECK(config::format_lattice(config::parse_lattice(canonical)) == canonical);
    }
}

TEST_CASE("set_parameter addresses config fields") {
    auto cfg = config::parse_lattice(kFodo);
    config::set_parameter(cfg, "segment.1.duration", 2.5);
    CHECK(cfg.period == doctest::Approx(5.0));
    config::set_parameter(cfg, "segment.0.kappa.0.1", 0.3);
    CHECK(cfg.elements[0].kappa(1, 0) == 0.3);
    config::set_parameter(cfg, "period", 10.0);
    CHECK(cfg.elements[1].duration == doctest::Approx(5.0));
    CHECK_THROWS_AS(config::set_parameter(cfg, "segment.9.duration", 1.0), ConfigError);
    CHECK_THROWS_AS(config::set_parameter(cfg, "segment.0.kappa", 1.0), ConfigError);
    CHECK_THROWS_AS(config::set_parameter(cfg, "segment.0.frequency", 1.0), ConfigError);
    CHECK_THROWS_AS(config::set_parameter(cfg, "bogus", 1.0), ConfigError);
}

TEST_CASE("matrix file format") {
    const Mat m = config::parse_matrix("1\n1 1\n0 1\n");
    CHECK(m(0, 1) == 1.0);
    CHECK(config::parse_matrix(config::format_matrix_file(m)) == m);
    CHECK_THROWS_AS(config::parse_matrix("1\n1 1\n"), ConfigError);
    CHECK_THROWS_AS(config::parse_matrix("1\n1 1 1\n0 1\n"), ConfigError);
}

TEST_CASE("stability command") {
    const auto sho = cmd_stability(config::parse_lattice(kSho));
    CHECK(sho.verdict == "stable");
    CHECK(sho.exit_code == kExitOk);
    const auto& st = sho.result["stability"];
    for (const auto& z : st["eigenvalues"]) {
        CHECK(std::abs(z[0].get<double>() - 1.0) < 1e-8);
        CHECK(std::abs(z[1].get<double>()) < 1e-8);
    }
    REQUIRE(st["clusters"].size() == 1);
    CHECK(st["clusters"][0]["krein"] == nlohmann::json::array({1, 1}));

    const auto over = cmd_stability(config::parse_lattice(scalar_fodo(40.0, 0.5, 1.5)));
    const double over_trace = over.result["monodromy"]["matrix"][0][0].get<double>() +
                              over.result["monodromy"]["matrix"][1][1].get<double>();
    CHECK(std::abs(over_trace) > 2.0);
    CHECK(over.verdict == "unstable");
    CHECK(over.exit_code == kExitUnstable);

    CHECK(std::abs(mathieu_trace(0.2, 0.1)) < 2.0);
    CHECK(cmd_stability(config::parse_lattice(mathieu_text(0.2, 0.1))).verdict == "stable");

    const auto fodo = cmd_stability(config::parse_lattice(kFodo));
    CHECK(fodo.verdict == "stable");
    CHECK(fodo.result["tunes"].size() == 2);
}

TEST_CASE("matched command") {
    const auto focus = cmd_matched(config::parse_lattice(
        "name = f\nn = 1\nperiod = 1\n\n[constant]\nduration = 1\nkappa = 4\n"));
    CHECK(focus.verdict == "matched");
    CHECK(focus.exit_code == kExitOk);
    CHECK(std::abs(focus.result["w0"][0][0].get<double>() - std::pow(4.0, -0.25)) < 1e-9);
    CHECK(std::abs(focus.result["w_dot0"][0][0].get<double>()) < 1e-9);

    const auto sho = cmd_matched(config::parse_lattice(kSho));
    CHECK(std::abs(sho.result["w0"][0][0].get<double>() - 1.0) < 1e-9);
    CHECK(sho.result["residual"].get<double>() <= 1e-6);

    const auto bad = cmd_matched(config::parse_lattice(scalar_fodo(40.0, 0.5, 1.5)));
    CHECK(bad.exit_code == kExitUnstable);
    CHECK(bad.result["stability"]["stable"] == false);
    CHECK_FALSE(bad.result.contains("w0"));

    const auto fodo = cmd_matched(config::parse_lattice(kFodo));
    CHECK(fodo.verdict == "matched");
    CHECK(fodo.result["w0"].size() == 2);
}

TEST_CASE("decompose command") {
    const auto id = cmd_decompose(Mat::Identity(2, 2));
    CHECK(id.exit_code == kExitOk);
    CHECK(id.result["polar"]["l"][0][0].get<double>() == doctest::Approx(1.0));
    CHECK(std::abs(id.result["polar"]["q"][0][0].get<double>()) < 1e-15);
    CHECK(id.result["normal_form"]["angles"][0].get<double>() == doctest::Approx(0.0));

    Mat drift(2, 2);
    drift << 1, 1, 0, 1;
    const auto d = cmd_decompose(drift);
    CHECK(d.exit_code == kExitOk);
    CHECK(std::abs(d.result["polar"]["l"][0][0].get<double>() - 1.0 / std::sqrt(2.0)) < 1e-12);
    CHECK(d.result["normal_form"].is_null());
    CHECK(d.result.contains("normal_form_error"));

    const auto rot = cmd_decompose(symplectic::rotation_block(0.7));
    REQUIRE(rot.result["normal_form"]["angles"].size() == 1);
    CHECK(std::abs(rot.result["normal_form"]["angles"][0].get<double>() - 0.7) < 1e-12);

    Mat skew = Mat::Identity(2, 2);
    skew(0, 1) = 0.5;
    skew(1, 0) = 0.5;
    CHECK_THROWS_AS(cmd_decompose(skew), NotSymplectic);

    Mat hyper(2, 2);
    hyper << 2, 0, 0, 0.5;
    CHECK(cmd_normal_form(hyper).exit_code == kExitUnstable);
    CHECK(cmd_normal_form(symplectic::rotation_block(0.7)).exit_code == kExitOk);
}

TEST_CASE("single-cell scan matches the stability command") {
    const auto cfg = config::parse_lattice(mathieu_text(0.2, 0.1));
    const auto single = cmd_scan(cfg, {ParameterSpec::parse("segment.0.a=0.2:0.2:1")});
    const auto stab = cmd_stability(cfg);
    REQUIRE(single.result["cells"].size() == 1);
    const auto& cell = single.result["cells"][0];
    CHECK(cell["verdict"] == stab.verdict);
    CHECK(std::abs(cell["max_modulus"].get<double>() - stab.result["stability"]["max_modulus"].get<double>()) < 1e-12);
    CHECK(std::abs(cell["tunes"][0].get<double>() - stab.result["tunes"][0].get<double>()) < 1e-12);
}

TEST_CASE("scan grid layout and tune column") {
    const auto cfg = config::parse_lattice(scalar_fodo(1.0, 0.5, 1.0));
    RunOptions opts;
    opts.workers = 2;
    const auto grid = cmd_scan(cfg, {ParameterSpec::parse("segment.1.duration=0.5:2:4"),
                                     ParameterSpec::parse("segment.3.duration=0.5:2:3")}, opts);
    const auto& cells = grid.result["cells"];
    REQUIRE(cells.size() == 12);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        CHECK(cells[i]["index"] == i);
        CHECK(cells[i]["params"][0].get<double>() == doctest::Approx(0.5 + 0.5 * (i / 3)));
        CHECK(cells[i]["params"][1].get<double>() == doctest::Approx(0.5 + 0.75 * (i % 3)));
        if (cells[i]["verdict"] != "stable") continue;
        const double tune = cells[i]["tunes"][0].get<double>();
        const double phase = cells[i]["phase_tune"].get<double>();
        const double frac = phase - std::floor(phase);
        CHECK(std::min(std::abs(frac - tune), 1.0 - std::abs(frac - tune)) < 1e-7);
    }
    const auto csv = scan_csv(grid);
    CHECK(csv.rfind("index,segment.1.duration,segment.3.duration,verdict,max_modulus,trace,tune_1,"
                    "phase_tune,match_residual,message\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);

    CHECK_THROWS_AS(cmd_scan(cfg, {ParameterSpec::parse("segment.7.duration=0:1:2")}), ConfigError);
    CHECK_THROWS_AS(ParameterSpec::parse("segment.1.duration=0:1"), ConfigError);
    CHECK_THROWS_AS(ParameterSpec::parse("=0:1:2"), ConfigError);
}

TEST_CASE("reports are deterministic and reload losslessly") {
    const auto cfg = config::parse_lattice(kFodo);
    const auto a = cmd_matched(cfg);
    const auto b = cmd_matched(cfg);
    CHECK(a.payload_hash() == b.payload_hash());
    CHECK(a.config_hash == b.config_hash);

    RunOptions one, two;
    one.workers = 1;
    two.workers = 3;
    const auto spec = std::vector{ParameterSpec::parse("segment.0.kappa.0.0=0.5:1.5:5")};
    CHECK(cmd_scan(cfg, spec, one).payload_hash() == cmd_scan(cfg, spec, two).payload_hash());

    const auto j = a.to_json();
    const auto back = RunReport::from_json(nlohmann::json::parse(j.dump()));
    CHECK(back.to_json() == j);
    CHECK(back.payload_hash() == a.payload_hash());

    auto tampered = j;
    tampered["verdict"] = "unmatched";
    CHECK_THROWS_AS(RunReport::from_json(tampered), InvalidArgument);
}

TEST_CASE("exit codes for escaping errors") {
    CHECK(exit_code_for(ConfigError("x", 1, "f")) == kExitInput);
    CHECK(exit_code_for(NotSymplectic("x", 1.0)) == kExitInput);
    CHECK(exit_code_for(EnvelopeSingular("x", 0, 1)) == kExitSingular);
    CHECK(exit_code_for(Unstable("x", InstabilityKind::off_circle, 2.0)) == kExitUnstable);
    CHECK(exit_code_for(IntegrationError("x")) == kExitFailure);
}
