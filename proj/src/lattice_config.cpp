#include "hamstab/lattice_config.hpp"

#include "hamstab/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

namespace hamstab::config {

namespace {

using LineMap = std::map<std::string, int>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> tokens(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string t; is >> t;) out.push_back(t);
    return out;
}

double parse_number(const std::string& text, int line, const std::string& field) {
    const std::string t = trim(text);
    double x = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    if (!t.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, x);
    if (t.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(x)) {
        throw ConfigError("line " + std::to_string(line) + ": field '" + field + "' expects a finite number, got '" +
                              t + "'",
                          line, field);
    }
    return x;
}

int parse_int(const std::string& text, int line, const std::string& field) {
    const std::string t = trim(text);
    int x = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw ConfigError("line " + std::to_string(line) + ": field '" + field + "' expects an integer, got '" + t + "'",
                          line, field);
    }
    return x;
}

Mat parse_matrix_value(const std::string& text, int n, int line, const std::string& field) {
    const auto rows = split(text, ';');
    if (static_cast<int>(rows.size()) != n) {
        throw ConfigError("line " + std::to_string(line) + ": field '" + field + "' must have " + std::to_string(n) +
                              " rows separated by ';', got " + std::to_string(rows.size()),
                          line, field);
    }
    Mat m(n, n);
    for (int i = 0; i < n; ++i) {
        const auto entries = tokens(rows[i]);
        if (static_cast<int>(entries.size()) != n) {
            throw ConfigError("line " + std::to_string(line) + ": row " + std::to_string(i + 1) + " of field '" + field +
                                  "' must have " + std::to_string(n) + " entries, got " +
                                  std::to_string(entries.size()),
                              line, field);
        }
        for (int j = 0; j < n; ++j) m(i, j) = parse_number(entries[j], line, field);
    }
    return m;
}

std::string format_matrix(const Mat& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (i) out += "; ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ' ';
            out += format_number(m(i, j));
        }
    }
    return out;
}

const char* kind_name(SegmentKind k) { return k == SegmentKind::constant ? "constant" : "harmonic"; }

int line_of(const std::vector<LineMap>* lines, std::size_t seg, const std::string& field) {
    if (!lines || seg >= lines->size()) return 0;
    auto it = (*lines)[seg].find(field);
    return it == (*lines)[seg].end() ? 0 : it->second;
}

void validate_impl(const LatticeConfig& cfg, const std::vector<LineMap>* lines, const LineMap* top) {
    auto top_line = [&](const std::string& f) {
        if (!top) return 0;
        auto it = top->find(f);
        return it == top->end() ? 0 : it->second;
    };
    if (cfg.n < 1) throw ConfigError("n must be a positive integer", top_line("n"), "n");
    if (!(cfg.period > 0.0) || !std::isfinite(cfg.period)) {
        throw ConfigError("period must be positive", top_line("period"), "period");
    }
    if (cfg.elements.empty()) throw ConfigError("lattice has no segments", 0, "segment");
    for (const auto* tol : {&cfg.integ_tol, &cfg.match_tol}) {
        if (*tol && !(**tol > 0.0)) {
            const std::string f = tol == &cfg.integ_tol ? "integ_tol" : "match_tol";
            throw ConfigError(f + " must be positive", top_line(f), f);
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < cfg.elements.size(); ++i) {
        const auto& s = cfg.elements[i];
        const std::string where = "segment " + std::to_string(i) + " (" + kind_name(s.kind) + ")";
        if (!(s.duration > 0.0)) {
            throw ConfigError(where + ": duration must be positive", line_of(lines, i, "duration"), "duration");
        }
        total += s.duration;
        auto check = [&](const Mat& m, const std::string& field, bool symmetric) {
            const int line = line_of(lines, i, field);
            if (m.rows() != cfg.n || m.cols() != cfg.n) {
                throw ConfigError(where + ": " + field + " must be " + std::to_string(cfg.n) + "x" +
                                      std::to_string(cfg.n),
                                  line, field);
            }
            if (!symmetric) return;
            const double asym = (m - m.transpose()).norm();
            if (asym > dynamics::kCoeffTol * std::max(1.0, m.norm())) {
                std::ostringstream os;
                os << where << ": " << field << " is not symmetric (residual ||X - X^T||_F = " << asym << ")";
                throw ConfigError(os.str(), line, field);
            }
        };
        if (s.kind == SegmentKind::constant) {
            check(s.kappa, "kappa", true);
        } else {
            check(s.a, "a", true);
            check(s.q, "q", true);
            if (!std::isfinite(s.frequency)) {
                throw ConfigError(where + ": frequency must be finite", line_of(lines, i, "frequency"), "frequency");
            }
        }
        check(s.r, "r", false);
        check(s.mass_inv, "mass_inv", true);
        const auto sv = Eigen::JacobiSVD<Mat>(s.mass_inv).singularValues();
        if (!(sv(sv.size() - 1) > 0.0) || sv(0) / sv(sv.size() - 1) > 1e12) {
            std::ostringstream os;
            os << where << ": mass_inv is not invertible (singular values " << sv(0) << " .. " << sv(sv.size() - 1)
               << ")";
            throw ConfigError(os.str(), line_of(lines, i, "mass_inv"), "mass_inv");
        }
    }
    if (std::abs(total - cfg.period) > 1e-12 * cfg.period) {
        std::ostringstream os;
        os.precision(17);
        os << "segment durations sum to " << total << " but period is " << cfg.period;
        throw ConfigError(os.str(), top_line("period"), "period");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'", 0, "path");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool is_symmetric_field(const std::string& f) { return f == "kappa" || f == "mass_inv" || f == "a" || f == "q"; }

}  // namespace

std::string format_number(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

LatticeConfig parse_lattice(const std::string& text) {
    LatticeConfig cfg;
    cfg.n = 0;
    LineMap top;
    std::vector<LineMap> lines;
    std::vector<int> section_lines;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("line " + std::to_string(line) + ": unterminated section", line, s);
            const std::string kind = trim(s.substr(1, s.size() - 2));
            if (kind != "constant" && kind != "harmonic") {
                throw ConfigError("line " + std::to_string(line) + ": unknown segment kind '" + kind + "'", line, kind);
            }
            if (cfg.n < 1) {
                throw ConfigError("line " + std::to_string(line) + ": 'n' must be set before the first segment", line,
                                  "n");
            }
            SegmentConfig seg;
            seg.kind = kind == "constant" ? SegmentKind::constant : SegmentKind::harmonic;
            seg.r = Mat::Zero(cfg.n, cfg.n);
            seg.mass_inv = Mat::Identity(cfg.n, cfg.n);
            cfg.elements.push_back(seg);
            lines.emplace_back();
            section_lines.push_back(line);
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'", line, s);
        }
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        auto& seen = cfg.elements.empty() ? top : lines.back();
        if (!seen.emplace(key, line).second) {
            throw ConfigError("line " + std::to_string(line) + ": duplicate field '" + key + "'", line, key);
        }
        if (cfg.elements.empty()) {
            if (key == "name") cfg.name = value;
            else if (key == "n") cfg.n = parse_int(value, line, key);
            else if (key == "period") cfg.period = parse_number(value, line, key);
            else if (key == "integ_tol") cfg.integ_tol = parse_number(value, line, key);
            else if (key == "match_tol") cfg.match_tol = parse_number(value, line, key);
            else throw ConfigError("line " + std::to_string(line) + ": unknown field '" + key + "'", line, key);
            if (key == "n" && cfg.n < 1) {
                throw ConfigError("line " + std::to_string(line) + ": n must be >= 1", line, key);
            }
            continue;
        }
        auto& seg = cfg.elements.back();
        const bool harmonic = seg.kind == SegmentKind::harmonic;
        if (key == "duration") seg.duration = parse_number(value, line, key);
        else if (key == "r") seg.r = parse_matrix_value(value, cfg.n, line, key);
        else if (key == "mass_inv") seg.mass_inv = parse_matrix_value(value, cfg.n, line, key);
        else if (!harmonic && key == "kappa") seg.kappa = parse_matrix_value(value, cfg.n, line, key);
        else if (harmonic && key == "a") seg.a = parse_matrix_value(value, cfg.n, line, key);
        else if (harmonic && key == "q") seg.q = parse_matrix_value(value, cfg.n, line, key);
        else if (harmonic && key == "frequency") seg.frequency = parse_number(value, line, key);
        else {
            throw ConfigError("line " + std::to_string(line) + ": unknown field '" + key + "' in " +
                                  kind_name(seg.kind) + " segment",
                              line, key);
        }
    }
    for (const char* key : {"n", "period"}) {
        if (!top.count(key)) throw ConfigError(std::string("missing required field '") + key + "'", 0, key);
    }
    for (std::size_t i = 0; i < cfg.elements.size(); ++i) {
        const bool harmonic = cfg.elements[i].kind == SegmentKind::harmonic;
        const std::vector<std::string> required =
            harmonic ? std::vector<std::string>{"duration", "a", "q", "frequency"}
                     : std::vector<std::string>{"duration", "kappa"};
        for (const auto& key : required) {
            if (!lines[i].count(key)) {
                throw ConfigError("line " + std::to_string(section_lines[i]) + ": segment " + std::to_string(i) +
                                      " is missing field '" + key + "'",
                                  section_lines[i], key);
            }
        }
    }
    validate_impl(cfg, &lines, &top);
    return cfg;
}

LatticeConfig load_lattice(const std::string& path) { return parse_lattice(read_file(path)); }

void validate(const LatticeConfig& cfg) { validate_impl(cfg, nullptr, nullptr); }

std::string format_lattice(const LatticeConfig& cfg) {
    std::ostringstream os;
    os << "name = " << cfg.name << "\n";
    os << "n = " << cfg.n << "\n";
    os << "period = " << format_number(cfg.period) << "\n";
    if (cfg.integ_tol) os << "integ_tol = " << format_number(*cfg.integ_tol) << "\n";
    if (cfg.match_tol) os << "match_tol = " << format_number(*cfg.match_tol) << "\n";
    for (const auto& s : cfg.elements) {
        os << "\n[" << kind_name(s.kind) << "]\n";
        os << "duration = " << format_number(s.duration) << "\n";
        if (s.kind == SegmentKind::constant) {
            os << "kappa = " << format_matrix(s.kappa) << "\n";
        } else {
            os << "frequency = " << format_number(s.frequency) << "\n";
            os << "a = " << format_matrix(s.a) << "\n";
            os << "q = " << format_matrix(s.q) << "\n";
        }
        os << "r = " << format_matrix(s.r) << "\n";
        os << "mass_inv = " << format_matrix(s.mass_inv) << "\n";
    }
    return os.str();
}

void save_lattice(const LatticeConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'", 0, "path");
    out << format_lattice(cfg);
}

dynamics::PeriodicHamiltonian to_hamiltonian(const LatticeConfig& cfg) {
    validate(cfg);
    std::vector<dynamics::Segment> segs;
    for (const auto& s : cfg.elements) {
        if (s.kind == SegmentKind::constant) {
            segs.push_back(dynamics::Segment::make_constant(s.duration, {s.kappa, s.r, s.mass_inv}));
        } else {
            segs.push_back(dynamics::Segment::make_harmonic(s.duration, s.a, s.q, s.frequency, s.r, s.mass_inv));
        }
    }
    return dynamics::PeriodicHamiltonian(cfg.n, std::move(segs));
}

void set_parameter(LatticeConfig& cfg, const std::string& path, double value) {
    auto fail = [&](const std::string& why) { throw ConfigError("parameter '" + path + "': " + why, 0, path); };
    if (!std::isfinite(value)) fail("value must be finite");
    const auto parts = split(path, '.');
    if (parts.size() == 1 && parts[0] == "period") {
        if (!(value > 0.0)) fail("period must be positive");
        const double scale = value / cfg.period;
        for (auto& s : cfg.elements) s.duration *= scale;
        cfg.period = value;
        return;
    }
    if (parts.size() < 3 || parts[0] != "segment") fail("unknown parameter path");
    int idx = -1;
    const auto res = std::from_chars(parts[1].data(), parts[1].data() + parts[1].size(), idx);
    if (res.ec != std::errc() || res.ptr != parts[1].data() + parts[1].size() || idx < 0 ||
        idx >= static_cast<int>(cfg.elements.size())) {
        fail("segment index out of range");
    }
    auto& s = cfg.elements[idx];
    const std::string& field = parts[2];
    if (field == "duration" || field == "frequency") {
        if (parts.size() != 3) fail("scalar field takes no indices");
        if (field == "duration") {
            if (!(value > 0.0)) fail("duration must be positive");
            cfg.period += value - s.duration;
            s.duration = value;
        } else {
            if (s.kind != SegmentKind::harmonic) fail("frequency exists only on harmonic segments");
            s.frequency = value;
        }
        return;
    }
    Mat* target = nullptr;
    if (field == "r") target = &s.r;
    else if (field == "mass_inv") target = &s.mass_inv;
    else if (field == "kappa" && s.kind == SegmentKind::constant) target = &s.kappa;
    else if ((field == "a" || field == "q") && s.kind == SegmentKind::harmonic) target = field == "a" ? &s.a : &s.q;
    else fail("unknown field '" + field + "' for a " + kind_name(s.kind) + " segment");
    int row = 0, col = 0;
    if (parts.size() == 5) {
        row = parse_int(parts[3], 0, path);
        col = parse_int(parts[4], 0, path);
    } else if (parts.size() != 3 || cfg.n != 1) {
        fail("matrix fields need .<row>.<col> indices when n > 1");
    }
    if (row < 0 || col < 0 || row >= cfg.n || col >= cfg.n) fail("matrix index out of range");
    (*target)(row, col) = value;
    if (is_symmetric_field(field)) (*target)(col, row) = value;
}

Mat parse_matrix(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    int n = -1;
    Mat m;
    int row = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (n < 0) {
            n = parse_int(s, line, "n");
            if (n < 1) throw ConfigError("line " + std::to_string(line) + ": n must be >= 1", line, "n");
            m.resize(2 * n, 2 * n);
            continue;
        }
        if (row >= 2 * n) throw ConfigError("line " + std::to_string(line) + ": too many rows", line, "row");
        const auto entries = tokens(s);
        if (static_cast<int>(entries.size()) != 2 * n) {
            throw ConfigError("line " + std::to_string(line) + ": expected " + std::to_string(2 * n) + " entries, got " +
                                  std::to_string(entries.size()),
                              line, "row");
        }
        for (int j = 0; j < 2 * n; ++j) m(row, j) = parse_number(entries[j], line, "row");
        ++row;
    }
    if (n < 0) throw ConfigError("matrix file is empty", 0, "n");
    if (row != 2 * n) {
        throw ConfigError("expected " + std::to_string(2 * n) + " rows, got " + std::to_string(row), line, "row");
    }
    return m;
}

Mat load_matrix(const std::string& path) { return parse_matrix(read_file(path)); }

std::string format_matrix_file(const Mat& m) {
    std::string out = std::to_string(m.rows() / 2) + "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ' ';
            out += format_number(m(i, j));
        }
        out += '\n';
    }
    return out;
}

}  // namespace hamstab::config
