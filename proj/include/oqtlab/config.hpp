// config.hpp — the scenario configuration surface: a small key = value format
// with nested [section] tables, schema validation whose error messages name
// the violated model assumption, and the assembled specs for both engines.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oqtlab/models.hpp"

namespace oqtlab::config {

// ---------------------------------------------------------------------------
// Minimal TOML-like document: [a.b] section headers, key = value lines,
// values are strings ("..."), numbers, booleans, or arrays of numbers.
// ---------------------------------------------------------------------------

struct Value {
    enum class Kind { String, Number, Bool, NumberList } kind = Kind::Number;
    std::string str;
    double num = 0;
    bool boolean = false;
    std::vector<double> list;
};

struct Document {
    std::map<std::string, Value> entries; // "section.sub.key" -> value
    std::string raw;                      // canonical text for hashing

    bool has(const std::string& key) const { return entries.count(key) > 0; }
    const Value& at(const std::string& key) const {
        auto it = entries.find(key);
        require(it != entries.end(), "config: missing required key '" + key + "'");
        return it->second;
    }
    std::string get_string(const std::string& key) const {
        const Value& v = at(key);
        require(v.kind == Value::Kind::String, "config: key '" + key + "' must be a string");
        return v.str;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }
    double get_number(const std::string& key) const {
        const Value& v = at(key);
        require(v.kind == Value::Kind::Number, "config: key '" + key + "' must be a number");
        return v.num;
    }
    double get_number(const std::string& key, double fallback) const {
        return has(key) ? get_number(key) : fallback;
    }
    int get_int(const std::string& key, int fallback) const {
        return has(key) ? int(std::llround(get_number(key))) : fallback;
    }
    bool get_bool(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const Value& v = at(key);
        require(v.kind == Value::Kind::Bool, "config: key '" + key + "' must be a boolean");
        return v.boolean;
    }
    std::vector<double> get_list(const std::string& key) const {
        const Value& v = at(key);
        require(v.kind == Value::Kind::NumberList, "config: key '" + key + "' must be a number list");
        return v.list;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline Value parse_value(const std::string& text, int line_no) {
    Value v;
    std::string t = trim(text);
    require(!t.empty(), "config: empty value on line " + std::to_string(line_no));
    if (t.front() == '"') {
        require(t.size() >= 2 && t.back() == '"',
                "config: unterminated string on line " + std::to_string(line_no));
        v.kind = Value::Kind::String;
        v.str = t.substr(1, t.size() - 2);
        return v;
    }
    if (t == "true" || t == "false") {
        v.kind = Value::Kind::Bool;
        v.boolean = t == "true";
        return v;
    }
    if (t.front() == '[') {
        require(t.back() == ']', "config: unterminated list on line " + std::to_string(line_no));
        v.kind = Value::Kind::NumberList;
        std::string inner = t.substr(1, t.size() - 2);
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            std::size_t used = 0;
            double d = std::stod(item, &used);
            require(used == item.size(), "config: bad list entry '" + item + "' on line " +
                                             std::to_string(line_no));
            v.list.push_back(d);
        }
        return v;
    }
    std::size_t used = 0;
    v.num = std::stod(t, &used);
    require(used == t.size(), "config: bad value '" + t + "' on line " + std::to_string(line_no));
    v.kind = Value::Kind::Number;
    return v;
}

} // namespace detail

inline Document parse(const std::string& text) {
    Document doc;
    doc.raw = text;
    std::stringstream ss(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            require(line.back() == ']', "config: bad section header on line " + std::to_string(line_no));
            section = detail::trim(line.substr(1, line.size() - 2));
            require(!section.empty(), "config: empty section name on line " + std::to_string(line_no));
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos, "config: expected key = value on line " + std::to_string(line_no));
        std::string key = detail::trim(line.substr(0, eq));
        require(!key.empty(), "config: empty key on line " + std::to_string(line_no));
        std::string full = section.empty() ? key : section + "." + key;
        require(!doc.entries.count(full), "config: duplicate key '" + full + "'");
        doc.entries[full] = detail::parse_value(line.substr(eq + 1), line_no);
    }
    return doc;
}

inline Document parse_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

// FNV-1a hash of the canonical config text (reproducibility fingerprint).
inline std::string config_hash(const Document& doc) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : doc.raw) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Scenario schema
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    std::string experiment; // rte | isothermal | ness-adiabatic | cycle | spectrum
    std::vector<std::string> warnings;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = "out";

    models::SystemSpec system;
    std::vector<reservoirs::ReservoirSpec> reservoirs;
    std::vector<models::Schedule> envelopes;

    double u_max = 5.0;
    int modes = 12;            // glued modes per reservoir (Liouvillean engine)
    int modes_physical = 8;    // physical modes per reservoir (Hamiltonian engine)
    int n_max = 3;
    int n_fourier = 5;

    double g = 0.1;
    std::string variant = "standard"; // standard | c_adjoint
    double theta_fraction = 0.4;      // Im theta = -fraction * min_i(pi/beta_i, delta_i)

    std::vector<double> tau_list;
    double tau_star = 0;
    int cycles = 8;
    double t1 = 0;
    double sample_dt = 0.01;
    int substeps = 4;
    std::string initial_system = "excited"; // excited | ground | gibbs
    double beta_sys = 1.0;
    std::vector<double> g_sweep;

    Document doc;

    models::CnSpec liouvillean_spec() const {
        models::CnSpec spec;
        spec.system = system;
        spec.reservoirs = reservoirs;
        for (std::size_t r = 0; r < reservoirs.size(); ++r)
            spec.grids.push_back(reservoirs::make_glued_grid(u_max, modes));
        spec.envelopes = envelopes;
        spec.n_max = n_max;
        return spec;
    }
    std::vector<reservoirs::EnergyGrid> physical_grids() const {
        std::vector<reservoirs::EnergyGrid> g;
        for (std::size_t r = 0; r < reservoirs.size(); ++r)
            g.push_back(reservoirs::make_physical_grid(u_max, modes_physical));
        return g;
    }
    cplx theta() const {
        models::CnSpec spec = liouvillean_spec();
        return cplx(0.0, -theta_fraction * models::theta_strip(spec));
    }
    std::vector<double> temperatures() const {
        std::vector<double> t;
        for (auto& r : reservoirs) t.push_back(1.0 / r.beta);
        return t;
    }
};

inline void validate_scenario(ScenarioConfig& sc);

namespace detail {

inline models::Schedule parse_schedule(const Document& doc, const std::string& section) {
    models::Schedule s;
    if (!doc.has(section + ".kind")) return s;
    const std::string kind = doc.get_string(section + ".kind");
    if (kind == "constant") s.kind = models::Schedule::Kind::Constant;
    else if (kind == "linear") s.kind = models::Schedule::Kind::Linear;
    else if (kind == "smoothstep") s.kind = models::Schedule::Kind::Smoothstep;
    else if (kind == "cosine") s.kind = models::Schedule::Kind::Cosine;
    else if (kind == "sine-pulse") s.kind = models::Schedule::Kind::SinePulse;
    else throw lab_error("config: unknown schedule kind '" + kind + "' in [" + section + "]");
    s.a = doc.get_number(section + ".a", 1.0);
    s.b = doc.get_number(section + ".b", 0.0);
    s.omega = doc.get_number(section + ".omega", 0.0);
    s.phase = doc.get_number(section + ".phase", 0.0);
    s.validate_smooth(); // C_n.4/C_n.5: twice differentiable schedules only
    return s;
}

} // namespace detail

inline ScenarioConfig load_scenario(const Document& doc) {
    ScenarioConfig sc;
    sc.doc = doc;
    sc.experiment = doc.get_string("experiment");
    const bool known = sc.experiment == "rte" || sc.experiment == "isothermal" ||
                       sc.experiment == "ness-adiabatic" || sc.experiment == "cycle" ||
                       sc.experiment == "spectrum";
    require(known, "config: unknown experiment '" + sc.experiment + "'");
    sc.seed = std::uint64_t(doc.get_number("seed", 0));
    sc.threads = doc.get_int("threads", 1);
    sc.out_dir = doc.get_string("out", "out");

    // system
    const std::string stype = doc.get_string("system.type", "two-level");
    if (stype == "two-level") {
        sc.system = models::make_two_level();
    } else if (stype == "ladder") {
        auto en = doc.get_list("system.energies");
        sc.system = models::make_ladder(en);
    } else {
        throw lab_error("config: unknown system.type '" + stype + "'");
    }
    sc.system.drive = detail::parse_schedule(doc, "system.drive");

    // reservoirs: [reservoir.1], [reservoir.2], ...
    for (int r = 1;; ++r) {
        const std::string sec = "reservoir." + std::to_string(r);
        if (!doc.has(sec + ".beta")) break;
        reservoirs::ReservoirSpec rs;
        rs.beta = doc.get_number(sec + ".beta");
        rs.nu = doc.get_number(sec + ".nu", 0.0);
        rs.label = doc.get_string(sec + ".label", "R" + std::to_string(r));
        const std::string ff = doc.get_string(sec + ".form_factor", "gaussian-decay");
        rs.form_factor = reservoirs::make_form_factor(
            ff, doc.get_number(sec + ".c", 1.0), doc.get_number(sec + ".sigma", 1.5),
            doc.get_int(sec + ".p", 1), doc.get_number(sec + ".delta", 20.0));
        sc.reservoirs.push_back(rs);
        sc.envelopes.push_back(detail::parse_schedule(doc, sec + ".envelope"));
    }
    require(!sc.reservoirs.empty(), "config: at least one [reservoir.1] section required");

    sc.u_max = doc.get_number("grid.u_max", 5.0);
    sc.modes = doc.get_int("grid.modes", 12);
    sc.modes_physical = doc.get_int("grid.modes_physical", 8);
    sc.n_max = doc.get_int("grid.n_max", 3);
    sc.n_fourier = doc.get_int("grid.n_fourier", 5);

    sc.g = doc.get_number("coupling.g", 0.1);
    sc.variant = doc.get_string("coupling.variant", "standard");
    require(sc.variant == "standard" || sc.variant == "c_adjoint",
            "config: coupling.variant must be standard or c_adjoint");
    sc.theta_fraction = doc.get_number("coupling.theta_fraction", 0.4);
    if (doc.has("coupling.g_sweep")) sc.g_sweep = doc.get_list("coupling.g_sweep");

    if (doc.has("time.tau_list")) sc.tau_list = doc.get_list("time.tau_list");
    sc.tau_star = doc.get_number("time.tau_star", 0.0);
    sc.cycles = doc.get_int("time.cycles", 8);
    sc.t1 = doc.get_number("time.t1", 0.0);
    sc.sample_dt = doc.get_number("time.sample_dt", 0.01);
    sc.substeps = doc.get_int("time.substeps", 4);

    sc.initial_system = doc.get_string("initial.system", "excited");
    sc.beta_sys = doc.get_number("initial.beta_sys", 1.0);

    validate_scenario(sc);
    return sc;
}

// Schema validation. Error messages name the paper assumption a violation
// breaks (the C_n hypotheses of the model class).
inline void validate_scenario(ScenarioConfig& sc) {
    for (auto& r : sc.reservoirs) {
        r.validate();
        require(r.form_factor.delta_analyticity > 0,
                "validation (C_n.1): form factor of '" + r.label +
                    "' must declare a positive analyticity half-width delta");
    }
    // C_n.2 Fermi Golden Rule: the small system couples at the Bohr frequency
    if (sc.system.dim == 2) {
        double f2 = 0;
        for (auto& r : sc.reservoirs)
            f2 += std::abs(reservoirs::glue_form_factor(r, 2.0, 0.0));
        require(f2 > 1e-12,
                "validation (C_n.2, Fermi Golden Rule): every form factor vanishes at u = 2, so the "
                "small system is decoupled at its Bohr frequency");
    }
    // admissible deformation strip (Theorem 6.7 choice of k)
    require(sc.theta_fraction > 0 && sc.theta_fraction < 1,
            "validation (C_n.1/C_n.3): theta_fraction must lie in (0,1) so that |Im theta| < "
            "min_i(pi/beta_i, delta_i)");

    if (sc.experiment == "rte") {
        const double b0 = sc.reservoirs.front().beta;
        for (auto& r : sc.reservoirs)
            require(std::abs(r.beta - b0) < 1e-12,
                    "validation (rte): return to equilibrium needs a single reservoir or equal "
                    "temperatures (Thm 6.7 (ii))");
        for (auto& e : sc.envelopes)
            require(e.kind == models::Schedule::Kind::Constant,
                    "validation (rte): time-independent V required (C_n.4 with V(t) = V(0))");
    }
    if (sc.experiment == "isothermal") {
        const double b0 = sc.reservoirs.front().beta;
        const double n0 = sc.reservoirs.front().nu;
        for (auto& r : sc.reservoirs) {
            require(std::abs(r.beta - b0) < 1e-12 && std::abs(r.nu - n0) < 1e-12,
                    "validation (isothermal, Thm 7.3): a single temperature and chemical potential "
                    "is required");
        }
        require(!sc.tau_list.empty(), "validation (isothermal): time.tau_list required");
    }
    if (sc.experiment == "ness-adiabatic") {
        require(sc.reservoirs.size() >= 2,
                "validation (ness, Cor 6.10): at least two reservoirs required");
        require(sc.variant == "c_adjoint",
                "validation (ness, Thm 8.3): the C-adjoint variant encodes the NESS");
    }
    if (sc.experiment == "cycle") {
        require(sc.tau_star > 0, "validation (cycle, C_n.6): positive period tau_star required");
        bool periodic = sc.system.drive.periodic();
        for (auto& e : sc.envelopes) periodic = periodic || e.periodic();
        require(periodic, "validation (cycle, C_n.6): V(t) or H^S(t) must be tau_*-periodic");
        const double w = 2 * pi / sc.tau_star;
        for (auto& e : sc.envelopes)
            if (e.periodic())
                require(std::abs(std::remainder(e.omega, w)) < 1e-9,
                        "validation (cycle, C_n.6): every envelope frequency must be a multiple of "
                        "2 pi / tau_star");
        if (sc.system.drive.periodic())
            require(std::abs(std::remainder(sc.system.drive.omega, w)) < 1e-9,
                    "validation (cycle, C_n.6): the system drive must share the period tau_star");
        // resonant-period regime 2 pi / tau_star = 2: flagged, not asserted
        if (std::abs(w - 2.0) < 0.01 * 2.0)
            sc.warnings.push_back(
                "cycle period near the resonant value 2 pi / tau_star = 2: the state may oscillate "
                "between two resonances before settling; convergence is not asserted here");
    }
    if (!sc.g_sweep.empty())
        for (double gg : sc.g_sweep)
            require(gg > 0, "validation (spectrum): g_sweep entries must be positive");
}

} // namespace oqtlab::config
