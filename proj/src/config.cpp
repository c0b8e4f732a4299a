// SPDX-License-Identifier: Apache-2.0
#include "fsilab/config.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <fstream>
#include <set>
#include <sstream>

#include "fsilab/errors.hpp"

namespace fsilab {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
    bool in_str = false;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
        if (s[i] == '#' && !in_str) return s.substr(0, i);
    }
    return s;
}

bool is_bare_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

double parse_number(const std::string& tok, int line) {
    std::string t = tok;
    t.erase(std::remove(t.begin(), t.end(), '_'), t.end());
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    if (t == "nan" || t == "+nan" || t == "-nan")
        throw ConfigError("line " + std::to_string(line) + ": NaN is not accepted");
    size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != t.size() || t.empty()) throw ConfigError("line " + std::to_string(line) + ": cannot parse value '" + tok + "'");
    return v;
}

ConfigValue parse_value(const std::string& raw, int line) {
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError("line " + std::to_string(line) + ": missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw ConfigError("line " + std::to_string(line) + ": unterminated string");
        std::string out;
        for (size_t i = 1; i + 1 < v.size(); ++i) {
            if (v[i] == '\\' && i + 2 < v.size()) {
                char n = v[++i];
                out += n == 'n' ? '\n' : n == 't' ? '\t' : n;
            } else {
                out += v[i];
            }
        }
        return out;
    }
    if (v == "true") return true;
    if (v == "false") return false;
    if (v.front() == '[') {
        if (v.back() != ']') throw ConfigError("line " + std::to_string(line) + ": arrays must close on the same line");
        std::vector<double> arr;
        std::stringstream ss(v.substr(1, v.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;  // trailing comma
            arr.push_back(parse_number(item, line));
        }
        return arr;
    }
    return parse_number(v, line);
}

std::string type_name(const ConfigValue& v) {
    switch (v.index()) {
        case 0: return "number";
        case 1: return "boolean";
        case 2: return "string";
        default: return "array";
    }
}

// Typed access to one section; every key read is marked so leftovers can be reported.
class Section {
public:
    Section(const ConfigDocument& doc, std::string name, std::set<std::string>& used)
        : name_(std::move(name)), used_(used) {
        auto it = doc.sections.find(name_);
        if (it != doc.sections.end()) entries_ = &it->second;
    }
    bool present() const { return entries_ != nullptr; }
    bool has(const std::string& key) const { return entries_ && entries_->count(key); }

    void number(const std::string& key, double& out) {
        if (auto* v = get(key)) out = as<double>(key, *v);
    }
    void positive(const std::string& key, double& out) {
        number(key, out);
        if (!(out > 0.0)) fail(key, "must be > 0");
    }
    void integer(const std::string& key, int& out, int min_value) {
        if (auto* v = get(key)) {
            double d = as<double>(key, *v);
            if (d != std::floor(d) || std::abs(d) > 1e9) fail(key, "must be an integer");
            out = static_cast<int>(d);
        }
        if (out < min_value) fail(key, "must be >= " + std::to_string(min_value));
    }
    void flag(const std::string& key, bool& out) {
        if (auto* v = get(key)) out = as<bool>(key, *v);
    }
    void text(const std::string& key, std::string& out, const std::vector<std::string>& allowed = {}) {
        if (auto* v = get(key)) out = as<std::string>(key, *v);
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), out) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            fail(key, "must be one of " + list);
        }
    }
    void array(const std::string& key, std::vector<double>& out) {
        if (auto* v = get(key)) {
            if (std::holds_alternative<double>(*v)) out = {std::get<double>(*v)};
            else out = as<std::vector<double>>(key, *v);
        }
    }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(qualified(key) + " " + msg);
    }
    std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

private:
    const ConfigValue* get(const std::string& key) {
        if (!entries_) return nullptr;
        auto it = entries_->find(key);
        if (it == entries_->end()) return nullptr;
        used_.insert(qualified(key));
        return &it->second;
    }
    template <class T>
    const T& as(const std::string& key, const ConfigValue& v) const {
        if (!std::holds_alternative<T>(v)) {
            ConfigValue probe = T{};
            fail(key, "must be a " + type_name(probe) + ", got a " + type_name(v));
        }
        return std::get<T>(v);
    }

    std::string name_;
    std::set<std::string>& used_;
    const std::map<std::string, ConfigValue>* entries_ = nullptr;
};

}  // namespace

ConfigDocument parse_config_text(const std::string& text) {
    ConfigDocument doc;
    std::stringstream in(text);
    std::string raw, section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = trim(strip_comment(raw));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.size() < 3 || s.back() != ']' || s[1] == '[')
                throw ConfigError("line " + std::to_string(line) + ": malformed section header");
            section = trim(s.substr(1, s.size() - 2));
            if (!is_bare_key(section)) throw ConfigError("line " + std::to_string(line) + ": invalid section name");
            if (doc.sections.count(section))
                throw ConfigError("line " + std::to_string(line) + ": section [" + section + "] repeated");
            doc.sections[section];
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        if (!is_bare_key(key)) throw ConfigError("line " + std::to_string(line) + ": invalid key '" + key + "'");
        auto& sec = doc.sections[section];
        if (sec.count(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
        sec[key] = parse_value(s.substr(eq + 1), line);
        doc.lines[section.empty() ? key : section + "." + key] = line;
    }
    return doc;
}

RunConfig build_run_config(const ConfigDocument& doc) {
    static const std::set<std::string> known_sections = {"",      "run",   "mesh",     "params",    "physical",
                                                         "sweep", "thresholds", "modes", "transient", "bifurcation"};
    for (const auto& [name, _] : doc.sections)
        if (!known_sections.count(name)) throw ConfigError("unknown section [" + name + "]");

    RunConfig c;
    std::set<std::string> used;

    Section run(doc, "run", used);
    run.text("out_dir", c.out_dir);
    double seed = c.seed;
    run.number("seed", seed);
    if (seed < 0 || seed != std::floor(seed) || seed > 4294967295.0) run.fail("seed", "must be a non-negative integer");
    c.seed = static_cast<unsigned>(seed);
    run.integer("jobs", c.jobs, 1);
    run.flag("plots", c.plots);
    run.flag("export_operators", c.export_operators);

    Section mesh(doc, "mesh", used);
    auto& m = c.mesh;
    mesh.text("body", m.body, {"disk", "ellipse", "sphere", "ellipsoid", "poly"});
    mesh.array("semi_axes", m.semi_axes);
    mesh.text("poly_file", m.poly_file);
    mesh.text("input_vtk", m.input_vtk);
    mesh.positive("R", m.R);
    mesh.positive("h", m.h);
    mesh.flag("symmetric", m.symmetric);
    mesh.integer("p_v", m.p_v, 1);
    mesh.text("element", m.element, {"auto", "scott_vogelius", "taylor_hood"});
    mesh.integer("refinements", m.refinements, 0);
    m.dim = (m.body == "sphere" || m.body == "ellipsoid") ? 3 : 2;
    if (m.body == "ellipse" && m.semi_axes.size() != 2) mesh.fail("semi_axes", "needs two entries for an ellipse");
    if (m.body == "ellipsoid" && m.semi_axes.size() != 3) mesh.fail("semi_axes", "needs three entries for an ellipsoid");
    for (double a : m.semi_axes)
        if (!(a > 0.0)) mesh.fail("semi_axes", "entries must be > 0");
    if (m.body == "poly" && m.poly_file.empty()) mesh.fail("poly_file", "is required for a poly body");

    Section params(doc, "params", used);
    Section phys(doc, "physical", used);
    params.number("lambda", c.params.lambda);
    params.positive("omega_n2", c.params.omega_n2);
    params.positive("varpi", c.params.varpi);
    if (c.params.lambda < 0.0 || !std::isfinite(c.params.lambda)) params.fail("lambda", "must be finite and >= 0");
    if (phys.present()) {
        if (params.present()) throw ConfigError("[params] and [physical] are mutually exclusive");
        PhysicalParams pp;
        phys.positive("V", pp.V);
        phys.positive("L", pp.L);
        phys.positive("nu", pp.nu);
        phys.positive("rho", pp.rho);
        phys.positive("M", pp.M);
        phys.positive("ell", pp.ell);
        c.physical = pp;
        c.params = nondimensionalize(pp);
    }

    Section sweep(doc, "sweep", used);
    sweep.array("lambda", c.sweep.lambdas);
    if (!sweep.has("lambda")) c.sweep.lambdas = {c.params.lambda};
    if (c.sweep.lambdas.empty()) sweep.fail("lambda", "must not be empty");
    for (double l : c.sweep.lambdas)
        if (!(l >= 0.0) || !std::isfinite(l)) sweep.fail("lambda", "entries must be finite and >= 0");
    sweep.positive("newton_tol", c.sweep.newton_tol);
    sweep.integer("max_iter", c.sweep.max_iter, 1);
    sweep.integer("max_bisections", c.sweep.max_bisections, 0);
    sweep.flag("write_fields", c.sweep.write_fields);

    Section th(doc, "thresholds", used);
    th.text("source", c.thresholds.source, {"branch", "zero"});
    th.text("branch", c.thresholds.branch);
    th.text("method", c.thresholds.method, {"auto", "dense", "iterative"});
    th.integer("dense_limit", c.thresholds.dense_limit, 0);
    th.positive("tol", c.thresholds.tol);
    th.positive("state_tol", c.thresholds.state_tol);
    th.flag("lambda_tilde", c.thresholds.lambda_tilde);
    th.positive("tilde_tol", c.thresholds.tilde_tol);

    Section md(doc, "modes", used);
    md.integer("N", c.modes.N, 1);
    md.text("method", c.modes.method, {"auto", "dense", "iterative"});
    md.positive("gram_tol", c.modes.gram_tol);
    md.positive("coupling_tol", c.modes.coupling_tol);
    md.flag("write_fields", c.modes.write_fields);

    Section tr(doc, "transient", used);
    auto& t = c.transient;
    tr.text("integrator", t.integrator, {"monolithic", "galerkin"});
    tr.integer("N", t.N, 1);
    tr.positive("t_end", t.t_end);
    tr.positive("dt", t.dt);
    if (tr.has("epsilon")) {
        double e = 0.0;
        tr.number("epsilon", e);
        if (!(e >= 0.0) || !std::isfinite(e)) tr.fail("epsilon", "must be finite and >= 0");
        t.epsilon = e;
    }
    tr.positive("a_sup", t.a_sup);
    tr.positive("b_sup", t.b_sup);
    tr.positive("alpha", t.alpha);
    if (!(t.alpha > 1.0)) tr.fail("alpha", "must be > 1");
    tr.array("center", t.center);
    tr.array("chi1", t.chi1);
    tr.array("chi0", t.chi0);
    for (auto* v : {&t.center, &t.chi1, &t.chi0})
        if (!tr.has("center") && !tr.has("chi1") && !tr.has("chi0")) v->resize(m.dim, 0.0);
        else if (static_cast<int>(v->size()) != m.dim)
            throw ConfigError("transient.center, transient.chi0 and transient.chi1 need " + std::to_string(m.dim) +
                              " entries");
    tr.integer("snapshot_every", t.snapshot_every, 0);
    tr.positive("decay_factor", t.decay_factor);
    if (t.dt > t.t_end) tr.fail("dt", "must not exceed t_end");

    Section bf(doc, "bifurcation", used);
    auto& b = c.bifurcation;
    bf.text("base_flow", b.base_flow, {"branch", "frozen_steady", "strain"});
    bf.text("branch", b.branch);
    bf.number("kappa", b.kappa);
    bf.number("base_lambda", b.base_lambda);
    if (b.base_lambda < 0.0) bf.fail("base_lambda", "must be >= 0");
    bf.number("lambda_min", b.lambda_min);
    bf.number("lambda_max", b.lambda_max);
    if (!(b.lambda_min < b.lambda_max)) bf.fail("lambda_min", "must be smaller than bifurcation.lambda_max");
    if (b.lambda_min < 0.0) bf.fail("lambda_min", "must be >= 0");
    bf.integer("samples", b.samples, 2);
    bf.integer("nev", b.nev, 1);
    bf.number("sigma", b.sigma);
    bf.text("method", b.method, {"auto", "dense", "iterative"});
    bf.integer("dense_limit", b.dense_limit, 0);
    bf.positive("tol", b.tol);
    bf.positive("delta", b.delta);
    bf.positive("crossing_tol", b.crossing_tol);
    bf.positive("range_threshold", b.range_threshold);
    bf.positive("cluster_tol", b.cluster_tol);

    for (const auto& [name, entries] : doc.sections)
        for (const auto& [key, _] : entries) {
            std::string q = name.empty() ? key : name + "." + key;
            if (!used.count(q)) {
                auto ln = doc.lines.find(q);
                throw ConfigError("unknown key '" + q + "'" +
                                  (ln != doc.lines.end() ? " (line " + std::to_string(ln->second) + ")" : ""));
            }
        }
    return c;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig c = build_run_config(parse_config_text(text));
    c.text = text;
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace fsilab
