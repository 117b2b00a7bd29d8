#include "config.hpp"

#include "dsilab/csv.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace dsi::cli {

namespace {

using PT = ParamType;

std::vector<ParamDef> market_params(bool with_band, const std::string& upper_default = "none") {
    std::vector<ParamDef> p{
        {"sigma", PT::real, "0.2", "volatility"},
        {"T", PT::real, "1", "horizon"},
        {"s0", PT::real, "100", "spot"},
        {"payoff", PT::text, "call", "payoff family", {"call", "put", "piecewise", "table"}},
        {"strike", PT::real, "100", "call/put strike"},
        {"value0", PT::real, "0", "piecewise: g(0)"},
        {"breakpoints", PT::real_list, "", "piecewise: kinks"},
        {"slopes", PT::real_list, "", "piecewise: slopes, one more than breakpoints"},
        {"payoff_file", PT::text, "", "table: CSV with columns s,g"},
    };
    if (with_band) {
        p.push_back({"lower", PT::optional_real, "none", "lower bound on s^2 gamma"});
        p.push_back({"upper", PT::optional_real, upper_default, "upper bound on s^2 gamma"});
        p.push_back({"nx", PT::integer, "400", "log-price nodes"});
    }
    return p;
}

std::vector<ParamDef> concat(std::vector<ParamDef> a, const std::vector<ParamDef>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<ExperimentDef> build_defs() {
    std::vector<ExperimentDef> d;
    d.push_back({"bs-price", "Black-Scholes price, closed form against Gauss-Hermite quadrature",
                 concat(market_params(false), {
                            {"t", PT::real, "0", "valuation time"},
                            {"quadrature_nodes", PT::integer, "1024", "max Gauss-Hermite nodes"},
                            {"quadrature_tolerance", PT::real, "0.001", "relative agreement required (kinks limit the quadrature to algebraic convergence)"},
                            {"curve_lo", PT::real, "50", "price curve: lowest spot"},
                            {"curve_hi", PT::real, "200", "price curve: highest spot"},
                            {"curve_points", PT::integer, "101", "price curve: points"},
                        })});
    d.push_back({"dpe-price", "gamma-constrained super-replication price from the DPE solver",
                 concat(market_params(true), {
                            {"width_sd", PT::real, "6", "grid half-width in sigma sqrt(T)"},
                            {"safety", PT::real, "0.9", "dt as a fraction of the stability bound"},
                            {"time_stride", PT::integer, "0", "surface CSV row stride (0 = about 20 rows)"},
                            {"bs_tolerance", PT::real, "0.005", "relative error allowed against BS when no constraint binds"},
                        })});
    d.push_back({"ergodic", "running frequency of |X(n)^T beta X(n)| <= delta on the e^-n grid",
                 {
                     {"d", PT::integer, "1", "dimension"},
                     {"beta", PT::real_list, "1", "diagonal of beta"},
                     {"delta", PT::real, "0.1", "threshold"},
                     {"levels", PT::integer, "60", "grid times e^-n, n = 1..levels"},
                     {"paths", PT::integer, "10000", "path count"},
                     {"tolerance", PT::real, "0.02", "allowed |frequency - reference|"},
                 }});
    d.push_back({"example36", "V / (t loglog(1/t) / logloglog(1/t)) with b(t) = 1/logloglog(1/t)",
                 {
                     {"paths", PT::integer, "2000", "path count"},
                     {"t0", PT::real, "0.01", "coarsest level time (< e^-e)"},
                     {"theta", PT::real, "0.5", "level ratio"},
                     {"levels", PT::integer, "94", "geometric levels"},
                     {"substeps", PT::integer, "32", "points per level interval"},
                     {"t_lo", PT::real, "0", "sup window lower end"},
                     {"t_hi", PT::real, "0.01", "sup window upper end"},
                     {"golden_lo", PT::optional_real, "none", "golden interval for the proxy median"},
                     {"golden_hi", PT::optional_real, "none", "golden interval for the proxy median"},
                 }});
    d.push_back({"gap", "replication gap: constrained DPE strategy funded at BS and at DPE prices",
                 concat(market_params(true, "0.5"), {
                            {"paths", PT::integer, "10000", "path count"},
                            {"steps", PT::integer, "2000", "hedge steps"},
                            {"cushion", PT::real, "1.01", "DPE funding multiplier"},
                            {"success_target", PT::real, "0.99", "required fraction with shortfall >= 0"},
                            {"min_bs_shortfall_prob", PT::real, "0.2", "required P[shortfall < 0] when BS-funded"},
                        })});
    d.push_back({"hedge", "discrete hedge simulation and shortfall distribution",
                 concat(market_params(true, "0.5"), {
                            {"paths", PT::integer, "10000", "path count"},
                            {"steps", PT::integer, "2000", "hedge steps"},
                            {"strategy", PT::text, "dpe", "control source", {"dpe", "hold", "constant"}},
                            {"y0", PT::real, "0", "hold/constant: initial shares"},
                            {"alpha", PT::real, "0", "constant: alpha"},
                            {"gamma", PT::real, "0", "constant: gamma"},
                            {"funding", PT::text, "dpe", "initial capital", {"dpe", "bs", "value"}},
                            {"x0", PT::real, "0", "funding = value: initial capital"},
                            {"cushion", PT::real, "1.01", "multiplier on dpe/bs funding"},
                            {"success_target", PT::real, "0.99", "dpe strategy + dpe funding: required success rate"},
                            {"max_clamp_rate", PT::real, "0.05", "dpe strategy, upper-only band: allowed clamp rate"},
                        })});
    d.push_back({"lil-sup", "per-path sup of 2V/h(t) (or 2V/t) over a geometric grid",
                 {
                     {"integrand", PT::text, "diag", "catalog integrand"},
                     {"params", PT::real_list, "", "integrand parameters"},
                     {"compare_params", PT::real_list, "", "second parameter set on the same paths; its median must be larger"},
                     {"d", PT::integer, "2", "dimension"},
                     {"paths", PT::integer, "10000", "path count"},
                     {"t0", PT::real, "0.01", "coarsest level time"},
                     {"theta", PT::real, "0.5", "level ratio"},
                     {"levels", PT::integer, "34", "geometric levels"},
                     {"substeps", PT::integer, "1", "points per level interval"},
                     {"kind", PT::text, "h", "normalizer", {"h", "t"}},
                     {"absolute", PT::flag, "false", "use |2V|"},
                     {"eta", PT::real, "0.3", "envelope (1 + eta)^2 / theta"},
                     {"max_violation_rate", PT::real, "0.01", "allowed fraction above the envelope"},
                 }});
    d.push_back({"moment", "Monte Carlo E exp(2 lambda V(T)) against the identity closed form",
                 {
                     {"integrand", PT::text, "identity", "catalog integrand"},
                     {"params", PT::real_list, "", "integrand parameters"},
                     {"d", PT::integer, "1", "dimension"},
                     {"lambda", PT::real, "0.5", "exponent"},
                     {"T", PT::real, "0.5", "horizon"},
                     {"paths", PT::integer, "100000", "path count"},
                     {"steps", PT::integer, "400", "uniform steps"},
                 }});
    d.push_back({"prop39", "windowed sup of t^(-3/2+eps) |int (int a du)^T m dW| toward t = 0",
                 {
                     {"d", PT::integer, "1", "dimension"},
                     {"a", PT::real, "1", "constant drift in every coordinate"},
                     {"m", PT::text, "identity", "catalog integrand for m"},
                     {"m_params", PT::real_list, "", "parameters of m"},
                     {"eps", PT::real, "0.5", "exponent"},
                     {"paths", PT::integer, "2000", "path count"},
                     {"t0", PT::real, "0.0001", "coarsest level time"},
                     {"theta", PT::real, "0.5", "level ratio"},
                     {"levels", PT::integer, "45", "geometric levels"},
                     {"substeps", PT::integer, "2", "points per level interval"},
                     {"window", PT::integer, "15", "levels per window"},
                 }});
    d.push_back({"tail-bound", "P[sup 2V >= alpha] against the exponential bound",
                 {
                     {"integrand", PT::text, "identity", "catalog integrand"},
                     {"params", PT::real_list, "", "integrand parameters"},
                     {"d", PT::integer, "1", "dimension"},
                     {"T", PT::real, "0.1", "horizon"},
                     {"steps", PT::integer, "400", "uniform steps"},
                     {"paths", PT::integer, "100000", "path count"},
                     {"alphas", PT::real_list, "0.5,1,2,4", "thresholds"},
                     {"lambda_rule", PT::text, "optimized", "lambda choice", {"optimized", "fixed_eta"}},
                     {"eta", PT::real, "0.1", "fixed_eta: lambda = 1/(2T(1+eta))"},
                 }});
    std::sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return d;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const std::set<std::string>& top_level_keys() {
    static const std::set<std::string> k{"experiment", "seed", "output_dir", "workers"};
    return k;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

// Value in canonical text form, validated against its type.
std::string canonical(const std::string& key, const ParamDef& def, const std::string& raw) {
    const std::string v = trim(raw);
    switch (def.type) {
    case PT::real: return format_double(parse_real(key, v));
    case PT::integer: return std::to_string(parse_integer(key, v));
    case PT::flag: return parse_bool(key, v) ? "true" : "false";
    case PT::optional_real:
        if (v == "none" || v.empty()) return "none";
        return format_double(parse_real(key, v));
    case PT::real_list: {
        std::string out;
        for (double x : parse_real_list(key, v)) out += (out.empty() ? "" : ",") + format_double(x);
        return out;
    }
    case PT::text:
        if (!def.choices.empty() && std::find(def.choices.begin(), def.choices.end(), v) == def.choices.end()) {
            std::string all;
            for (const auto& c : def.choices) all += (all.empty() ? "" : ", ") + c;
            throw ConfigError(key, "unknown value '" + v + "' (expected one of " + all + ")");
        }
        return v;
    }
    return v;
}

struct Section {
    std::map<std::string, std::string> values;
};

} // namespace

const ParamDef* ExperimentDef::find(const std::string& key) const {
    for (const auto& p : params) {
        if (p.key == key) return &p;
    }
    return nullptr;
}

const std::vector<ExperimentDef>& experiment_defs() {
    static const std::vector<ExperimentDef> defs = build_defs();
    return defs;
}

const ExperimentDef* find_experiment(const std::string& name) {
    for (const auto& d : experiment_defs()) {
        if (d.name == name) return &d;
    }
    return nullptr;
}

double parse_real(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (v.empty() || r.ec != std::errc{} || r.ptr != end) {
        throw ConfigError(key, "expected a number, got '" + v + "'");
    }
    if (!std::isfinite(out)) throw ConfigError(key, "must be finite");
    return out;
}

std::size_t parse_integer(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    unsigned long long out = 0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (v.empty() || r.ec != std::errc{} || r.ptr != end) {
        throw ConfigError(key, "expected a nonnegative integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(out);
}

std::vector<double> parse_real_list(const std::string& key, const std::string& value) {
    std::vector<double> out;
    std::string v = trim(value);
    if (v.empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
    if (v.back() == ',') throw ConfigError(key, "trailing comma in list");
    return out;
}

double RunConfig::real(const std::string& key) const { return parse_real(key, params.at(key)); }
std::size_t RunConfig::integer(const std::string& key) const { return parse_integer(key, params.at(key)); }
const std::string& RunConfig::text(const std::string& key) const { return params.at(key); }
bool RunConfig::flag(const std::string& key) const { return params.at(key) == "true"; }
std::vector<double> RunConfig::real_list(const std::string& key) const {
    return parse_real_list(key, params.at(key));
}
std::optional<double> RunConfig::optional_real(const std::string& key) const {
    const std::string& v = params.at(key);
    if (v == "none") return std::nullopt;
    return parse_real(key, v);
}

Overrides parse_overrides(const std::vector<std::string>& args) {
    Overrides out;
    for (const auto& a : args) {
        const auto eq = a.find('=');
        if (a.rfind("--", 0) != 0 || eq == std::string::npos || eq == 2) {
            throw ConfigError(a, "expected an override of the form --key=value");
        }
        out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    }
    return out;
}

RunConfig parse_config(std::istream& in, const Overrides& overrides) {
    namespace bpt = boost::property_tree;
    bpt::ptree tree;
    try {
        bpt::ini_parser::read_ini(in, tree);
    } catch (const bpt::ini_parser_error& e) {
        throw ConfigError("", std::string("malformed config: ") + e.what());
    }

    std::map<std::string, std::string> top;
    std::map<std::string, Section> sections;
    for (const auto& [name, node] : tree) {
        if (node.empty() && !find_experiment(name)) {
            if (!top_level_keys().count(name)) throw ConfigError(name, "unknown key");
            top[name] = node.data();
            continue;
        }
        const ExperimentDef* def = find_experiment(name);
        if (!def) throw ConfigError(name, "unknown section");
        for (const auto& [key, value] : node) {
            const std::string full = name + "." + key;
            if (!def->find(key)) throw ConfigError(full, "unknown key");
            sections[name].values[key] = value.data();
        }
    }

    // experiment override first: bare keys resolve against the selected block
    for (const auto& [key, value] : overrides) {
        if (key == "experiment") top[key] = value;
    }
    const auto exp_it = top.find("experiment");
    if (exp_it == top.end()) throw ConfigError("experiment", "missing");
    RunConfig cfg;
    cfg.experiment = trim(exp_it->second);
    const ExperimentDef* selected = find_experiment(cfg.experiment);
    if (!selected) throw ConfigError("experiment", "unknown experiment '" + cfg.experiment + "'");

    for (const auto& [key, value] : overrides) {
        if (key == "experiment") continue;
        if (top_level_keys().count(key)) {
            top[key] = value;
            continue;
        }
        const auto dot = key.find('.');
        if (dot != std::string::npos) {
            const std::string sec = key.substr(0, dot), sub = key.substr(dot + 1);
            const ExperimentDef* def = find_experiment(sec);
            if (!def) throw ConfigError(key, "unknown section");
            if (!def->find(sub)) throw ConfigError(key, "unknown key");
            sections[sec].values[sub] = value;
            continue;
        }
        if (!selected->find(key)) throw ConfigError(key, "unknown key for experiment " + cfg.experiment);
        sections[cfg.experiment].values[key] = value;
    }

    // every block is type-checked, the selected one is also resolved
    for (const auto& [name, sec] : sections) {
        const ExperimentDef* def = find_experiment(name);
        for (const auto& [key, value] : sec.values) canonical(name + "." + key, *def->find(key), value);
    }
    for (const auto& p : selected->params) {
        const auto& given = sections[cfg.experiment].values;
        const auto it = given.find(p.key);
        cfg.params[p.key] = canonical(cfg.experiment + "." + p.key, p, it == given.end() ? p.fallback : it->second);
    }

    if (top.count("seed")) cfg.seed = parse_integer("seed", top["seed"]);
    if (top.count("workers")) {
        const std::size_t w = parse_integer("workers", top["workers"]);
        if (w > 4096) throw ConfigError("workers", "at most 4096");
        cfg.workers = static_cast<unsigned>(w);
    }
    if (top.count("output_dir") && !trim(top["output_dir"]).empty()) {
        cfg.output_dir = trim(top["output_dir"]);
    } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
        cfg.output_dir = env;
    } else {
        cfg.output_dir = "dsilab-output";
    }
    return cfg;
}

RunConfig load_config(const std::string& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path);
    return parse_config(in, overrides);
}

std::string canonical_text(const RunConfig& config) {
    std::string s = "experiment=" + config.experiment + "\nseed=" + std::to_string(config.seed) + "\n";
    for (const auto& [k, v] : config.params) s += config.experiment + "." + k + "=" + v + "\n";
    return s;
}

std::uint64_t config_hash(const RunConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text(config)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, value >>= 4) s[static_cast<std::size_t>(i)] = digits[value & 0xf];
    return s;
}

} // namespace dsi::cli
