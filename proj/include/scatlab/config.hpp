// scatlab -- experiment configuration: a strict JSON schema for metric
// models, tensor fields, and per-command numeric blocks. Unknown keys are
// rejected so configs stay reproducible artifacts.
#pragma once

#include "scatlab/metrics.hpp"
#include "scatlab/sphere_tensors.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <string>

namespace scatlab::config {

using json = nlohmann::json;
using metrics::MetricModel;
using sphere::Poly;
using sphere::SymTensorField;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_keys(const json& j, const std::string& where,
                         const std::set<std::string>& allowed,
                         const std::set<std::string>& required = {}) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    for (const auto& k : required)
        if (!j.contains(k)) throw ConfigError(where + ": missing key '" + k + "'");
}

inline Poly parse_poly(const json& j, int n, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": polynomial must be an array of monomials");
    std::vector<sphere::Monomial> terms;
    for (const auto& t : j) {
        require_keys(t, where + ".monomial", {"coef", "exps"}, {"coef", "exps"});
        sphere::Monomial m;
        m.coef = t.at("coef").get<double>();
        m.exps = t.at("exps").get<std::vector<int>>();
        if (int(m.exps.size()) != n)
            throw ConfigError(where + ": exps length must equal dim");
        terms.push_back(std::move(m));
    }
    return Poly(n, std::move(terms));
}

inline SymTensorField parse_field(const json& j, int n, const std::string& where) {
    require_keys(j, where,
                 {"type", "poly", "covectors", "axes", "factor", "of", "terms"}, {"type"});
    const std::string type = j.at("type").get<std::string>();
    if (type == "round_metric") return sphere::round_metric(n);
    if (type == "x1_squared") return sphere::x1_squared_weighted(n);
    if (type == "poly_weighted") return sphere::poly_weighted_metric(parse_poly(j.at("poly"), n, where));
    if (type == "killing_rotation") {
        const auto axes = j.at("axes").get<std::vector<std::vector<int>>>();
        if (axes.size() != 2 || axes[0].size() != 2 || axes[1].size() != 2)
            throw ConfigError(where + ": axes must be two [i,j] pairs");
        return sphere::killing_two_tensor(sphere::rotation_generator(n, axes[0][0], axes[0][1]),
                                          sphere::rotation_generator(n, axes[1][0], axes[1][1]));
    }
    if (type == "covector_product") {
        std::vector<Vec> as;
        for (const auto& a : j.at("covectors")) {
            const auto v = a.get<std::vector<double>>();
            if (int(v.size()) != n) throw ConfigError(where + ": covector length must equal dim");
            as.push_back(Eigen::Map<const Vec>(v.data(), n));
        }
        return sphere::poly_covector_product(parse_poly(j.at("poly"), n, where), as);
    }
    if (type == "scale")
        return sphere::scale(parse_field(j.at("of"), n, where + ".of"),
                             j.at("factor").get<double>());
    if (type == "sum") {
        const auto& terms = j.at("terms");
        if (!terms.is_array() || terms.empty()) throw ConfigError(where + ": empty sum");
        SymTensorField acc = parse_field(terms[0], n, where + ".terms");
        for (size_t i = 1; i < terms.size(); ++i)
            acc = sphere::add(acc, parse_field(terms[i], n, where + ".terms"));
        return acc;
    }
    throw ConfigError(where + ": unknown field type '" + type + "'");
}

inline MetricModel parse_metric(const json& j) {
    require_keys(j, "metric",
                 {"kind", "dim", "slope", "smoothing_radius", "exclusion_radius", "m",
                  "amplitude", "inner_radius", "full_radius", "h_m", "cutoff", "terms"},
                 {"kind", "dim"});
    const std::string kind = j.at("kind").get<std::string>();
    const int n = j.at("dim").get<int>();
    if (n < 2) throw ConfigError("metric.dim must be >= 2");
    if (kind == "euclidean") return MetricModel::euclidean(n);
    if (kind == "cone2d") {
        if (n != 2) throw ConfigError("cone2d requires dim = 2");
        metrics::Cone2dParams p;
        p.slope = j.value("slope", 1.0);
        p.smoothing_radius = j.value("smoothing_radius", 1.0);
        p.exclusion_radius = j.value("exclusion_radius", 0.0);
        return MetricModel::cone2d(p);
    }
    if (kind == "normal_form_ae") {
        metrics::PerturbationSpec spec;
        spec.m = j.value("m", 3);
        spec.amplitude = j.value("amplitude", 0.0);
        spec.inner_radius = j.value("inner_radius", 2.0);
        spec.full_radius = j.value("full_radius", 4.0);
        spec.h_m = j.contains("h_m") ? parse_field(j.at("h_m"), n, "metric.h_m")
                                     : sphere::round_metric(n);
        return MetricModel::normal_form_ae(n, std::move(spec));
    }
    if (kind == "cartesian_ae") {
        std::vector<metrics::CartesianTerm> terms;
        for (const auto& t : j.at("terms")) {
            require_keys(t, "metric.terms",
                         {"profile", "coef", "poly", "upower", "center", "width", "bump_amp"},
                         {"profile"});
            metrics::CartesianTerm ct;
            const std::string prof = t.at("profile").get<std::string>();
            if (prof == "power") ct.profile = metrics::CartesianTerm::Profile::power;
            else if (prof == "gaussian") ct.profile = metrics::CartesianTerm::Profile::gaussian;
            else if (prof == "conformal_gaussian")
                ct.profile = metrics::CartesianTerm::Profile::conformal_gaussian;
            else throw ConfigError("metric.terms: unknown profile '" + prof + "'");
            ct.upower = t.value("upower", 0);
            ct.center = t.value("center", 0.0);
            ct.width = t.value("width", 1.0);
            ct.bump_amp = t.value("bump_amp", 0.0);
            ct.poly = t.contains("poly") ? parse_poly(t.at("poly"), n, "metric.terms.poly")
                                         : Poly::constant(n, 1.0);
            ct.coef = Mat::Identity(n, n);
            if (t.contains("coef")) {
                const auto rows = t.at("coef").get<std::vector<std::vector<double>>>();
                if (int(rows.size()) != n) throw ConfigError("metric.terms.coef: bad shape");
                for (int r = 0; r < n; ++r) {
                    if (int(rows[size_t(r)].size()) != n)
                        throw ConfigError("metric.terms.coef: bad shape");
                    for (int cix = 0; cix < n; ++cix) ct.coef(r, cix) = rows[size_t(r)][size_t(cix)];
                }
                ct.coef = 0.5 * (ct.coef + ct.coef.transpose());
            }
            terms.push_back(std::move(ct));
        }
        return MetricModel::cartesian_ae(n, j.value("m", 3), std::move(terms),
                                         j.value("cutoff", 1.0));
    }
    throw ConfigError("metric.kind: unknown kind '" + kind + "'");
}

struct Experiment {
    json raw;
    MetricModel metric = MetricModel::euclidean(2);
    std::string command;
    json numeric;   // command-specific knobs (validated by the runner)
    std::string output_prefix = "run";
    unsigned seed = 20260808;
};

inline Experiment parse_experiment(const json& j) {
    require_keys(j, "config", {"metric", "command", "numeric", "output"},
                 {"metric", "command"});
    Experiment e;
    e.raw = j;
    e.metric = parse_metric(j.at("metric"));
    e.command = j.at("command").get<std::string>();
    static const std::set<std::string> commands = {"scatter",   "conjugates", "linearize",
                                                   "volume",    "funk",       "rigidity2d"};
    if (!commands.count(e.command))
        throw ConfigError("command: unknown command '" + e.command + "'");
    e.numeric = j.value("numeric", json::object());
    if (!e.numeric.is_object()) throw ConfigError("numeric: expected an object");
    if (j.contains("output")) {
        require_keys(j.at("output"), "output", {"prefix"});
        e.output_prefix = j.at("output").value("prefix", "run");
    }
    e.seed = e.numeric.value("seed", 20260808u);
    return e;
}

inline Experiment load_experiment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& ex) {
        throw ConfigError(std::string("config parse error: ") + ex.what());
    }
    return parse_experiment(j);
}

}  // namespace scatlab::config
