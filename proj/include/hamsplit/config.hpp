#pragma once

// Experiment configuration: JSON parse / serialize with per-model defaults.

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hamsplit/errors.hpp"
#include "hamsplit/integrators.hpp"
#include "hamsplit/models.hpp"

namespace hamsplit {

enum class ModelId { klein_gordon, afpu, gkdv };

inline std::string_view to_string(ModelId m) {
    switch (m) {
        case ModelId::klein_gordon: return "klein_gordon";
        case ModelId::afpu: return "afpu";
        case ModelId::gkdv: return "gkdv";
    }
    return "?";
}

inline std::optional<ModelId> parse_model(std::string_view s) {
    if (s == "klein_gordon") return ModelId::klein_gordon;
    if (s == "afpu") return ModelId::afpu;
    if (s == "gkdv") return ModelId::gkdv;
    return std::nullopt;
}

inline std::optional<models::FpuFormulation> parse_formulation(std::string_view s) {
    if (s == "conservative") return models::FpuFormulation::conservative;
    if (s == "dissipative") return models::FpuFormulation::dissipative;
    return std::nullopt;
}

enum class Experiment { converge, efficiency, energy, verify };

inline std::string_view to_string(Experiment e) {
    switch (e) {
        case Experiment::converge: return "converge";
        case Experiment::efficiency: return "efficiency";
        case Experiment::energy: return "energy";
        case Experiment::verify: return "verify";
    }
    return "?";
}

inline std::optional<Experiment> parse_experiment(std::string_view s) {
    for (Experiment e : {Experiment::converge, Experiment::efficiency, Experiment::energy, Experiment::verify}) {
        if (s == to_string(e)) return e;
    }
    return std::nullopt;
}

struct GridConfig {
    double L = 0.0;
    int N = 0;
};

struct ExperimentConfig {
    ModelId model = ModelId::klein_gordon;
    std::optional<models::FpuFormulation> formulation;  ///< afpu only
    std::map<std::string, double> params;
    GridConfig grid;
    std::vector<MethodId> methods;
    std::vector<double> h_ladder;
    double T = 50.0;
    SolverControls controls;
    double sav_shift_C = 10.0;
    double h_ref = std::ldexp(1.0, -10) / 100.0;
    double energy_h = std::ldexp(1.0, -6);  ///< step of the energy experiment
    std::filesystem::path output_dir = "out";
    std::vector<Experiment> experiments;
};

/// Methods the model admits: the unsplit baselines need an absorbed form.
inline bool method_applicable(ModelId model, MethodId m) {
    return model != ModelId::gkdv || is_splitting(m);
}

inline std::map<std::string, double> default_params(ModelId model) {
    switch (model) {
        case ModelId::klein_gordon: {
            const models::KleinGordonParams p;
            return {{"omega", p.omega}, {"kappa", p.kappa}, {"alpha", p.alpha}, {"gamma", p.gamma}};
        }
        case ModelId::afpu: {
            const models::FpuParams p;
            return {{"k", static_cast<double>(p.k)}, {"eps", p.eps}, {"beta", p.beta},
                    {"gamma", p.gamma}, {"m", p.m}, {"ic_alpha", p.ic_alpha}};
        }
        case ModelId::gkdv: {
            const models::GkdvParams p;
            return {{"sigma", p.sigma}, {"eps", p.eps}, {"k", static_cast<double>(p.k)}, {"mu", p.mu}};
        }
    }
    return {};
}

inline GridConfig default_grid(ModelId model) {
    models::GridSpec g;
    switch (model) {
        case ModelId::klein_gordon: g = models::klein_gordon_grid(); break;
        case ModelId::afpu: g = models::afpu_grid(); break;
        case ModelId::gkdv: g = models::gkdv_grid(); break;
    }
    return {g.L, g.N};
}

inline std::vector<MethodId> default_methods(ModelId model) {
    using M = MethodId;
    if (model == ModelId::gkdv) return {M::savf, M::seavf, M::ssav, M::slm, M::seisav, M::seilm};
    return {M::avf, M::sav_cn, M::savf, M::seavf, M::ssav, M::slm, M::seisav, M::seilm};
}

inline std::vector<double> default_ladder(ModelId model) {
    const int first = model == ModelId::gkdv ? 6 : 5;
    std::vector<double> out;
    for (int j = 0; j < 4; ++j) out.push_back(std::ldexp(1.0, -(first + j)));
    return out;
}

/// Default configuration for one model.
inline ExperimentConfig default_config(ModelId model) {
    ExperimentConfig c;
    c.model = model;
    if (model == ModelId::afpu) c.formulation = models::FpuFormulation::conservative;
    c.params = default_params(model);
    c.grid = default_grid(model);
    c.methods = default_methods(model);
    c.h_ladder = default_ladder(model);
    c.experiments = {Experiment::converge, Experiment::efficiency, Experiment::energy, Experiment::verify};
    return c;
}

namespace detail {

inline bool is_multiple(double a, double b) {
    const double k = a / b;
    return std::round(k) >= 1.0 && std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k);
}

inline std::string real_text(double x) {
    std::ostringstream s;
    s.precision(17);
    s << x;
    return s.str();
}

inline int integer_param(const std::map<std::string, double>& p, const std::string& key) {
    const double v = p.at(key);
    if (v != std::round(v) || v < 1.0 || v > 64.0) {
        throw ConfigError("params." + key + " must be a positive integer, got " + real_text(v));
    }
    return static_cast<int>(v);
}

}  // namespace detail

/// Checks the invariants; messages name the offending field.
inline void validate(const ExperimentConfig& c) {
    if (c.methods.empty()) throw ConfigError("methods: must be non-empty");
    if (c.experiments.empty()) throw ConfigError("experiments: must be non-empty");
    for (MethodId m : c.methods) {
        if (!method_applicable(c.model, m)) {
            throw ConfigError("methods: " + std::string(to_string(m)) + " is not applicable to " +
                              std::string(to_string(c.model)) +
                              "; the unsplit AVF / SAV / LM baselines need the damping absorbed into the "
                              "structure matrix, which this model does not admit");
        }
    }
    if (c.formulation && c.model != ModelId::afpu) throw ConfigError("formulation: only valid for model afpu");
    const auto known = default_params(c.model);
    for (const auto& [k, v] : c.params) {
        if (!known.count(k)) throw ConfigError("params: unknown parameter '" + k + "' for " + std::string(to_string(c.model)));
        if (!std::isfinite(v)) throw ConfigError("params." + k + ": must be finite");
    }
    if (!(c.grid.L > 0.0) || c.grid.N < 3) throw ConfigError("grid: need L > 0 and N >= 3");
    if (!(c.T > 0.0) || !std::isfinite(c.T)) throw ConfigError("T: must be positive and finite");
    if (!(c.h_ref > 0.0)) throw ConfigError("h_ref: must be positive");
    if (!(c.sav_shift_C > 0.0)) throw ConfigError("sav_shift_C: must be positive");
    try {
        c.controls.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("controls: ") + e.what());
    }
    if (c.h_ladder.empty()) throw ConfigError("h_ladder: must be non-empty");
    auto check_step = [&](double h, const std::string& field) {
        if (!(h > 0.0)) throw ConfigError(field + ": step must be positive");
        if (!detail::is_multiple(c.T, h)) {
            throw ConfigError(field + ": h = " + detail::real_text(h) + " does not divide T = " + detail::real_text(c.T));
        }
        if (!detail::is_multiple(h, c.h_ref)) {
            throw ConfigError(field + ": h = " + detail::real_text(h) + " is not an integer multiple of h_ref = " +
                              detail::real_text(c.h_ref));
        }
    };
    for (double h : c.h_ladder) check_step(h, "h_ladder");
    check_step(c.energy_h, "energy_h");
    if (!detail::is_multiple(c.T, 2.0 * c.h_ref)) {
        throw ConfigError("h_ref: T / h_ref must be an even integer for the reference self-check");
    }
    if (c.params.count("k")) (void)detail::integer_param(c.params, "k");
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["model"] = std::string(to_string(c.model));
    if (c.formulation) j["formulation"] = std::string(models::to_string(*c.formulation));
    j["params"] = c.params;
    j["grid"] = {{"L", c.grid.L}, {"N", c.grid.N}};
    std::vector<std::string> methods;
    for (MethodId m : c.methods) methods.emplace_back(to_string(m));
    j["methods"] = methods;
    j["h_ladder"] = c.h_ladder;
    j["T"] = c.T;
    j["controls"] = {{"fixed_point_tol", c.controls.fixed_point_tol},
                     {"fixed_point_max_iter", c.controls.fixed_point_max_iter},
                     {"newton_tol", c.controls.newton_tol},
                     {"newton_max_iter", c.controls.newton_max_iter},
                     {"newton_initial_eta", c.controls.newton_initial_eta},
                     {"multiplier_fallback_tol", c.controls.multiplier_fallback_tol}};
    j["sav_shift_C"] = c.sav_shift_C;
    j["h_ref"] = c.h_ref;
    j["energy_h"] = c.energy_h;
    j["output_dir"] = c.output_dir.string();
    std::vector<std::string> ex;
    for (Experiment e : c.experiments) ex.emplace_back(to_string(e));
    j["experiments"] = ex;
    return j;
}

namespace detail {

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + key + ": " + e.what());
    }
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) throw ConfigError("unknown field '" + where + item.key() + "'");
    }
}

}  // namespace detail

/// Builds a config from JSON, filling omitted fields with the model's defaults.
inline ExperimentConfig from_json(const nlohmann::json& j) {
    detail::reject_unknown(j,
                           {"model", "formulation", "params", "grid", "methods", "h_ladder", "T", "controls",
                            "sav_shift_C", "h_ref", "energy_h", "output_dir", "experiments"},
                           "");
    const std::string model_name = j.contains("model") ? detail::field<std::string>(j, "model", "") : "klein_gordon";
    const auto model = parse_model(model_name);
    if (!model) throw ConfigError("model: unknown model '" + model_name + "' (klein_gordon, afpu, gkdv)");
    ExperimentConfig c = default_config(*model);

    if (j.contains("formulation")) {
        const auto f = detail::field<std::string>(j, "formulation", "");
        if (*model != ModelId::afpu) throw ConfigError("formulation: only valid for model afpu");
        c.formulation = parse_formulation(f);
        if (!c.formulation) throw ConfigError("formulation: unknown value '" + f + "' (conservative, dissipative)");
    }
    if (j.contains("params")) {
        const auto& p = j.at("params");
        if (!p.is_object()) throw ConfigError("params: expected an object");
        for (const auto& item : p.items()) {
            if (!c.params.count(item.key())) {
                throw ConfigError("params: unknown parameter '" + item.key() + "' for " + model_name);
            }
            if (!item.value().is_number()) throw ConfigError("params." + item.key() + ": expected a number");
            c.params[item.key()] = item.value().get<double>();
        }
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        detail::reject_unknown(g, {"L", "N"}, "grid.");
        if (g.contains("L")) c.grid.L = detail::field<double>(g, "L", "grid.");
        if (g.contains("N")) c.grid.N = detail::field<int>(g, "N", "grid.");
    }
    if (j.contains("methods")) {
        c.methods.clear();
        for (const auto& name : detail::field<std::vector<std::string>>(j, "methods", "")) {
            const auto m = parse_method(name);
            if (!m) throw ConfigError("methods: unknown method '" + name + "'");
            c.methods.push_back(*m);
        }
    }
    if (j.contains("h_ladder")) c.h_ladder = detail::field<std::vector<double>>(j, "h_ladder", "");
    if (j.contains("T")) c.T = detail::field<double>(j, "T", "");
    if (j.contains("controls")) {
        const auto& k = j.at("controls");
        detail::reject_unknown(k,
                               {"fixed_point_tol", "fixed_point_max_iter", "newton_tol", "newton_max_iter",
                                "newton_initial_eta", "multiplier_fallback_tol"},
                               "controls.");
        if (k.contains("fixed_point_tol")) c.controls.fixed_point_tol = detail::field<double>(k, "fixed_point_tol", "controls.");
        if (k.contains("fixed_point_max_iter")) c.controls.fixed_point_max_iter = detail::field<int>(k, "fixed_point_max_iter", "controls.");
        if (k.contains("newton_tol")) c.controls.newton_tol = detail::field<double>(k, "newton_tol", "controls.");
        if (k.contains("newton_max_iter")) c.controls.newton_max_iter = detail::field<int>(k, "newton_max_iter", "controls.");
        if (k.contains("newton_initial_eta")) c.controls.newton_initial_eta = detail::field<double>(k, "newton_initial_eta", "controls.");
        if (k.contains("multiplier_fallback_tol")) {
            c.controls.multiplier_fallback_tol = detail::field<double>(k, "multiplier_fallback_tol", "controls.");
        }
    }
    if (j.contains("sav_shift_C")) c.sav_shift_C = detail::field<double>(j, "sav_shift_C", "");
    if (j.contains("h_ref")) c.h_ref = detail::field<double>(j, "h_ref", "");
    if (j.contains("energy_h")) c.energy_h = detail::field<double>(j, "energy_h", "");
    if (j.contains("output_dir")) c.output_dir = detail::field<std::string>(j, "output_dir", "");
    if (j.contains("experiments")) {
        c.experiments.clear();
        for (const auto& name : detail::field<std::vector<std::string>>(j, "experiments", "")) {
            const auto e = parse_experiment(name);
            if (!e) throw ConfigError("experiments: unknown experiment '" + name + "'");
            c.experiments.push_back(*e);
        }
    }
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

inline std::string serialize(const ExperimentConfig& c) { return to_json(c).dump(2); }

// ---------------------------------------------------------------------------
// Problem construction

inline models::BenchmarkProblem build_problem(const ExperimentConfig& c) {
    const auto& p = c.params;
    switch (c.model) {
        case ModelId::klein_gordon: {
            models::KleinGordonParams kp;
            kp.omega = p.at("omega");
            kp.kappa = p.at("kappa");
            kp.alpha = p.at("alpha");
            kp.gamma = p.at("gamma");
            return models::klein_gordon(kp, {c.grid.L, c.grid.N, models::Boundary::periodic}, c.sav_shift_C);
        }
        case ModelId::afpu: {
            models::FpuParams fp;
            fp.k = detail::integer_param(p, "k");
            fp.eps = p.at("eps");
            fp.beta = p.at("beta");
            fp.gamma = p.at("gamma");
            fp.m = p.at("m");
            fp.ic_alpha = p.at("ic_alpha");
            fp.formulation = c.formulation.value_or(models::FpuFormulation::conservative);
            return models::afpu(fp, {c.grid.L, c.grid.N, models::Boundary::dirichlet}, c.sav_shift_C);
        }
        case ModelId::gkdv: {
            models::GkdvParams gp;
            gp.sigma = p.at("sigma");
            gp.eps = p.at("eps");
            gp.k = detail::integer_param(p, "k");
            gp.mu = p.at("mu");
            return models::gkdv(gp, {c.grid.L, c.grid.N, models::Boundary::periodic}, c.sav_shift_C);
        }
    }
    throw ConfigError("unknown model");
}

}  // namespace hamsplit
