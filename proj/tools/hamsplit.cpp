#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "hamsplit/cli.hpp"

namespace {

// Accepts plain reals and powers of two written as 2^-5.
double parse_step(const std::string& s) {
    if (s.rfind("2^", 0) == 0) return std::ldexp(1.0, std::stoi(s.substr(2)));
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw hamsplit::ConfigError("cannot parse step '" + s + "'");
    return v;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct Flags {
    std::string config, model, methods, h_ladder, out, formulation;
    std::optional<double> T, h_ref, sav_shift_C;
};

void add_flags(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON experiment config");
    app->add_option("--model", f.model, "klein_gordon | afpu | gkdv");
    app->add_option("--methods", f.methods, "comma-separated method list");
    app->add_option("--h-ladder", f.h_ladder, "comma-separated steps, e.g. 2^-5,2^-6");
    app->add_option("--T", f.T, "final time");
    app->add_option("--h-ref", f.h_ref, "reference step");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--sav-shift-C", f.sav_shift_C, "SAV shift C");
    app->add_option("--formulation", f.formulation, "afpu operator split: conservative | dissipative");
}

hamsplit::ExperimentConfig resolve(const Flags& f) {
    nlohmann::json j = nlohmann::json::object();
    if (!f.config.empty()) {
        std::ifstream in(f.config);
        if (!in) throw hamsplit::ConfigError("cannot read config file " + f.config);
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw hamsplit::ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
    }
    if (!f.model.empty()) {
        if (j.contains("model") && j["model"] != f.model) {
            // A different model invalidates model-specific fields taken from the file.
            for (const char* k : {"params", "grid", "methods", "h_ladder", "formulation"}) j.erase(k);
        }
        j["model"] = f.model;
    }
    if (!f.methods.empty()) j["methods"] = split_list(f.methods);
    if (!f.h_ladder.empty()) {
        std::vector<double> hs;
        for (const auto& s : split_list(f.h_ladder)) hs.push_back(parse_step(s));
        j["h_ladder"] = hs;
    }
    if (f.T) j["T"] = *f.T;
    if (f.h_ref) j["h_ref"] = *f.h_ref;
    if (!f.out.empty()) j["output_dir"] = f.out;
    if (f.sav_shift_C) j["sav_shift_C"] = *f.sav_shift_C;
    if (!f.formulation.empty()) j["formulation"] = f.formulation;
    return hamsplit::from_json(j);
}

void error_summary(const char* kind, const std::string& msg) {
    std::cerr << nlohmann::json{{"status", "error"}, {"kind", kind}, {"message", msg}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hamsplit: structure-preserving integrators for damped Hamiltonian systems"};
    app.require_subcommand(1);
    Flags flags;
    struct Sub {
        const char* name;
        const char* help;
        std::optional<hamsplit::Experiment> experiment;
    };
    const std::vector<Sub> subs = {
        {"run", "run every experiment listed in the config", std::nullopt},
        {"converge", "convergence table against the reference", hamsplit::Experiment::converge},
        {"efficiency", "error vs wall time", hamsplit::Experiment::efficiency},
        {"energy", "energy traces, errors and monotonicity", hamsplit::Experiment::energy},
        {"verify", "Loewner-order certification of the model", hamsplit::Experiment::verify},
    };
    std::vector<CLI::App*> handles;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        add_flags(sub, flags);
        handles.push_back(sub);
    }
    CLI11_PARSE(app, argc, argv);

    try {
        hamsplit::ExperimentConfig cfg = resolve(flags);
        hamsplit::cli::write_config_snapshot(cfg);
        hamsplit::cli::Session session(std::move(cfg));
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!handles[i]->parsed()) continue;
            if (subs[i].experiment) return hamsplit::cli::run_experiment(session, *subs[i].experiment, std::cout);
            return hamsplit::cli::cmd_run(session, std::cout);
        }
    } catch (const hamsplit::ConfigError& e) {
        error_summary("config", e.what());
        return 2;
    } catch (const hamsplit::StepFailure& e) {
        error_summary("step_failure", e.what());
        return 5;
    } catch (const hamsplit::ReferenceError& e) {
        error_summary("reference", e.what());
        return 6;
    } catch (const std::exception& e) {
        error_summary("internal", e.what());
        return 1;
    }
    return 1;
}
