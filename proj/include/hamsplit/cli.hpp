#pragma once

// Subcommand implementations behind the hamsplit executable.

#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hamsplit/config.hpp"
#include "hamsplit/harness.hpp"
#include "hamsplit/integrators.hpp"
#include "hamsplit/matfun.hpp"
#include "hamsplit/models.hpp"

namespace hamsplit::cli {

/// Problem, config and a lazily computed reference shared by the subcommands.
class Session {
  public:
    explicit Session(ExperimentConfig cfg) : cfg_(std::move(cfg)), problem_(build_problem(cfg_)) {}

    [[nodiscard]] const ExperimentConfig& config() const { return cfg_; }
    [[nodiscard]] const models::BenchmarkProblem& problem() const { return problem_; }

    /// Reference stride: the largest sampling interval every configured step lands on.
    [[nodiscard]] std::int64_t reference_stride() const {
        std::int64_t g = 0;
        auto add = [&](double h) { g = std::gcd(g, static_cast<std::int64_t>(std::llround(h / cfg_.h_ref))); };
        for (double h : cfg_.h_ladder) add(h);
        add(cfg_.energy_h);
        return std::max<std::int64_t>(g, 1);
    }

    const ReferenceSolution& reference(std::ostream& log) {
        if (!ref_) {
            ReferenceOptions opts;
            opts.controls = cfg_.controls;
            opts.record_every = reference_stride();
            log << "reference: seavf, h_ref = " << cfg_.h_ref << ", T = " << cfg_.T << " ... " << std::flush;
            ref_ = reference_solution(problem_.system, problem_.initial, cfg_.T, cfg_.h_ref, opts);
            log << (ref_->from_cache ? "loaded from " : "computed, cached at ") << ref_->cache_file.string()
                << " (self-check " << ref_->self_check_difference << ")\n";
        }
        return *ref_;
    }

  private:
    ExperimentConfig cfg_;
    models::BenchmarkProblem problem_;
    std::optional<ReferenceSolution> ref_;
};

inline std::filesystem::path out_path(const ExperimentConfig& c, const std::string& name) {
    return c.output_dir / name;
}

inline void write_config_snapshot(const ExperimentConfig& c) {
    std::filesystem::create_directories(c.output_dir);
    std::ofstream out(out_path(c, "config.json"));
    if (!out) throw IoError("cannot write " + out_path(c, "config.json").string());
    out << serialize(c) << '\n';
}

inline int cmd_converge(Session& s, std::ostream& out) {
    const auto& c = s.config();
    const auto& p = s.problem();
    const auto rows = convergence_study(p.system, p.initial, c.methods, c.h_ladder, c.T, s.reference(out), c.controls);
    emit_csv(convergence_table(rows), out_path(c, "convergence.csv"));

    std::vector<PlotSeries> series;
    out << std::left << std::setw(8) << "method" << std::setw(14) << "h" << std::setw(14) << "error" << "order\n";
    for (const ConvergenceRow& r : rows) {
        if (series.empty() || series.back().label != to_string(r.method)) {
            series.push_back({std::string(to_string(r.method)), {}, {}});
        }
        series.back().x.push_back(r.h);
        series.back().y.push_back(r.error);
        out << std::setw(8) << to_string(r.method) << std::setw(14) << r.h << std::setw(14) << r.error;
        if (r.observed_order) out << std::fixed << std::setprecision(3) << *r.observed_order << std::defaultfloat
                                  << std::setprecision(6);
        out << '\n';
    }
    emit_svg_lineplot(series, out_path(c, "convergence.svg"), PlotAxes::loglog,
                      {std::string(s.problem().system.name) + ": max-norm error", "h", "error"});
    return 0;
}

inline int cmd_efficiency(Session& s, std::ostream& out) {
    const auto& c = s.config();
    const auto& p = s.problem();
    const auto rows = efficiency_study(p.system, p.initial, c.methods, c.h_ladder, c.T, s.reference(out), c.controls);
    emit_csv(efficiency_table(rows), out_path(c, "efficiency.csv"));

    std::vector<PlotSeries> series;
    out << std::left << std::setw(8) << "method" << std::setw(14) << "h" << std::setw(14) << "error" << std::setw(14)
        << "time_s" << std::setw(12) << "iter_solves" << "linear_solves\n";
    for (const EfficiencyRow& r : rows) {
        if (series.empty() || series.back().label != to_string(r.method)) {
            series.push_back({std::string(to_string(r.method)), {}, {}});
        }
        series.back().x.push_back(r.wall_time_s);
        series.back().y.push_back(r.error);
        out << std::setw(8) << to_string(r.method) << std::setw(14) << r.h << std::setw(14) << r.error
            << std::setw(14) << r.wall_time_s << std::setw(12) << r.stats.iterative_solves << r.stats.linear_solves
            << '\n';
    }
    emit_svg_lineplot(series, out_path(c, "efficiency.svg"), PlotAxes::loglog,
                      {std::string(p.system.name) + ": error vs CPU time", "wall time [s]", "error"});
    return 0;
}

inline int cmd_energy(Session& s, std::ostream& out) {
    const auto& c = s.config();
    const auto& p = s.problem();
    const auto traces = energy_study(p.system, p.initial, c.methods, c.energy_h, c.T, s.reference(out), c.controls);
    emit_csv(energy_error_table(traces), out_path(c, "energy_errors.csv"));

    CsvTable mono{{"method", "tracked", "violations", "max_relative_increase", "theorem_covered"}, {}};
    std::vector<PlotSeries> h_series, err_series;
    int status = 0;
    for (const EnergyTrace& tr : traces) {
        const MethodId m = tr.trajectory.method;
        const std::string name(to_string(m));
        emit_csv(trajectory_table(tr.trajectory), out_path(c, "trajectory_" + name + ".csv"));
        PlotSeries hs{name, {}, {}};
        for (const TrajectoryRecord& r : tr.trajectory.records) {
            hs.x.push_back(r.t);
            hs.y.push_back(r.H);
        }
        h_series.push_back(std::move(hs));
        PlotSeries es{name, {}, {}};
        for (const EnergyErrorRow& r : tr.errors) {
            es.x.push_back(r.t);
            es.y.push_back(r.E_H);
        }
        err_series.push_back(std::move(es));

        const char* tracked = aux_kind(m) == AuxKind::sav ? "H_tilde" : "H";
        mono.rows.push_back({name, tracked, std::to_string(tr.violations), format_real(tr.max_increase),
                             tr.theorem_covered ? "1" : "0"});
        out << std::left << std::setw(8) << name << tracked << " violations " << tr.violations
            << (tr.theorem_covered ? "" : " (not theorem-covered)") << '\n';
        if (tr.theorem_covered && tr.violations > 0) status = 3;
    }
    emit_csv(mono, out_path(c, "energy_monotonicity.csv"));
    emit_svg_lineplot(h_series, out_path(c, "energy.svg"), PlotAxes::linear,
                      {std::string(p.system.name) + ": discrete energy", "t", "H"});
    emit_svg_lineplot(err_series, out_path(c, "energy_error.svg"), PlotAxes::loglog,
                      {std::string(p.system.name) + ": energy error", "t", "E_H"});
    if (status) {
        std::cerr << "{\"status\":\"error\",\"kind\":\"energy_monotonicity\",\"message\":"
                     "\"tracked energy increased for a theorem-covered method\"}\n";
    }
    return status;
}

struct Certification {
    std::string name;
    bool required = true;
    bool passed = false;
    double min_eigenvalue = 0.0;
    double tolerance = 0.0;
};

/// sym(M D) >= 0, damping and Hamiltonian-flow contraction of the M-norm,
/// and ECLD at states sampled along a trajectory.
inline std::vector<Certification> certify(const SemidiscreteSystem& sys, const Vector& z0, double h, double T,
                                          const SolverControls& controls, double tol = 1e-10) {
    std::vector<Certification> out;
    auto add = [&](std::string name, const PsdVerdict& v, bool required) {
        out.push_back({std::move(name), required, v.is_psd, v.min_eigenvalue, v.tolerance_used});
    };
    const Matrix D = sys.damping.at(0.0);
    add("sym(M D) >= 0", check_psd(sym_part(sys.M * D), tol), true);

    const Matrix G = damping_propagator(sys.damping, 0.0, h);
    add("M - G^T M G >= 0", check_psd(sys.M - G.transpose() * sys.M * G, tol), true);
    const Matrix Ginv = G.inverse();
    add("G^-T M G^-1 - M >= 0", check_psd(Ginv.transpose() * sys.M * Ginv - sys.M, tol), true);

    const Matrix E = expm(h * sys.S * sys.M);
    add("M - E^T M E >= 0 (E = exp(h S M))", check_psd(sys.M - E.transpose() * sys.M * E, tol), true);

    const Trajectory traj = integrate(sys, MethodId::seavf, z0, h, T, controls,
                                      {std::max<std::int64_t>(1, step_count(T, h) / 10)});
    for (const TrajectoryRecord& r : traj.records) {
        std::ostringstream name;
        name << "ECLD at t = " << r.t;
        add(name.str(), check_ecld(sys, r.z, r.t, tol), false);
    }
    return out;
}

inline int cmd_verify(Session& s, std::ostream& out) {
    const auto& c = s.config();
    const auto& p = s.problem();
    const auto certs = certify(p.system, p.initial, c.energy_h, c.T, c.controls);
    nlohmann::json report = nlohmann::json::array();
    bool ok = true;
    out << "certification for " << p.system.name << '\n';
    for (const Certification& cert : certs) {
        out << "  [" << (cert.passed ? "psd" : "NOT psd") << "] " << cert.name << "  min eig " << cert.min_eigenvalue
            << "  tol " << cert.tolerance << (cert.required ? "" : "  (diagnostic)") << '\n';
        report.push_back({{"check", cert.name},
                          {"required", cert.required},
                          {"is_psd", cert.passed},
                          {"min_eigenvalue", cert.min_eigenvalue},
                          {"tolerance", cert.tolerance}});
        if (cert.required && !cert.passed) ok = false;
    }
    std::filesystem::create_directories(c.output_dir);
    std::ofstream f(out_path(c, "verify.json"));
    f << report.dump(2) << '\n';
    if (!ok) {
        std::cerr << "{\"status\":\"error\",\"kind\":\"certification\",\"message\":\"a required Loewner check failed\"}\n";
        return 4;
    }
    return 0;
}

inline int run_experiment(Session& s, Experiment e, std::ostream& out) {
    switch (e) {
        case Experiment::converge: return cmd_converge(s, out);
        case Experiment::efficiency: return cmd_efficiency(s, out);
        case Experiment::energy: return cmd_energy(s, out);
        case Experiment::verify: return cmd_verify(s, out);
    }
    return 1;
}

/// Every configured experiment in order; the first nonzero status wins.
inline int cmd_run(Session& s, std::ostream& out) {
    int status = 0;
    for (Experiment e : s.config().experiments) {
        out << "== " << to_string(e) << '\n';
        const int rc = run_experiment(s, e, out);
        if (rc != 0 && status == 0) status = rc;
    }
    return status;
}

}  // namespace hamsplit::cli
