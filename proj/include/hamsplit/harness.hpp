#pragma once

// Experiment drivers: cached reference solutions, convergence / efficiency /
// energy studies, CSV and SVG emission.

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hamsplit/errors.hpp"
#include "hamsplit/integrators.hpp"
#include "hamsplit/system.hpp"

namespace hamsplit {

// ---------------------------------------------------------------------------
// Hashing

namespace detail {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

struct Fnv {
    std::uint64_t h = kFnvOffset;
    void bytes(const void* d, std::size_t n) { h = fnv1a(d, n, h); }
    void real(double x) { bytes(&x, sizeof x); }
    void integer(std::int64_t x) { bytes(&x, sizeof x); }
    void text(const std::string& s) {
        integer(static_cast<std::int64_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void matrix(const Matrix& m) {
        integer(m.rows());
        integer(m.cols());
        bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    }
};

}  // namespace detail

/// Fingerprint of everything that determines a trajectory from z0.
///
/// The potential is opaque, so it is probed at z0 and at a fixed pattern
/// state; this catches changes of the nonlinear coefficients.
inline std::uint64_t parameter_hash(const SemidiscreteSystem& sys, const Vector& z0,
                                    const SolverControls& controls) {
    detail::Fnv f;
    f.text(sys.name);
    f.matrix(sys.S);
    f.matrix(sys.M);
    f.real(sys.sav_shift);
    f.integer(sys.damping.is_constant() ? 1 : 0);
    for (double t : {0.0, 0.5, 1.0}) f.matrix(sys.damping.at(t));
    f.integer(sys.combined_S ? 1 : 0);
    if (sys.combined_S) f.matrix(*sys.combined_S);
    f.matrix(z0);
    Vector probe(sys.dim());
    for (Index i = 0; i < probe.size(); ++i) probe[i] = 0.3 * std::sin(1.0 + 0.7 * static_cast<double>(i));
    for (const Vector* z : {&z0, static_cast<const Vector*>(&probe)}) {
        f.real(sys.V(*z));
        f.matrix(sys.grad_V(*z));
    }
    f.real(controls.fixed_point_tol);
    f.integer(controls.fixed_point_max_iter);
    return f.h;
}

// ---------------------------------------------------------------------------
// Reference solutions

struct ReferenceOptions {
    std::optional<std::filesystem::path> cache_dir;  ///< default: $HAMSPLIT_CACHE_DIR, else ./hamsplit-cache
    bool use_cache = true;
    std::int64_t record_every = 1;  ///< keep every k-th reference state
    double self_check_tol = 1e-8;
    SolverControls controls;
};

struct ReferenceSolution {
    std::string model;
    Trajectory trajectory;
    double h_ref = 0.0;
    double T = 0.0;
    std::int64_t record_every = 1;
    std::uint64_t param_hash = 0;
    double self_check_difference = 0.0;  ///< ||z_T(h_ref) - z_T(2 h_ref)||_inf
    bool from_cache = false;
    std::filesystem::path cache_file;

    /// Sampling interval of the stored records.
    [[nodiscard]] double spacing() const { return h_ref * static_cast<double>(record_every); }

    /// The stored record at time t, which must lie on the sampling grid.
    [[nodiscard]] const TrajectoryRecord& at(double t) const {
        const double k = t / spacing();
        const double idx = std::round(k);
        if (std::abs(k - idx) > 1e-9 * std::max(1.0, k) || idx < 0 ||
            idx >= static_cast<double>(trajectory.records.size())) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "reference has no state at t = " << t << " (sampling interval " << spacing() << ")";
            throw ConfigError(msg.str());
        }
        return trajectory.records[static_cast<std::size_t>(idx)];
    }
};

inline std::filesystem::path default_cache_dir() {
    if (const char* env = std::getenv("HAMSPLIT_CACHE_DIR"); env && *env) return env;
    return std::filesystem::path("hamsplit-cache");
}

namespace detail {

inline constexpr char kCacheMagic[8] = {'H', 'S', 'R', 'E', 'F', 'C', 'A', 'C'};
inline constexpr std::uint32_t kCacheVersion = 1;

class ByteWriter {
  public:
    template <class T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void raw(const void* d, std::size_t n) {
        const auto* p = static_cast<const char*>(d);
        buf_.insert(buf_.end(), p, p + n);
    }
    [[nodiscard]] const std::vector<char>& buffer() const { return buf_; }

  private:
    std::vector<char> buf_;
};

class ByteReader {
  public:
    explicit ByteReader(const std::vector<char>& b, std::size_t end) : buf_(b), end_(end) {}
    template <class T>
    bool get(T& v) {
        if (pos_ + sizeof(T) > end_) return false;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return true;
    }
    bool raw(void* d, std::size_t n) {
        if (pos_ + n > end_) return false;
        std::memcpy(d, buf_.data() + pos_, n);
        pos_ += n;
        return true;
    }
    [[nodiscard]] bool at_end() const { return pos_ == end_; }

  private:
    const std::vector<char>& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

inline std::string hex64(std::uint64_t v) {
    char s[17];
    std::snprintf(s, sizeof s, "%016llx", static_cast<unsigned long long>(v));
    return s;
}

}  // namespace detail

/// File name of the cache entry for this key.
inline std::string reference_cache_name(const std::string& model, std::uint64_t param_hash, double h_ref,
                                        double T, std::int64_t record_every) {
    detail::Fnv f;
    f.text(model);
    f.integer(static_cast<std::int64_t>(param_hash));
    f.real(h_ref);
    f.real(T);
    f.integer(record_every);
    std::string safe;
    for (char c : model) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '-';
    return safe + "-" + detail::hex64(f.h) + ".ref";
}

/// Serializes a reference (layout in docs/reference_cache.md).
inline void save_reference(const ReferenceSolution& ref, const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.raw(detail::kCacheMagic, sizeof detail::kCacheMagic);
    w.put(detail::kCacheVersion);
    w.put(static_cast<std::uint32_t>(ref.model.size()));
    w.raw(ref.model.data(), ref.model.size());
    const std::string name(to_string(ref.trajectory.method));
    w.put(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.put(ref.param_hash);
    w.put(ref.h_ref);
    w.put(ref.T);
    w.put(ref.record_every);
    const std::int64_t dim = ref.trajectory.records.empty() ? 0 : ref.trajectory.records.front().z.size();
    const auto n_rec = static_cast<std::int64_t>(ref.trajectory.records.size());
    w.put(dim);
    w.put(n_rec);
    w.put(ref.self_check_difference);
    w.put(ref.trajectory.wall_time_seconds);
    w.put(ref.trajectory.solver_stats.fixed_point_iters);
    for (const TrajectoryRecord& rec : ref.trajectory.records) {
        if (rec.z.size() != dim) throw InvalidArgument("save_reference: ragged trajectory");
        w.put(rec.step);
        w.put(rec.t);
        w.put(rec.H);
        w.raw(rec.z.data(), sizeof(double) * static_cast<std::size_t>(dim));
    }
    const std::uint64_t checksum = detail::fnv1a(w.buffer().data(), w.buffer().size());
    w.put(checksum);

    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(static_cast<long long>(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write reference cache " + tmp.string());
        out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move reference cache into place at " + path.string());
    }
}

/// Reads a cache entry; nullopt when missing, corrupt, or keyed differently.
inline std::optional<ReferenceSolution> load_reference(const std::filesystem::path& path,
                                                       const std::string& want_model, std::uint64_t param_hash, double h_ref, double T,
                                                       std::int64_t record_every) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(detail::kCacheMagic) + sizeof(std::uint64_t)) return std::nullopt;
    const std::size_t body = buf.size() - sizeof(std::uint64_t);
    std::uint64_t stored_sum = 0;
    std::memcpy(&stored_sum, buf.data() + body, sizeof stored_sum);
    if (detail::fnv1a(buf.data(), body) != stored_sum) return std::nullopt;

    detail::ByteReader r(buf, body);
    char magic[8];
    std::uint32_t version = 0;
    if (!r.raw(magic, sizeof magic) || std::memcmp(magic, detail::kCacheMagic, sizeof magic) != 0) {
        return std::nullopt;
    }
    if (!r.get(version) || version != detail::kCacheVersion) return std::nullopt;
    std::uint32_t model_len = 0;
    if (!r.get(model_len) || model_len > 4096) return std::nullopt;
    std::string model(model_len, '\0');
    if (!r.raw(model.data(), model_len)) return std::nullopt;
    std::uint32_t name_len = 0;
    if (!r.get(name_len) || name_len > 64) return std::nullopt;
    std::string name(name_len, '\0');
    if (!r.raw(name.data(), name_len)) return std::nullopt;
    const auto method = parse_method(name);
    if (!method) return std::nullopt;

    ReferenceSolution ref;
    std::int64_t dim = 0, n_rec = 0;
    if (!r.get(ref.param_hash) || !r.get(ref.h_ref) || !r.get(ref.T) || !r.get(ref.record_every) ||
        !r.get(dim) || !r.get(n_rec) || !r.get(ref.self_check_difference) ||
        !r.get(ref.trajectory.wall_time_seconds) || !r.get(ref.trajectory.solver_stats.fixed_point_iters)) {
        return std::nullopt;
    }
    if (model != want_model) return std::nullopt;
    ref.model = model;
    if (ref.param_hash != param_hash || ref.h_ref != h_ref || ref.T != T || ref.record_every != record_every) {
        return std::nullopt;
    }
    if (dim < 1 || n_rec < 1) return std::nullopt;
    ref.trajectory.method = *method;
    ref.trajectory.h = h_ref;
    ref.trajectory.records.resize(static_cast<std::size_t>(n_rec));
    for (TrajectoryRecord& rec : ref.trajectory.records) {
        rec.z.resize(dim);
        if (!r.get(rec.step) || !r.get(rec.t) || !r.get(rec.H) ||
            !r.raw(rec.z.data(), sizeof(double) * static_cast<std::size_t>(dim))) {
            return std::nullopt;
        }
    }
    if (!r.at_end()) return std::nullopt;
    ref.from_cache = true;
    ref.cache_file = path;
    return ref;
}

/// SEAVF at h_ref, cached on disk and checked against a 2 h_ref run once per entry.
inline ReferenceSolution reference_solution(const SemidiscreteSystem& sys, const Vector& z0, double T,
                                            double h_ref, const ReferenceOptions& opts = {}) {
    const std::int64_t n_steps = step_count(T, h_ref);
    if (opts.record_every < 1 || n_steps % opts.record_every != 0) {
        throw ConfigError("reference_solution: record stride must divide T / h_ref");
    }
    if (n_steps % 2 != 0) {
        throw ConfigError("reference_solution: T / h_ref must be even for the step-halving check");
    }
    const std::uint64_t hash = parameter_hash(sys, z0, opts.controls);
    std::filesystem::path file;
    if (opts.use_cache) {
        file = opts.cache_dir.value_or(default_cache_dir()) /
               reference_cache_name(sys.name, hash, h_ref, T, opts.record_every);
        if (auto cached = load_reference(file, sys.name, hash, h_ref, T, opts.record_every)) {
            return *std::move(cached);
        }
    }

    ReferenceSolution ref;
    ref.model = sys.name;
    ref.h_ref = h_ref;
    ref.T = T;
    ref.record_every = opts.record_every;
    ref.param_hash = hash;
    ref.trajectory = integrate(sys, MethodId::seavf, z0, h_ref, T, opts.controls, {opts.record_every});
    const Trajectory coarse = integrate(sys, MethodId::seavf, z0, 2.0 * h_ref, T, opts.controls, {n_steps});
    ref.self_check_difference =
        (ref.trajectory.records.back().z - coarse.records.back().z).cwiseAbs().maxCoeff();
    if (!(ref.self_check_difference <= opts.self_check_tol)) {
        std::ostringstream msg;
        msg.precision(6);
        msg << "reference self-check failed for " << sys.name << ": terminal states at h_ref and 2 h_ref differ by "
            << ref.self_check_difference << " > " << opts.self_check_tol;
        throw ReferenceError(msg.str());
    }
    if (opts.use_cache) {
        save_reference(ref, file);
        ref.cache_file = file;
    }
    return ref;
}

// ---------------------------------------------------------------------------
// Studies

struct ConvergenceRow {
    MethodId method = MethodId::seavf;
    double h = 0.0;
    double error = 0.0;
    std::optional<double> observed_order;
};

/// max_n ||z^n - z_ref(t_n)||_inf over every step of the trajectory.
inline double trajectory_error(const Trajectory& traj, const ReferenceSolution& ref) {
    double err = 0.0;
    for (const TrajectoryRecord& rec : traj.records) {
        err = std::max(err, (rec.z - ref.at(rec.t).z).cwiseAbs().maxCoeff());
    }
    return err;
}

/// Checks that each h divides T and lands on the reference sampling grid.
inline void check_ladder(const std::vector<double>& ladder, double T, const ReferenceSolution& ref) {
    if (ladder.empty()) throw ConfigError("step ladder is empty");
    for (double h : ladder) {
        try {
            (void)step_count(T, h);
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
        const double k = h / ref.spacing();
        if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k) || std::round(k) < 1.0) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "h = " << h << " is not an integer multiple of the reference sampling interval "
                << ref.spacing();
            throw ConfigError(msg.str());
        }
    }
    if (std::abs(T - ref.T) > 1e-12 * std::max(1.0, T)) {
        throw ConfigError("reference horizon does not match the study horizon T");
    }
}

inline std::vector<ConvergenceRow> convergence_study(const SemidiscreteSystem& sys, const Vector& z0,
                                                     const std::vector<MethodId>& methods,
                                                     const std::vector<double>& ladder, double T,
                                                     const ReferenceSolution& ref,
                                                     const SolverControls& controls = {}) {
    check_ladder(ladder, T, ref);
    std::vector<ConvergenceRow> rows;
    for (MethodId m : methods) {
        std::optional<double> prev_err, prev_h;
        for (double h : ladder) {
            const Trajectory traj = integrate(sys, m, z0, h, T, controls);
            ConvergenceRow row{m, h, trajectory_error(traj, ref), std::nullopt};
            if (prev_err && *prev_err > 0.0 && row.error > 0.0) {
                row.observed_order = std::log(*prev_err / row.error) / std::log(*prev_h / h);
            }
            prev_err = row.error;
            prev_h = h;
            rows.push_back(row);
        }
    }
    return rows;
}

struct EfficiencyRow {
    MethodId method = MethodId::seavf;
    double h = 0.0;
    double error = 0.0;
    double wall_time_s = 0.0;  ///< median over the timed runs
    SolverStats stats;         ///< from one run; identical across runs
};

struct EfficiencyOptions {
    int repeats = 3;
    bool warmup = true;
};

/// Serial timed runs: one discarded warm-up, then the median of `repeats`.
inline std::vector<EfficiencyRow> efficiency_study(const SemidiscreteSystem& sys, const Vector& z0,
                                                   const std::vector<MethodId>& methods,
                                                   const std::vector<double>& ladder, double T,
                                                   const ReferenceSolution& ref,
                                                   const SolverControls& controls = {},
                                                   EfficiencyOptions opts = {}) {
    check_ladder(ladder, T, ref);
    if (opts.repeats < 1) throw InvalidArgument("efficiency_study: repeats must be >= 1");
    std::vector<EfficiencyRow> rows;
    for (MethodId m : methods) {
        for (double h : ladder) {
            if (opts.warmup) (void)integrate(sys, m, z0, h, T, controls);
            std::vector<double> times;
            EfficiencyRow row{m, h, 0.0, 0.0, {}};
            for (int k = 0; k < opts.repeats; ++k) {
                const Trajectory traj = integrate(sys, m, z0, h, T, controls);
                times.push_back(traj.wall_time_seconds);
                if (k == 0) {
                    row.error = trajectory_error(traj, ref);
                    row.stats = traj.solver_stats;
                }
            }
            std::sort(times.begin(), times.end());
            const std::size_t mid = times.size() / 2;
            row.wall_time_s = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
            rows.push_back(row);
        }
    }
    return rows;
}

struct EnergyErrorRow {
    double t = 0.0;
    double E_H = 0.0;
};

struct EnergyTrace {
    Trajectory trajectory;
    std::vector<EnergyErrorRow> errors;
    std::int64_t violations = 0;     ///< steps where the tracked energy rose beyond tolerance
    double max_increase = 0.0;       ///< largest relative rise of the tracked energy
    bool theorem_covered = false;
};

/// Steps where the tracked energy increases by more than tol * (1 + |E|).
inline std::int64_t count_energy_increases(const Trajectory& traj, double tol, double* max_rel = nullptr) {
    std::int64_t count = 0;
    double worst = 0.0;
    for (std::size_t n = 1; n < traj.records.size(); ++n) {
        const double e0 = tracked_energy(traj.method, traj.records[n - 1]);
        const double e1 = tracked_energy(traj.method, traj.records[n]);
        const double rel = (e1 - e0) / (1.0 + std::abs(e0));
        worst = std::max(worst, rel);
        if (e1 - e0 > tol * (1.0 + std::abs(e0))) ++count;
    }
    if (max_rel) *max_rel = worst;
    return count;
}

/// Pairs for which the tracked energy is provably nonincreasing.
///
/// Splitting methods always; the unsplit AVF / CN baselines only on the
/// absorbed form. The exponential unsplit methods carry no such guarantee.
inline bool theorem_covered(MethodId m, const SemidiscreteSystem& sys) {
    switch (m) {
        case MethodId::seisav:
        case MethodId::seilm:
        case MethodId::seavf:
        case MethodId::savf:
        case MethodId::ssav:
        case MethodId::slm: return true;
        case MethodId::avf:
        case MethodId::sav_cn:
        case MethodId::lm_cn: return sys.combined_S.has_value() || sys.damping.is_zero();
        case MethodId::eisav:
        case MethodId::eilm: return false;
    }
    return false;
}

inline constexpr double kMonotonicityTol = 1e-10;

inline std::vector<EnergyTrace> energy_study(const SemidiscreteSystem& sys, const Vector& z0,
                                             const std::vector<MethodId>& methods, double h, double T,
                                             const ReferenceSolution& ref,
                                             const SolverControls& controls = {}) {
    check_ladder({h}, T, ref);
    std::vector<EnergyTrace> out;
    for (MethodId m : methods) {
        EnergyTrace tr;
        tr.trajectory = integrate(sys, m, z0, h, T, controls);
        tr.errors.reserve(tr.trajectory.records.size());
        for (const TrajectoryRecord& rec : tr.trajectory.records) {
            tr.errors.push_back({rec.t, std::abs(rec.H - ref.at(rec.t).H)});
        }
        tr.violations = count_energy_increases(tr.trajectory, kMonotonicityTol, &tr.max_increase);
        tr.theorem_covered = theorem_covered(m, sys);
        out.push_back(std::move(tr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Artifacts

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

/// 17 significant digits, round-trips every double.
inline std::string format_real(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", x);
    return buf;
}

inline std::string format_optional(const std::optional<double>& x) { return x ? format_real(*x) : std::string(); }

inline CsvTable trajectory_table(const Trajectory& traj) {
    CsvTable t{{"step", "t", "H", "aux_energy"}, {}};
    for (const TrajectoryRecord& r : traj.records) {
        t.rows.push_back({std::to_string(r.step), format_real(r.t), format_real(r.H), format_optional(r.aux_energy)});
    }
    return t;
}

inline CsvTable convergence_table(const std::vector<ConvergenceRow>& rows) {
    CsvTable t{{"method", "h", "error", "observed_order"}, {}};
    for (const ConvergenceRow& r : rows) {
        t.rows.push_back({std::string(to_string(r.method)), format_real(r.h), format_real(r.error),
                          format_optional(r.observed_order)});
    }
    return t;
}

inline CsvTable efficiency_table(const std::vector<EfficiencyRow>& rows) {
    CsvTable t{{"method", "h", "error", "wall_time_s", "fp_iters", "newton_iters"}, {}};
    for (const EfficiencyRow& r : rows) {
        t.rows.push_back({std::string(to_string(r.method)), format_real(r.h), format_real(r.error),
                          format_real(r.wall_time_s), std::to_string(r.stats.fixed_point_iters),
                          std::to_string(r.stats.newton_iters)});
    }
    return t;
}

inline CsvTable energy_error_table(const std::vector<EnergyTrace>& traces) {
    CsvTable t{{"method", "t", "E_H"}, {}};
    for (const EnergyTrace& tr : traces) {
        const std::string name(to_string(tr.trajectory.method));
        for (const EnergyErrorRow& r : tr.errors) t.rows.push_back({name, format_real(r.t), format_real(r.E_H)});
    }
    return t;
}

inline void emit_csv(const CsvTable& table, const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << cells[i];
        }
        out << '\n';
    };
    line(table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw InvalidArgument("emit_csv: row width does not match header");
        line(row);
    }
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

enum class PlotAxes { linear, loglog };

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotLabels {
    std::string title;
    std::string x;
    std::string y;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
                                           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};

}  // namespace detail

/// Self-contained SVG line plot. On log-log axes, nonpositive points are dropped.
inline void emit_svg_lineplot(const std::vector<PlotSeries>& series, const std::filesystem::path& path,
                              PlotAxes axes, const PlotLabels& labels = {}) {
    const bool logs = axes == PlotAxes::loglog;
    auto tx = [&](double v) { return logs ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!logs || (x > 0.0 && y > 0.0));
    };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const PlotSeries& s : series) {
        if (s.x.size() != s.y.size()) throw InvalidArgument("emit_svg_lineplot: x/y length mismatch");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, tx(s.y[i]));
            y1 = std::max(y1, tx(s.y[i]));
        }
    }
    if (!std::isfinite(x0)) {
        x0 = 0.0; x1 = 1.0; y0 = 0.0; y1 = 1.0;
    }
    if (x1 == x0) { x0 -= 0.5; x1 += 0.5; }
    if (y1 == y0) { y0 -= 0.5; y1 += 0.5; }

    constexpr double W = 720, Hgt = 480, left = 80, right = 170, top = 40, bottom = 60;
    const double pw = W - left - right, ph = Hgt - top - bottom;
    auto px = [&](double v) { return left + (tx(v) - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return top + ph - (tx(v) - y0) / (y1 - y0) * ph; };

    std::ostringstream svg;
    svg.precision(6);
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hgt
        << "\" viewBox=\"0 0 " << W << ' ' << Hgt << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fx = x0 + (x1 - x0) * k / 4.0;
        const double fy = y0 + (y1 - y0) * k / 4.0;
        const double sx = left + pw * k / 4.0;
        const double sy = top + ph - ph * k / 4.0;
        char lx[32], ly[32];
        std::snprintf(lx, sizeof lx, "%.3g", logs ? std::pow(10.0, fx) : fx);
        std::snprintf(ly, sizeof ly, "%.3g", logs ? std::pow(10.0, fy) : fy);
        svg << "<line x1=\"" << sx << "\" y1=\"" << top + ph << "\" x2=\"" << sx << "\" y2=\"" << top + ph + 5
            << "\" stroke=\"black\"/><text x=\"" << sx << "\" y=\"" << top + ph + 18
            << "\" text-anchor=\"middle\">" << lx << "</text>\n";
        svg << "<line x1=\"" << left - 5 << "\" y1=\"" << sy << "\" x2=\"" << left << "\" y2=\"" << sy
            << "\" stroke=\"black\"/><text x=\"" << left - 8 << "\" y=\"" << sy + 4
            << "\" text-anchor=\"end\">" << ly << "</text>\n";
    }
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << top - 15 << "\" text-anchor=\"middle\">"
        << detail::xml_escape(labels.title) << "</text>\n";
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << Hgt - 15 << "\" text-anchor=\"middle\">"
        << detail::xml_escape(labels.x) << "</text>\n";
    svg << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << detail::xml_escape(labels.y) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = detail::kPalette[s % std::size(detail::kPalette)];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i) {
            if (!usable(series[s].x[i], series[s].y[i])) continue;
            svg << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
        }
        svg << "\"/>\n";
        const double ly = top + 10 + 18.0 * static_cast<double>(s);
        svg << "<line x1=\"" << W - right + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - right + 30 << "\" y2=\""
            << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << W - right + 35
            << "\" y=\"" << ly + 4 << "\">" << detail::xml_escape(series[s].label) << "</text>\n";
    }
    svg << "</svg>\n";

    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << svg.str();
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace hamsplit
