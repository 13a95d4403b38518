#pragma once

// One-step maps for the damped Hamiltonian benchmark methods and the
// fixed-step integration driver.
//
// Unsplit methods (avf, sav_cn, lm_cn, eisav, eilm) run on the absorbed form
// z' = S_c grad H. Splitting methods compose exact half-steps of the damping
// flow z' = -D z around a full Hamiltonian step (Strang).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hamsplit/errors.hpp"
#include "hamsplit/matfun.hpp"
#include "hamsplit/system.hpp"

namespace hamsplit {

enum class MethodId { avf, sav_cn, lm_cn, eisav, eilm, ssav, slm, savf, seavf, seisav, seilm };

inline constexpr std::array<MethodId, 11> kAllMethods = {
    MethodId::avf,  MethodId::sav_cn, MethodId::lm_cn, MethodId::eisav,  MethodId::eilm, MethodId::ssav,
    MethodId::slm,  MethodId::savf,   MethodId::seavf, MethodId::seisav, MethodId::seilm};

inline std::string_view to_string(MethodId m) {
    switch (m) {
        case MethodId::avf: return "avf";
        case MethodId::sav_cn: return "sav_cn";
        case MethodId::lm_cn: return "lm_cn";
        case MethodId::eisav: return "eisav";
        case MethodId::eilm: return "eilm";
        case MethodId::ssav: return "ssav";
        case MethodId::slm: return "slm";
        case MethodId::savf: return "savf";
        case MethodId::seavf: return "seavf";
        case MethodId::seisav: return "seisav";
        case MethodId::seilm: return "seilm";
    }
    return "?";
}

inline std::optional<MethodId> parse_method(std::string_view name) {
    for (MethodId m : kAllMethods) {
        if (to_string(m) == name) return m;
    }
    return std::nullopt;
}

enum class AuxKind { none, sav, lm };

inline AuxKind aux_kind(MethodId m) {
    switch (m) {
        case MethodId::sav_cn:
        case MethodId::eisav:
        case MethodId::ssav:
        case MethodId::seisav: return AuxKind::sav;
        case MethodId::lm_cn:
        case MethodId::eilm:
        case MethodId::slm:
        case MethodId::seilm: return AuxKind::lm;
        default: return AuxKind::none;
    }
}

inline bool is_splitting(MethodId m) {
    switch (m) {
        case MethodId::ssav:
        case MethodId::slm:
        case MethodId::savf:
        case MethodId::seavf:
        case MethodId::seisav:
        case MethodId::seilm: return true;
        default: return false;
    }
}

/// Unsplit methods need the damping absorbed into the structure matrix.
inline bool requires_combined_structure(MethodId m) { return !is_splitting(m); }

struct SolverControls {
    double fixed_point_tol = 1e-15;
    int fixed_point_max_iter = 200;
    double newton_tol = 1e-15;
    int newton_max_iter = 50;
    double newton_initial_eta = 1.0;
    /// Largest |F| accepted, relative to 1 + |V|, when the multiplier equation has no real root.
    double multiplier_fallback_tol = 1e-9;

    void validate() const {
        if (!(fixed_point_tol > 0.0) || !(newton_tol > 0.0) || !(multiplier_fallback_tol > 0.0)) {
            throw InvalidArgument("SolverControls: tolerances must be positive");
        }
        if (fixed_point_max_iter < 1 || newton_max_iter < 1) {
            throw InvalidArgument("SolverControls: iteration limits must be positive");
        }
    }
};

struct SolverStats {
    std::int64_t fixed_point_iters = 0;
    std::int64_t newton_iters = 0;
    std::int64_t iterative_solves = 0;  ///< fixed-point or scalar root-finding invocations
    std::int64_t linear_solves = 0;     ///< direct solves against a cached factorization
    std::int64_t multiplier_fallbacks = 0;  ///< steps that took the least-residual multiplier
    double max_multiplier_residual = 0.0;   ///< largest |F| accepted by such a step
    double max_eta_deviation = 0.0;         ///< max |eta - 1| over multiplier solves

    SolverStats& operator+=(const SolverStats& o) {
        fixed_point_iters += o.fixed_point_iters;
        newton_iters += o.newton_iters;
        iterative_solves += o.iterative_solves;
        linear_solves += o.linear_solves;
        multiplier_fallbacks += o.multiplier_fallbacks;
        max_multiplier_residual = std::max(max_multiplier_residual, o.max_multiplier_residual);
        max_eta_deviation = std::max(max_eta_deviation, o.max_eta_deviation);
        return *this;
    }
};

/// Which structure matrix the Hamiltonian core sees.
enum class CoreForm { split, absorbed };

inline CoreForm core_form(MethodId m) { return is_splitting(m) ? CoreForm::split : CoreForm::absorbed; }

/// S_c for the absorbed form: combined_S, or S itself when there is no damping.
inline const Matrix& absorbed_structure(const SemidiscreteSystem& sys) {
    if (sys.combined_S) return *sys.combined_S;
    if (sys.damping.is_zero()) return sys.S;
    throw InvalidArgument("system '" + sys.name +
                          "' has damping that cannot be absorbed into the structure matrix");
}

/// Step-size bound matrices reused by every step of one run.
struct PropagatorCache {
    double h = 0.0;
    CoreForm form = CoreForm::split;
    Matrix structure;  ///< S (split) or S_c (absorbed)
    Matrix A;          ///< h * structure * M
    Matrix E;
    Matrix E_half;
    Matrix Phi1;
    Matrix Phi1_half;
    Matrix Phi1_S;       ///< Phi1 * structure
    Matrix Phi1_half_S;  ///< Phi1_half * structure
    bool constant_damping = true;
    Matrix Psi_half_left;   ///< damping over [t, t + h/2] (constant damping only)
    Matrix Psi_half_right;  ///< damping over [t + h/2, t + h] (constant damping only)
    Matrix cn_rhs;          ///< I + h/2 structure * M
    Eigen::PartialPivLU<Matrix> cn_lu;  ///< factorization of I - h/2 structure * M
};

/// Precomputes exponentials, phi_1 and damping propagators for step h, and
/// checks the phi_1 identity once.
inline PropagatorCache build_cache(const SemidiscreteSystem& sys, double h, CoreForm form) {
    if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("build_cache: h must be positive");
    const Index d = sys.dim();
    const Matrix eye = Matrix::Identity(d, d);

    PropagatorCache c;
    c.h = h;
    c.form = form;
    c.structure = (form == CoreForm::split) ? sys.S : absorbed_structure(sys);
    const Matrix sm = c.structure * sys.M;
    c.A = h * sm;

    ExpPhi full = expm_phi1(c.A);
    ExpPhi half = expm_phi1(0.5 * c.A);
    c.E = std::move(full.exp);
    c.Phi1 = std::move(full.phi1);
    c.E_half = std::move(half.exp);
    c.Phi1_half = std::move(half.phi1);
    c.Phi1_S = c.Phi1 * c.structure;
    c.Phi1_half_S = c.Phi1_half * c.structure;

    auto residual_ok = [&](const Matrix& a, const Matrix& e, const Matrix& p) {
        const double res = (a * p - (e - eye)).norm();
        return res <= 1e-12 * (1.0 + e.norm()) * std::max(1.0, a.norm());
    };
    if (!residual_ok(c.A, c.E, c.Phi1) || !residual_ok(0.5 * c.A, c.E_half, c.Phi1_half)) {
        throw NumericFailure("build_cache: phi_1 identity residual check failed");
    }

    if (form == CoreForm::absorbed) {
        c.Psi_half_left = eye;
        c.Psi_half_right = eye;
    } else if (sys.damping.is_constant()) {
        c.Psi_half_left = damping_propagator(sys.damping, 0.0, 0.5 * h);
        c.Psi_half_right = c.Psi_half_left;
    } else {
        if (!sys.damping.has_integral()) {
            throw UnsupportedDescriptor(
                "build_cache: time-dependent damping requires a closed-form integral");
        }
        c.constant_damping = false;
    }

    c.cn_rhs = eye + 0.5 * h * sm;
    c.cn_lu.compute(eye - 0.5 * h * sm);
    if (!std::isfinite(c.cn_lu.rcond()) || c.cn_lu.rcond() < 1e-14) {
        throw NumericFailure("build_cache: I - (h/2) S M is numerically singular");
    }
    return c;
}

inline PropagatorCache build_cache(const SemidiscreteSystem& sys, double h, MethodId m) {
    return build_cache(sys, h, core_form(m));
}

namespace detail {

inline void require_cache(const PropagatorCache& cache, double h, CoreForm form, const char* who) {
    if (cache.h != h) {
        throw InvalidArgument(std::string(who) + ": cache was built for a different step size");
    }
    if (cache.form != form) {
        throw InvalidArgument(std::string(who) + ": cache was built for a different core form");
    }
}

inline Vector damp_left(const SemidiscreteSystem& sys, const PropagatorCache& c, double t, const Vector& z) {
    if (c.form == CoreForm::absorbed) return z;
    if (c.constant_damping) return c.Psi_half_left * z;
    return damping_propagator(sys.damping, t, t + 0.5 * c.h) * z;
}

inline Vector damp_right(const SemidiscreteSystem& sys, const PropagatorCache& c, double t, const Vector& z) {
    if (c.form == CoreForm::absorbed) return z;
    if (c.constant_damping) return c.Psi_half_right * z;
    return damping_propagator(sys.damping, t + 0.5 * c.h, t + c.h) * z;
}

constexpr double kEps = std::numeric_limits<double>::epsilon();

}  // namespace detail

/// Exponential half-step predictor e^{A/2} z + h/2 phi_1(A/2) S grad V(z).
inline Vector predictor_exponential(const SemidiscreteSystem& sys, const Vector& z,
                                    const PropagatorCache& cache) {
    detail::require_dim(sys, z, "predictor_exponential");
    return cache.E_half * z + 0.5 * cache.h * (cache.Phi1_half_S * sys.grad_V(z));
}

inline Vector predictor_exponential(const SemidiscreteSystem& sys, const Vector& z, double h,
                                    const PropagatorCache& cache) {
    if (cache.h != h) throw InvalidArgument("predictor_exponential: cache/step mismatch");
    return predictor_exponential(sys, z, cache);
}

/// Linear midpoint predictor against the cached factorization.
inline Vector predictor_midpoint_linear(const SemidiscreteSystem& sys, const Vector& z,
                                        const PropagatorCache& cache) {
    detail::require_dim(sys, z, "predictor_midpoint_linear");
    return cache.cn_lu.solve(z + 0.5 * cache.h * (cache.structure * sys.grad_V(z)));
}

// ---------------------------------------------------------------------------
// Nonlinear solvers

/// Solves x = map(x) by plain fixed-point iteration from x0.
///
/// Converges when the update max-norm drops below tol, or stalls at the
/// roundoff floor. Declares divergence after 5 consecutive growing updates.
template <class Map>
Vector solve_fixed_point(Map&& map, Vector x, const SolverControls& controls, SolverStats& stats,
                         const char* who) {
    ++stats.iterative_solves;
    double prev = std::numeric_limits<double>::infinity();
    int growth = 0;
    int stalls = 0;
    for (int it = 1; it <= controls.fixed_point_max_iter; ++it) {
        Vector next = map(x);
        ++stats.fixed_point_iters;
        if (!next.allFinite()) {
            throw StepFailure(std::string(who) + ": fixed-point iterate became non-finite");
        }
        const double delta = (next - x).cwiseAbs().maxCoeff();
        const double floor = 8.0 * detail::kEps * (1.0 + next.cwiseAbs().maxCoeff());
        x = std::move(next);
        if (delta <= controls.fixed_point_tol) return x;
        if (delta <= floor) {
            if (delta >= prev || ++stalls >= 3) return x;
        }
        growth = (delta > prev) ? growth + 1 : 0;
        if (growth >= 5) {
            std::ostringstream msg;
            msg << who << ": fixed-point iteration diverging (update " << delta << " at iteration "
                << it << ")";
            throw StepFailure(msg.str());
        }
        prev = delta;
    }
    std::ostringstream msg;
    msg << who << ": fixed-point iteration did not converge in " << controls.fixed_point_max_iter
        << " iterations (last update " << prev << ")";
    throw StepFailure(msg.str());
}

/// The scalar Lagrange-multiplier equation
///   F(eta) = V(p + eta q) - V(base) - eta * g^T (p + eta q - base) = 0,
/// with g = grad V(zhat).
struct MultiplierEquation {
    const SemidiscreteSystem* sys = nullptr;
    Vector p;
    Vector q;
    Vector g;
    Vector base;
    double v_base = 0.0;

    [[nodiscard]] Vector state(double eta) const { return p + eta * q; }

    [[nodiscard]] double residual(double eta) const {
        const Vector z = state(eta);
        return sys->V(z) - v_base - eta * g.dot(z - base);
    }

    [[nodiscard]] double derivative(double eta) const {
        const Vector z = state(eta);
        return sys->grad_V(z).dot(q) - g.dot(z - base) - eta * g.dot(q);
    }

    /// Magnitude of the terms in F, for the roundoff floor.
    [[nodiscard]] double scale(double eta) const {
        const Vector z = state(eta);
        return std::abs(sys->V(z)) + std::abs(v_base) + std::abs(eta * g.dot(z - base));
    }
};

struct MultiplierSolution {
    double eta = 1.0;
    double residual = 0.0;
    int iterations = 0;
};

/// Newton from the initial eta, then damped Newton, then bisection on a
/// bracket found by scanning [-10, 10].
inline MultiplierSolution solve_multiplier(const MultiplierEquation& eq, const SolverControls& controls,
                                           SolverStats& stats) {
    ++stats.iterative_solves;
    const double tol = controls.newton_tol;
    auto converged = [&](double eta, double f) {
        return std::abs(f) <= tol || std::abs(f) <= 4.0 * detail::kEps * eq.scale(eta);
    };
    std::ostringstream trace;
    int iterations = 0;

    // Degenerate constraint: F does not depend on eta (e.g. grad V = 0).
    const double gq = eq.g.dot(eq.q);
    if (std::abs(gq) <= 1e-14 * (1.0 + eq.g.norm() * eq.q.norm())) {
        const double f1 = eq.residual(1.0);
        const double f0 = eq.residual(0.0);
        const double f2 = eq.residual(2.0);
        const double flat = 4.0 * detail::kEps * (eq.scale(1.0) + 1e-300) + tol;
        if (std::abs(f1 - f0) <= flat && std::abs(f2 - f1) <= flat) {
            return {1.0, f1, 0};
        }
    }

    // Plain Newton.
    double eta = controls.newton_initial_eta;
    double f = eq.residual(eta);
    if (converged(eta, f)) return {eta, f, 0};
    for (int it = 0; it < controls.newton_max_iter; ++it) {
        const double df = eq.derivative(eta);
        ++iterations;
        ++stats.newton_iters;
        if (!(std::abs(df) > 0.0) || !std::isfinite(df)) break;
        const double next = eta - f / df;
        if (!std::isfinite(next)) break;
        const double f_next = eq.residual(next);
        trace << " [" << next << ", " << f_next << "]";
        if (std::abs(next - eta) <= 4.0 * detail::kEps * (1.0 + std::abs(eta)) && !converged(next, f_next)) {
            // Stagnated on the roundoff floor of the update.
            if (std::abs(f_next) <= 64.0 * detail::kEps * (eq.scale(next) + 1.0)) return {next, f_next, iterations};
            break;
        }
        eta = next;
        f = f_next;
        if (converged(eta, f)) return {eta, f, iterations};
    }

    // Damped Newton with step halving.
    eta = controls.newton_initial_eta;
    f = eq.residual(eta);
    for (int it = 0; it < controls.newton_max_iter; ++it) {
        const double df = eq.derivative(eta);
        ++iterations;
        ++stats.newton_iters;
        if (!(std::abs(df) > 0.0) || !std::isfinite(df)) break;
        const double step = -f / df;
        double lambda = 1.0;
        bool accepted = false;
        while (lambda > 1e-10) {
            const double trial = eta + lambda * step;
            const double f_trial = eq.residual(trial);
            if (std::isfinite(f_trial) && std::abs(f_trial) < std::abs(f)) {
                eta = trial;
                f = f_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) break;
        if (converged(eta, f)) return {eta, f, iterations};
    }

    // Bracketing scan on [-10, 10], preferring the bracket nearest eta = 1.
    constexpr int kGrid = 64;
    std::optional<std::pair<double, double>> bracket;
    double best_distance = std::numeric_limits<double>::infinity();
    double prev_x = -10.0;
    double prev_f = eq.residual(prev_x);
    for (int i = 1; i <= kGrid; ++i) {
        const double x = -10.0 + 20.0 * static_cast<double>(i) / kGrid;
        const double fx = eq.residual(x);
        if (std::isfinite(prev_f) && std::isfinite(fx) && (prev_f == 0.0 || prev_f * fx < 0.0)) {
            const double distance = std::abs(0.5 * (prev_x + x) - 1.0);
            if (distance < best_distance) {
                best_distance = distance;
                bracket = {prev_x, x};
            }
        }
        prev_x = x;
        prev_f = fx;
    }
    if (bracket) {
        double lo = bracket->first;
        double hi = bracket->second;
        double f_lo = eq.residual(lo);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double f_mid = eq.residual(mid);
            ++iterations;
            ++stats.newton_iters;
            if (converged(mid, f_mid) || (hi - lo) <= 4.0 * detail::kEps * (1.0 + std::abs(mid))) {
                return {mid, f_mid, iterations};
            }
            if ((f_lo < 0.0) == (f_mid < 0.0)) {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
    }

    // No real root in [-10, 10]: the quadratic part of F has a positive minimum.
    // Take the eta of least |F| if that residual is still at truncation level.
    {
        double best_x = 1.0;
        double best_f = std::abs(eq.residual(1.0));
        for (int i = 0; i <= kGrid; ++i) {
            const double x = -10.0 + 20.0 * static_cast<double>(i) / kGrid;
            const double fx = std::abs(eq.residual(x));
            if (fx < best_f) {
                best_f = fx;
                best_x = x;
            }
        }
        // Golden-section refinement of |F| around the best grid point.
        const double width = 20.0 / kGrid;
        double lo = best_x - width;
        double hi = best_x + width;
        const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = hi - inv_phi * (hi - lo);
        double x2 = lo + inv_phi * (hi - lo);
        double f1 = std::abs(eq.residual(x1));
        double f2 = std::abs(eq.residual(x2));
        for (int it = 0; it < 120 && (hi - lo) > 1e-14; ++it) {
            ++iterations;
            ++stats.newton_iters;
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = std::abs(eq.residual(x1));
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = std::abs(eq.residual(x2));
            }
        }
        const double eta_min = (f1 < f2) ? x1 : x2;
        const double f_min = eq.residual(eta_min);
        if (std::abs(f_min) <= controls.multiplier_fallback_tol * (1.0 + std::abs(eq.v_base))) {
            ++stats.multiplier_fallbacks;
            stats.max_multiplier_residual = std::max(stats.max_multiplier_residual, std::abs(f_min));
            return {eta_min, f_min, iterations};
        }
    }

    std::ostringstream msg;
    msg.precision(17);
    msg << "multiplier equation has no acceptable root after Newton, damped Newton, bisection "
        << "and least-residual search; "
        << "Newton iterates [eta, F]:" << trace.str();
    throw StepFailure(msg.str());
}

// ---------------------------------------------------------------------------
// Hamiltonian cores: one step of size cache.h for z' = structure * grad H(z).

struct SavCoreResult {
    Vector z;
    double r = 0.0;
};

struct LmCoreResult {
    Vector z;
    double v_store = 0.0;
};

namespace detail {

// g = grad V(zhat) / sqrt(V(zhat) + C).
inline Vector sav_direction(const SemidiscreteSystem& sys, const Vector& zhat) {
    return sys.grad_V(zhat) / sav_variable(sys, zhat);
}

inline void require_denominator(double denom, const char* who) {
    if (!(std::abs(denom) >= 1e-14)) {
        throw StepFailure(std::string(who) + ": scalar denominator vanished");
    }
}

}  // namespace detail

/// Exponential SAV step: explicit apart from one scalar division.
inline SavCoreResult eisav_core(const SemidiscreteSystem& sys, const PropagatorCache& c, const Vector& z,
                                double r) {
    const Vector zhat = predictor_exponential(sys, z, c);
    const Vector g = detail::sav_direction(sys, zhat);
    const Vector u = c.h * (c.Phi1_S * g);  // h phi_1(A) S g
    const double gz = g.dot(z);
    const Vector b = c.E * z + r * u - 0.25 * gz * u;
    const double denom = 1.0 - 0.25 * g.dot(u);
    detail::require_denominator(denom, "eisav");
    const double gz_next = g.dot(b) / denom;
    SavCoreResult out;
    out.z = b + 0.25 * gz_next * u;
    out.r = r + 0.5 * (gz_next - gz);
    return out;
}

/// Crank-Nicolson SAV step; two solves against the cached factorization.
inline SavCoreResult sav_cn_core(const SemidiscreteSystem& sys, const PropagatorCache& c, const Vector& z,
                                 double r, SolverStats& stats) {
    const Vector zhat = predictor_midpoint_linear(sys, z, c);
    const Vector g = detail::sav_direction(sys, zhat);
    const Vector sg = c.structure * g;
    const double gz = g.dot(z);
    const Vector w = c.cn_lu.solve(sg);
    const Vector b = c.cn_lu.solve(c.cn_rhs * z + c.h * (r - 0.25 * gz) * sg);
    stats.linear_solves += 3;
    const double denom = 1.0 - 0.25 * c.h * g.dot(w);
    detail::require_denominator(denom, "sav_cn");
    const double gz_next = g.dot(b) / denom;
    SavCoreResult out;
    out.z = b + 0.25 * c.h * gz_next * w;
    out.r = r + 0.5 * (gz_next - gz);
    return out;
}

namespace detail {

inline LmCoreResult finish_lm(const SemidiscreteSystem& sys, MultiplierEquation eq,
                              const SolverControls& controls, SolverStats& stats) {
    const MultiplierSolution sol = solve_multiplier(eq, controls, stats);
    stats.max_eta_deviation = std::max(stats.max_eta_deviation, std::abs(sol.eta - 1.0));
    LmCoreResult out;
    out.z = eq.state(sol.eta);
    out.v_store = eq.v_base + sol.eta * eq.g.dot(out.z - eq.base);
    (void)sys;
    return out;
}

}  // namespace detail

/// Exponential Lagrange-multiplier step: z+ = e^A z + eta h phi_1(A) S grad V(zhat).
inline LmCoreResult eilm_core(const SemidiscreteSystem& sys, const PropagatorCache& c, const Vector& z,
                              const SolverControls& controls, SolverStats& stats) {
    const Vector zhat = predictor_exponential(sys, z, c);
    MultiplierEquation eq;
    eq.sys = &sys;
    eq.g = sys.grad_V(zhat);
    eq.p = c.E * z;
    eq.q = c.h * (c.Phi1_S * eq.g);
    eq.base = z;
    eq.v_base = sys.V(z);
    return detail::finish_lm(sys, std::move(eq), controls, stats);
}

/// Crank-Nicolson Lagrange-multiplier step.
inline LmCoreResult lm_cn_core(const SemidiscreteSystem& sys, const PropagatorCache& c, const Vector& z,
                               const SolverControls& controls, SolverStats& stats) {
    const Vector zhat = predictor_midpoint_linear(sys, z, c);
    MultiplierEquation eq;
    eq.sys = &sys;
    eq.g = sys.grad_V(zhat);
    eq.p = c.cn_lu.solve(c.cn_rhs * z);
    eq.q = c.h * c.cn_lu.solve(c.structure * eq.g);
    stats.linear_solves += 3;
    eq.base = z;
    eq.v_base = sys.V(z);
    return detail::finish_lm(sys, std::move(eq), controls, stats);
}

/// Averaged vector field step: z+ = z + h S dgrad(z, z+).
inline Vector avf_core(const SemidiscreteSystem& sys, const PropagatorCache& c, const Vector& z,
                       const SolverControls& controls, SolverStats& stats) {
    return solve_fixed_point(
        [&](const Vector& x) -> Vector { return z + c.h * (c.structure * avf_discrete_gradient(sys, z, x)); },
        z, controls, stats, "avf");
}

/// Exponential AVF step: z+ = e^A z + h phi_1(A) S int_0^1 grad V((1-xi) z + xi z+) dxi.
inline Vector eavf_core(const SemidiscreteSystem& sys, const PropagatorCache& c, const Vector& z,
                        const SolverControls& controls, SolverStats& stats) {
    const Vector linear = c.E * z;
    return solve_fixed_point(
        [&](const Vector& x) -> Vector {
            return linear + c.h * (c.Phi1_S * averaged_potential_gradient(sys, z, x));
        },
        linear, controls, stats, "eavf");
}

// ---------------------------------------------------------------------------
// Steppers

namespace detail {

inline void require_aux(const SchemeState& s, AuxKind kind, const char* who) {
    const bool ok = (kind == AuxKind::sav && s.is_sav()) || (kind == AuxKind::lm && s.is_lm()) ||
                    (kind == AuxKind::none);
    if (!ok) throw InvalidArgument(std::string(who) + ": state carries the wrong auxiliary variable");
}

inline SolverStats& sink(SolverStats* stats, SolverStats& local) { return stats ? *stats : local; }

}  // namespace detail

inline SchemeState step_sav_cn(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                               const PropagatorCache& c, const SolverControls& /*controls*/,
                               SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::absorbed, "sav_cn");
    detail::require_aux(s, AuxKind::sav, "sav_cn");
    SolverStats local;
    auto res = sav_cn_core(sys, c, s.z, s.r(), detail::sink(stats, local));
    return {s.t + h, std::move(res.z), SavAux{res.r}};
}

inline SchemeState step_lm_cn(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                              const PropagatorCache& c, const SolverControls& controls,
                              SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::absorbed, "lm_cn");
    detail::require_aux(s, AuxKind::lm, "lm_cn");
    SolverStats local;
    auto res = lm_cn_core(sys, c, s.z, controls, detail::sink(stats, local));
    return {s.t + h, std::move(res.z), LmAux{res.v_store}};
}

inline SchemeState step_avf(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                            const PropagatorCache& c, const SolverControls& controls,
                            SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::absorbed, "avf");
    SolverStats local;
    return {s.t + h, avf_core(sys, c, s.z, controls, detail::sink(stats, local)), std::monostate{}};
}

inline SchemeState step_eisav(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                              const PropagatorCache& c, const SolverControls& /*controls*/,
                              SolverStats* /*stats*/ = nullptr) {
    detail::require_cache(c, h, CoreForm::absorbed, "eisav");
    detail::require_aux(s, AuxKind::sav, "eisav");
    auto res = eisav_core(sys, c, s.z, s.r());
    return {s.t + h, std::move(res.z), SavAux{res.r}};
}

inline SchemeState step_eilm(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                             const PropagatorCache& c, const SolverControls& controls,
                             SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::absorbed, "eilm");
    detail::require_aux(s, AuxKind::lm, "eilm");
    SolverStats local;
    auto res = eilm_core(sys, c, s.z, controls, detail::sink(stats, local));
    return {s.t + h, std::move(res.z), LmAux{res.v_store}};
}

/// Strang splitting with the EISAV core; r is frozen on the damping half-steps.
inline SchemeState step_seisav(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                               const PropagatorCache& c, const SolverControls& /*controls*/,
                               SolverStats* /*stats*/ = nullptr) {
    detail::require_cache(c, h, CoreForm::split, "seisav");
    detail::require_aux(s, AuxKind::sav, "seisav");
    const Vector z_minus = detail::damp_left(sys, c, s.t, s.z);
    auto core = eisav_core(sys, c, z_minus, s.r());
    return {s.t + h, detail::damp_right(sys, c, s.t, core.z), SavAux{core.r}};
}

/// Strang splitting with the EILM core; the stored potential is frozen on the damping half-steps.
inline SchemeState step_seilm(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                              const PropagatorCache& c, const SolverControls& controls,
                              SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::split, "seilm");
    detail::require_aux(s, AuxKind::lm, "seilm");
    SolverStats local;
    const Vector z_minus = detail::damp_left(sys, c, s.t, s.z);
    auto core = eilm_core(sys, c, z_minus, controls, detail::sink(stats, local));
    return {s.t + h, detail::damp_right(sys, c, s.t, core.z), LmAux{core.v_store}};
}

inline SchemeState step_ssav(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                             const PropagatorCache& c, const SolverControls& /*controls*/,
                             SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::split, "ssav");
    detail::require_aux(s, AuxKind::sav, "ssav");
    SolverStats local;
    const Vector z_minus = detail::damp_left(sys, c, s.t, s.z);
    auto core = sav_cn_core(sys, c, z_minus, s.r(), detail::sink(stats, local));
    return {s.t + h, detail::damp_right(sys, c, s.t, core.z), SavAux{core.r}};
}

inline SchemeState step_slm(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                            const PropagatorCache& c, const SolverControls& controls,
                            SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::split, "slm");
    detail::require_aux(s, AuxKind::lm, "slm");
    SolverStats local;
    const Vector z_minus = detail::damp_left(sys, c, s.t, s.z);
    auto core = lm_cn_core(sys, c, z_minus, controls, detail::sink(stats, local));
    return {s.t + h, detail::damp_right(sys, c, s.t, core.z), LmAux{core.v_store}};
}

inline SchemeState step_savf(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                             const PropagatorCache& c, const SolverControls& controls,
                             SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::split, "savf");
    SolverStats local;
    const Vector z_minus = detail::damp_left(sys, c, s.t, s.z);
    const Vector z_plus = avf_core(sys, c, z_minus, controls, detail::sink(stats, local));
    return {s.t + h, detail::damp_right(sys, c, s.t, z_plus), std::monostate{}};
}

inline SchemeState step_seavf(const SemidiscreteSystem& sys, const SchemeState& s, double h,
                              const PropagatorCache& c, const SolverControls& controls,
                              SolverStats* stats = nullptr) {
    detail::require_cache(c, h, CoreForm::split, "seavf");
    SolverStats local;
    const Vector z_minus = detail::damp_left(sys, c, s.t, s.z);
    const Vector z_plus = eavf_core(sys, c, z_minus, controls, detail::sink(stats, local));
    return {s.t + h, detail::damp_right(sys, c, s.t, z_plus), std::monostate{}};
}

inline SchemeState step(MethodId m, const SemidiscreteSystem& sys, const SchemeState& s, double h,
                        const PropagatorCache& c, const SolverControls& controls,
                        SolverStats* stats = nullptr) {
    switch (m) {
        case MethodId::avf: return step_avf(sys, s, h, c, controls, stats);
        case MethodId::sav_cn: return step_sav_cn(sys, s, h, c, controls, stats);
        case MethodId::lm_cn: return step_lm_cn(sys, s, h, c, controls, stats);
        case MethodId::eisav: return step_eisav(sys, s, h, c, controls, stats);
        case MethodId::eilm: return step_eilm(sys, s, h, c, controls, stats);
        case MethodId::ssav: return step_ssav(sys, s, h, c, controls, stats);
        case MethodId::slm: return step_slm(sys, s, h, c, controls, stats);
        case MethodId::savf: return step_savf(sys, s, h, c, controls, stats);
        case MethodId::seavf: return step_seavf(sys, s, h, c, controls, stats);
        case MethodId::seisav: return step_seisav(sys, s, h, c, controls, stats);
        case MethodId::seilm: return step_seilm(sys, s, h, c, controls, stats);
    }
    throw InvalidArgument("step: unknown method");
}

/// Initial state with the consistently initialized auxiliary variable.
inline SchemeState initial_state(MethodId m, const SemidiscreteSystem& sys, const Vector& z0) {
    switch (aux_kind(m)) {
        case AuxKind::sav: return make_sav_state(sys, z0);
        case AuxKind::lm: return make_lm_state(sys, z0);
        case AuxKind::none: break;
    }
    return make_plain_state(z0);
}

// ---------------------------------------------------------------------------
// Driver

struct TrajectoryRecord {
    std::int64_t step = 0;
    double t = 0.0;
    Vector z;
    double H = 0.0;
    std::optional<double> aux_energy;  ///< H~ (SAV family) or the stored potential (LM family)
};

struct Trajectory {
    MethodId method = MethodId::seavf;
    double h = 0.0;
    std::vector<TrajectoryRecord> records;
    double wall_time_seconds = 0.0;
    SolverStats solver_stats;
};

/// The energy each method provably controls: H~ for the SAV family, H otherwise.
inline double tracked_energy(MethodId m, const TrajectoryRecord& rec) {
    if (aux_kind(m) == AuxKind::sav && rec.aux_energy) return *rec.aux_energy;
    return rec.H;
}

/// Number of steps N with N h = T; rejects T that is not a multiple of h.
inline std::int64_t step_count(double T, double h) {
    if (!(h > 0.0) || !(T >= 0.0) || !std::isfinite(T)) {
        throw InvalidArgument("step_count: need h > 0 and finite T >= 0");
    }
    const double ratio = T / h;
    const double n = std::round(ratio);
    if (std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "T = " << T << " is not an integer multiple of h = " << h;
        throw InvalidArgument(msg.str());
    }
    return static_cast<std::int64_t>(n);
}

inline TrajectoryRecord make_record(MethodId m, const SemidiscreteSystem& sys, const SchemeState& s,
                                    std::int64_t n) {
    TrajectoryRecord rec;
    rec.step = n;
    rec.t = s.t;
    rec.z = s.z;
    rec.H = energy(sys, s.z);
    switch (aux_kind(m)) {
        case AuxKind::sav: rec.aux_energy = modified_energy(sys, s); break;
        case AuxKind::lm: rec.aux_energy = s.v_store(); break;
        case AuxKind::none: break;
    }
    return rec;
}

struct IntegrateOptions {
    std::int64_t record_every = 1;  ///< keep every k-th state (the final state is always kept)
};

/// Applies N = T/h steps of the method from z0.
inline Trajectory integrate(const SemidiscreteSystem& sys, MethodId m, const Vector& z0, double h, double T,
                            const SolverControls& controls, IntegrateOptions options = {}) {
    controls.validate();
    detail::require_dim(sys, z0, "integrate");
    if (options.record_every < 1) throw InvalidArgument("integrate: record_every must be >= 1");
    const std::int64_t n_steps = step_count(T, h);

    Trajectory traj;
    traj.method = m;
    traj.h = h;
    traj.records.reserve(static_cast<std::size_t>(n_steps / options.record_every + 2));

    const auto start = std::chrono::steady_clock::now();
    const PropagatorCache cache = build_cache(sys, h, m);
    SchemeState state = initial_state(m, sys, z0);
    traj.records.push_back(make_record(m, sys, state, 0));
    for (std::int64_t n = 1; n <= n_steps; ++n) {
        try {
            state = step(m, sys, state, h, cache, controls, &traj.solver_stats);
        } catch (const StepFailure& e) {
            std::ostringstream msg;
            msg << to_string(m) << " failed at step " << n << " (t = " << state.t << "): " << e.what();
            throw StepFailure(msg.str());
        }
        state.t = static_cast<double>(n) * h;
        if (!state.z.allFinite()) {
            std::ostringstream msg;
            msg << to_string(m) << " produced a non-finite state at step " << n;
            throw StepFailure(msg.str());
        }
        if (n % options.record_every == 0 || n == n_steps) {
            traj.records.push_back(make_record(m, sys, state, n));
        }
    }
    traj.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return traj;
}

}  // namespace hamsplit
