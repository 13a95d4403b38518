#pragma once

// Problem description for z' = S grad H(z) - D(t) z with
// H(z) = 1/2 z^T M z + V(z), plus energies, discrete gradients and the
// dissipativity (ECLD) verifier.

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>

#include "hamsplit/errors.hpp"
#include "hamsplit/matfun.hpp"

namespace hamsplit {

using PotentialFn = std::function<double(const Vector&)>;
using PotentialGradientFn = std::function<Vector(const Vector&)>;

struct SemidiscreteSystem {
    std::string name;
    Matrix S;  ///< structure matrix, skew or with negative semidefinite symmetric part
    Matrix M;  ///< symmetric positive semidefinite quadratic energy
    PotentialFn potential;
    PotentialGradientFn potential_gradient;
    DampingDescriptor damping;
    double sav_shift = 10.0;  ///< C in r = sqrt(V + C)
    /// S_c with S_c grad H = S grad H - D z, when the damping can be absorbed.
    std::optional<Matrix> combined_S;

    [[nodiscard]] Index dim() const { return M.rows(); }

    [[nodiscard]] double V(const Vector& z) const { return potential ? potential(z) : 0.0; }

    [[nodiscard]] Vector grad_V(const Vector& z) const {
        return potential_gradient ? potential_gradient(z) : Vector::Zero(z.size());
    }

    [[nodiscard]] Vector grad_H(const Vector& z) const { return M * z + grad_V(z); }

    /// S grad H(z) - D(t) z.
    [[nodiscard]] Vector rhs(const Vector& z, double t = 0.0) const {
        return S * grad_H(z) - damping.at(t) * z;
    }

    /// Checks shapes and the symmetry / semidefiniteness of M.
    void validate() const {
        const Index d = dim();
        if (d < 1 || M.cols() != d || S.rows() != d || S.cols() != d || damping.dim() != d) {
            throw InvalidArgument("SemidiscreteSystem '" + name + "': inconsistent dimensions");
        }
        if (combined_S && (combined_S->rows() != d || combined_S->cols() != d)) {
            throw InvalidArgument("SemidiscreteSystem '" + name + "': combined_S has wrong shape");
        }
        if (!M.allFinite() || !S.allFinite()) {
            throw InvalidArgument("SemidiscreteSystem '" + name + "': non-finite S or M");
        }
        const double m_norm = M.norm();
        if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-14 * m_norm) {
            throw InvalidArgument("SemidiscreteSystem '" + name + "': M is not symmetric");
        }
        const PsdVerdict v = check_psd(M, 0.0);
        if (v.min_eigenvalue < -1e-12 * m_norm) {
            throw InvalidArgument("SemidiscreteSystem '" + name + "': M is not positive semidefinite");
        }
        if (!(sav_shift > 0.0)) {
            throw InvalidArgument("SemidiscreteSystem '" + name + "': SAV shift C must be positive");
        }
    }
};

namespace detail {

inline void require_dim(const SemidiscreteSystem& sys, const Vector& z, const char* what) {
    if (z.size() != sys.dim()) {
        throw InvalidArgument(std::string(what) + ": state has length " + std::to_string(z.size()) +
                              ", system dimension is " + std::to_string(sys.dim()));
    }
}

// Gauss-Legendre rules mapped to [0, 1].
struct GaussRule3 {
    static constexpr std::array<double, 3> nodes = {0.5 - 0.3872983346207416885, 0.5,
                                                    0.5 + 0.3872983346207416885};
    static constexpr std::array<double, 3> weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
};

struct GaussRule5 {
    static constexpr std::array<double, 5> nodes = {
        0.5 - 0.4530899229693319964, 0.5 - 0.2692346550528415455, 0.5,
        0.5 + 0.2692346550528415455, 0.5 + 0.4530899229693319964};
    static constexpr std::array<double, 5> weights = {
        0.1184634425280945438, 0.2393143352496832340, 0.2844444444444444444,
        0.2393143352496832340, 0.1184634425280945438};
};

}  // namespace detail

/// Auxiliary scalar carried by SAV-type schemes: r ~ sqrt(V(z) + C).
struct SavAux {
    double r = 0.0;
};

/// Auxiliary scalar carried by Lagrange-multiplier schemes: the stored potential.
struct LmAux {
    double v_store = 0.0;
};

struct SchemeState {
    double t = 0.0;
    Vector z;
    std::variant<std::monostate, SavAux, LmAux> aux;

    [[nodiscard]] bool is_sav() const { return std::holds_alternative<SavAux>(aux); }
    [[nodiscard]] bool is_lm() const { return std::holds_alternative<LmAux>(aux); }
    [[nodiscard]] double r() const { return std::get<SavAux>(aux).r; }
    [[nodiscard]] double v_store() const { return std::get<LmAux>(aux).v_store; }
};

/// r = sqrt(V(z) + C); fails loudly when V(z) + C <= 0.
inline double sav_variable(const SemidiscreteSystem& sys, const Vector& z) {
    const double shifted = sys.V(z) + sys.sav_shift;
    if (!(shifted > 0.0)) {
        throw StepFailure("SAV shift too small: V(z) + C = " + std::to_string(shifted) + " <= 0");
    }
    return std::sqrt(shifted);
}

inline SchemeState make_plain_state(const Vector& z, double t = 0.0) { return {t, z, std::monostate{}}; }

inline SchemeState make_sav_state(const SemidiscreteSystem& sys, const Vector& z, double t = 0.0) {
    return {t, z, SavAux{sav_variable(sys, z)}};
}

inline SchemeState make_lm_state(const SemidiscreteSystem& sys, const Vector& z, double t = 0.0) {
    return {t, z, LmAux{sys.V(z)}};
}

/// H(z) = 1/2 z^T M z + V(z).
inline double energy(const SemidiscreteSystem& sys, const Vector& z) {
    detail::require_dim(sys, z, "energy");
    return 0.5 * z.dot(sys.M * z) + sys.V(z);
}

/// H~(z, r) = 1/2 z^T M z + r^2 - C.
inline double modified_energy(const SemidiscreteSystem& sys, const SchemeState& state) {
    if (!state.is_sav()) {
        throw InvalidArgument("modified_energy: state does not carry an SAV variable");
    }
    detail::require_dim(sys, state.z, "modified_energy");
    const double r = state.r();
    return 0.5 * state.z.dot(sys.M * state.z) + r * r - sys.sav_shift;
}

struct EnergyReport {
    double H = 0.0;
    std::optional<double> H_tilde;
};

inline EnergyReport energy_report(const SemidiscreteSystem& sys, const SchemeState& state) {
    EnergyReport out{energy(sys, state.z), std::nullopt};
    if (state.is_sav()) out.H_tilde = modified_energy(sys, state);
    return out;
}

/// int_0^1 grad V((1 - xi) a + xi b) dxi by 3-point Gauss-Legendre.
///
/// Exact for potentials of polynomial degree <= 6.
inline Vector averaged_potential_gradient(const SemidiscreteSystem& sys, const Vector& a,
                                          const Vector& b) {
    Vector out = Vector::Zero(a.size());
    if (!sys.potential_gradient) return out;
    const Vector delta = b - a;
    for (std::size_t i = 0; i < detail::GaussRule3::nodes.size(); ++i) {
        out += detail::GaussRule3::weights[i] * sys.grad_V(a + detail::GaussRule3::nodes[i] * delta);
    }
    return out;
}

/// AVF discrete gradient of H between a and b.
inline Vector avf_discrete_gradient(const SemidiscreteSystem& sys, const Vector& a, const Vector& b) {
    detail::require_dim(sys, a, "avf_discrete_gradient");
    detail::require_dim(sys, b, "avf_discrete_gradient");
    return 0.5 * (sys.M * (a + b)) + averaged_potential_gradient(sys, a, b);
}

/// Solves (I - h/2 S M) zhat = z + h/2 S grad V(z) with the given structure matrix.
inline Vector predictor_midpoint_linear(const SemidiscreteSystem& sys, const Matrix& structure,
                                        const Vector& z, double h) {
    detail::require_dim(sys, z, "predictor_midpoint_linear");
    if (!(h > 0.0)) throw InvalidArgument("predictor_midpoint_linear: h must be positive");
    const Index d = sys.dim();
    const Matrix lhs = Matrix::Identity(d, d) - 0.5 * h * structure * sys.M;
    Eigen::FullPivLU<Matrix> lu(lhs);
    if (!lu.isInvertible()) {
        throw NumericFailure("predictor_midpoint_linear: I - (h/2) S M is singular");
    }
    return lu.solve(z + 0.5 * h * (structure * sys.grad_V(z)));
}

inline Vector predictor_midpoint_linear(const SemidiscreteSystem& sys, const Vector& z, double h) {
    return predictor_midpoint_linear(sys, sys.S, z, h);
}

/// Hessian of V by central differences of grad V, step sqrt(eps) * (1 + ||z||_inf).
inline Matrix potential_hessian_fd(const SemidiscreteSystem& sys, const Vector& z) {
    const Index d = sys.dim();
    Matrix hess = Matrix::Zero(d, d);
    if (!sys.potential_gradient) return hess;
    const double step =
        std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + z.cwiseAbs().maxCoeff());
    Vector zp = z;
    Vector zm = z;
    for (Index j = 0; j < d; ++j) {
        zp[j] = z[j] + step;
        zm[j] = z[j] - step;
        hess.col(j) = (sys.grad_V(zp) - sys.grad_V(zm)) / (2.0 * step);
        zp[j] = z[j];
        zm[j] = z[j];
    }
    return sym_part(hess);
}

/// Energy metric P_H(z) = int_0^1 Hess H(s z) ds, with P_H(z) z = grad H(z).
inline Matrix energy_metric(const SemidiscreteSystem& sys, const Vector& z) {
    detail::require_dim(sys, z, "energy_metric");
    Matrix out = sys.M;
    if (!sys.potential_gradient) return out;
    for (std::size_t i = 0; i < detail::GaussRule5::nodes.size(); ++i) {
        out += detail::GaussRule5::weights[i] *
               potential_hessian_fd(sys, detail::GaussRule5::nodes[i] * z);
    }
    return out;
}

/// ECLD condition sym(P_H(z) D(t)) >= 0 at one state.
inline PsdVerdict check_ecld(const SemidiscreteSystem& sys, const Vector& z, double t, double tol) {
    return check_psd(sym_part(energy_metric(sys, z) * sys.damping.at(t)), tol);
}

}  // namespace hamsplit
