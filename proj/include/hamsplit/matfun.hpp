#pragma once

// Dense matrix functions: exponential, phi_1, exact linear-damping
// propagators and Loewner-order checks.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <variant>

#include "hamsplit/errors.hpp"

namespace hamsplit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline void require_square_finite(const Matrix& a, const char* what) {
    if (a.rows() != a.cols() || a.rows() < 1) {
        throw InvalidArgument(std::string(what) + ": matrix must be square and non-empty");
    }
    if (!a.allFinite()) {
        throw InvalidArgument(std::string(what) + ": matrix has non-finite entries");
    }
}

// Degree-13 diagonal Pade approximant of exp, coefficients b_0..b_13.
inline constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
    129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
    1323241920.0,        40840800.0,          960960.0,           16380.0,
    182.0,               1.0};

// Largest 1-norm for which the degree-13 approximant is accurate to unit roundoff.
inline constexpr double kPade13Theta = 5.371920351148152;

}  // namespace detail

/// Matrix exponential by scaling and squaring with the degree-13 Pade approximant.
inline Matrix expm(const Matrix& a) {
    detail::require_square_finite(a, "expm");
    const Index n = a.rows();
    const Matrix eye = Matrix::Identity(n, n);

    const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
    if (norm1 == 0.0) return eye;
    int squarings = 0;
    if (norm1 > detail::kPade13Theta) {
        squarings = static_cast<int>(std::ceil(std::log2(norm1 / detail::kPade13Theta)));
    }
    const Matrix x = a / std::ldexp(1.0, squarings);

    const auto& b = detail::kPade13;
    const Matrix x2 = x * x;
    const Matrix x4 = x2 * x2;
    const Matrix x6 = x4 * x2;
    const Matrix u_inner = x6 * (b[13] * x6 + b[11] * x4 + b[9] * x2) + b[7] * x6 + b[5] * x4 +
                           b[3] * x2 + b[1] * eye;
    const Matrix u = x * u_inner;
    const Matrix v =
        x6 * (b[12] * x6 + b[10] * x4 + b[8] * x2) + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * eye;

    Eigen::PartialPivLU<Matrix> lu(v - u);
    Matrix r = lu.solve(v + u);
    if (!r.allFinite()) {
        throw NumericFailure("expm: Pade denominator is singular");
    }
    for (int k = 0; k < squarings; ++k) {
        r = (r * r).eval();
    }
    return r;
}

struct ExpPhi {
    Matrix exp;
    Matrix phi1;
};

/// e^A and phi_1(A) from one exponential of the block matrix [[A, I], [0, 0]].
///
/// phi_1(A) is the upper-right block, so A is never inverted and singular A
/// is handled like any other.
inline ExpPhi expm_phi1(const Matrix& a) {
    detail::require_square_finite(a, "phi1");
    const Index n = a.rows();
    Matrix aug = Matrix::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = a;
    aug.topRightCorner(n, n).setIdentity();
    const Matrix big = expm(aug);
    return {big.topLeftCorner(n, n), big.topRightCorner(n, n)};
}

/// phi_1(A) = A^{-1}(e^A - I), continuously extended to singular A.
inline Matrix phi1(const Matrix& a) { return expm_phi1(a).phi1; }

inline Matrix sym_part(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw InvalidArgument("sym_part: matrix must be square");
    }
    return 0.5 * (a + a.transpose());
}

struct PsdVerdict {
    bool is_psd = false;
    double min_eigenvalue = 0.0;
    double tolerance_used = 0.0;
};

/// Tests sym(A) >= 0 with the relative tolerance tol * (1 + ||sym(A)||_2).
inline PsdVerdict check_psd(const Matrix& a, double tol) {
    detail::require_square_finite(a, "check_psd");
    if (!(tol >= 0.0)) {
        throw InvalidArgument("check_psd: tolerance must be non-negative");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym_part(a), Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw NumericFailure("check_psd: symmetric eigensolver did not converge");
    }
    const Vector& lambda = eig.eigenvalues();
    const double spectral_norm = lambda.cwiseAbs().maxCoeff();
    PsdVerdict verdict;
    verdict.min_eigenvalue = lambda.minCoeff();
    verdict.tolerance_used = tol * (1.0 + spectral_norm);
    verdict.is_psd = verdict.min_eigenvalue >= -verdict.tolerance_used;
    return verdict;
}

/// Largest eigenvalue of sym(A).
inline double max_sym_eigenvalue(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym_part(a), Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) {
        throw NumericFailure("max_sym_eigenvalue: symmetric eigensolver did not converge");
    }
    return eig.eigenvalues().maxCoeff();
}

/// Linear damping D(t) of the split flow z' = -D(t) z.
///
/// Either a constant matrix, or a time-dependent family. The latter only yields
/// an exact propagator when the caller supplies the closed-form integral
/// int_{t0}^{t1} D(tau) dtau; the values D(tau) are assumed to commute.
class DampingDescriptor {
  public:
    using ValueFn = std::function<Matrix(double)>;
    using IntegralFn = std::function<Matrix(double, double)>;

    DampingDescriptor() = default;

    static DampingDescriptor constant(Matrix d) {
        detail::require_square_finite(d, "DampingDescriptor");
        DampingDescriptor out;
        out.repr_ = Constant{std::move(d)};
        return out;
    }

    static DampingDescriptor zero(Index n) { return constant(Matrix::Zero(n, n)); }

    static DampingDescriptor time_dependent(Index n, ValueFn value, IntegralFn integral = {}) {
        if (!value) {
            throw InvalidArgument("DampingDescriptor: time-dependent damping needs a value function");
        }
        DampingDescriptor out;
        out.repr_ = TimeDependent{n, std::move(value), std::move(integral)};
        return out;
    }

    [[nodiscard]] bool is_constant() const { return std::holds_alternative<Constant>(repr_); }

    [[nodiscard]] bool has_integral() const {
        if (is_constant()) return true;
        return static_cast<bool>(std::get<TimeDependent>(repr_).integral);
    }

    /// True for the constant zero matrix.
    [[nodiscard]] bool is_zero() const {
        return is_constant() && std::get<Constant>(repr_).d.isZero(0.0);
    }

    [[nodiscard]] Index dim() const {
        if (is_constant()) return std::get<Constant>(repr_).d.rows();
        return std::get<TimeDependent>(repr_).n;
    }

    [[nodiscard]] Matrix at(double t) const {
        if (is_constant()) return std::get<Constant>(repr_).d;
        return std::get<TimeDependent>(repr_).value(t);
    }

    /// int_{t0}^{t1} D(tau) dtau.
    [[nodiscard]] Matrix integral(double t0, double t1) const {
        if (is_constant()) return (t1 - t0) * std::get<Constant>(repr_).d;
        const auto& td = std::get<TimeDependent>(repr_);
        if (!td.integral) {
            throw UnsupportedDescriptor(
                "damping_propagator: time-dependent damping requires a closed-form integral");
        }
        return td.integral(t0, t1);
    }

  private:
    struct Constant {
        Matrix d;
    };
    struct TimeDependent {
        Index n = 0;
        ValueFn value;
        IntegralFn integral;
    };
    std::variant<Constant, TimeDependent> repr_ = Constant{Matrix::Zero(1, 1)};
};

/// Exact evolution operator exp(-int_{t0}^{t1} D) of z' = -D(t) z.
inline Matrix damping_propagator(const DampingDescriptor& d, double t0, double t1) {
    if (!(t1 >= t0)) {
        throw InvalidArgument("damping_propagator: requires t1 >= t0");
    }
    if (d.is_zero()) {
        return Matrix::Identity(d.dim(), d.dim());
    }
    const Matrix integral = d.integral(t0, t1);
    return expm(-integral);
}

}  // namespace hamsplit
