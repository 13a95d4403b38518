#pragma once

// Random problem generators and independent oracles shared by the tests.

#include <cmath>
#include <cstdint>
#include <random>

#include "hamsplit/integrators.hpp"
#include "hamsplit/matfun.hpp"
#include "hamsplit/system.hpp"

namespace testing_support {

using hamsplit::Index;
using hamsplit::Matrix;
using hamsplit::Vector;

class Gen {
  public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo = -1.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    Matrix matrix(Index r, Index c) {
        Matrix m(r, c);
        for (Index j = 0; j < c; ++j)
            for (Index i = 0; i < r; ++i) m(i, j) = uniform();
        return m;
    }
    Vector vector(Index n, double scale = 1.0) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = scale * uniform();
        return v;
    }

    /// Symmetric positive definite with eigenvalues in roughly [lo, lo + n].
    Matrix spd(Index n, double lo = 0.1) {
        const Matrix a = matrix(n, n);
        return a * a.transpose() + lo * Matrix::Identity(n, n);
    }
    /// Symmetric positive semidefinite of the given rank.
    Matrix spsd(Index n, Index rank) {
        const Matrix a = matrix(n, rank);
        return a * a.transpose();
    }
    Matrix skew(Index n) {
        const Matrix a = matrix(n, n);
        return a - a.transpose();
    }
    /// skew + negative semidefinite symmetric part.
    Matrix contractive(Index n) { return skew(n) - spsd(n, integer(1, static_cast<int>(n))); }

    /// Random matrix rescaled to Frobenius norm `norm`, optionally made singular.
    Matrix scaled(Index n, double norm, bool singular) {
        Matrix a = matrix(n, n);
        if (singular) a.col(0) = a.col(1);
        return a * (norm / a.norm());
    }

  private:
    std::mt19937_64 rng_;
};

/// e^A in long double by Taylor series on A / 2^s, then squaring.
inline Matrix taylor_expm(const Matrix& a) {
    using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const Index n = a.rows();
    LMat x = a.cast<long double>();
    int s = 0;
    long double nrm = std::sqrt((x.array() * x.array()).sum());
    while (nrm > 0.25L) {
        x /= 2.0L;
        nrm /= 2.0L;
        ++s;
    }
    LMat sum = LMat::Identity(n, n);
    LMat term = LMat::Identity(n, n);
    for (int k = 1; k <= 40; ++k) {
        term = (term * x) / static_cast<long double>(k);
        sum += term;
    }
    for (int k = 0; k < s; ++k) sum = (sum * sum).eval();
    return sum.cast<double>();
}

/// phi_1(A) = sum_k A^k / (k+1)! in long double, for moderate ||A||.
inline Matrix taylor_phi1(const Matrix& a) {
    using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const Index n = a.rows();
    const LMat x = a.cast<long double>();
    LMat sum = LMat::Zero(n, n);
    LMat term = LMat::Identity(n, n);  // A^k / (k+1)!
    for (int k = 0; k < 80; ++k) {
        if (k > 0) term = (term * x) / static_cast<long double>(k + 1);
        sum += term;
    }
    return sum.cast<double>();
}

/// Small polynomial test system z' = S grad H - D z with V = c4/4 sum z^4 + c3/3 sum z^3.
inline hamsplit::SemidiscreteSystem poly_system(const Matrix& S, const Matrix& M, const Matrix& D, double c4,
                                                double c3 = 0.0) {
    hamsplit::SemidiscreteSystem sys;
    sys.name = "poly";
    sys.S = S;
    sys.M = M;
    sys.potential = [c4, c3](const Vector& z) {
        return c4 / 4.0 * z.array().pow(4).sum() + c3 / 3.0 * z.array().pow(3).sum();
    };
    sys.potential_gradient = [c4, c3](const Vector& z) -> Vector {
        return (c4 * z.array().pow(3) + c3 * z.array().square()).matrix();
    };
    sys.damping = hamsplit::DampingDescriptor::constant(D);
    sys.sav_shift = 10.0;
    return sys;
}

/// Classical RK4 on z' = rhs(z, t).
inline Vector rk4(const hamsplit::SemidiscreteSystem& sys, Vector z, double h, std::int64_t steps) {
    double t = 0.0;
    for (std::int64_t n = 0; n < steps; ++n) {
        const Vector k1 = sys.rhs(z, t);
        const Vector k2 = sys.rhs(z + 0.5 * h * k1, t + 0.5 * h);
        const Vector k3 = sys.rhs(z + 0.5 * h * k2, t + 0.5 * h);
        const Vector k4 = sys.rhs(z + h * k3, t + h);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    return z;
}

/// One EISAV step for the state (z, r) by a direct (d+1)-dimensional solve of
///   z+ = e^A z + h phi1(A) S g (r + r+)/2,   r+ = r + g.(z+ - z)/2,   A = h S M,
/// with g taken at the exponential half-step predictor. Exponentials come from the series oracles.
struct DenseSavStep {
    Vector z;
    double r;
};

inline DenseSavStep eisav_dense_step(const hamsplit::SemidiscreteSystem& sys, const Matrix& S, const Vector& z,
                                     double r, double h) {
    const Index d = z.size();
    const Matrix A = h * S * sys.M;
    const Matrix E = taylor_expm(A);
    const Matrix Phi = taylor_phi1(A);
    const Vector zhat = taylor_expm(0.5 * A) * z + 0.5 * h * taylor_phi1(0.5 * A) * S * sys.grad_V(z);
    const Vector g = sys.grad_V(zhat) / std::sqrt(sys.V(zhat) + sys.sav_shift);
    const Vector u = Phi * S * g;

    Matrix K = Matrix::Identity(d + 1, d + 1);
    K.topRightCorner(d, 1) = -0.5 * h * u;
    K.bottomLeftCorner(1, d) = -0.5 * g.transpose();
    Vector rhs(d + 1);
    rhs.head(d) = E * z + 0.5 * h * u * r;
    rhs[d] = r - 0.5 * g.dot(z);
    const Vector x = K.fullPivLu().solve(rhs);
    return {x.head(d), x[d]};
}

inline double min_sym_eig(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double max_sym_eig(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

}  // namespace testing_support
