#pragma once

// Semi-discretized benchmark PDEs: damped nonlinear Klein-Gordon, damped
// alpha-FPU (two operator splittings) and damped generalized KdV.

#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "hamsplit/errors.hpp"
#include "hamsplit/matfun.hpp"
#include "hamsplit/system.hpp"

namespace hamsplit::models {

enum class Boundary { periodic, dirichlet };

struct GridSpec {
    double L = 1.0;
    int N = 3;
    Boundary boundary = Boundary::periodic;

    [[nodiscard]] double dx() const { return L / N; }

    /// Unknowns per field: N on a periodic grid, N - 1 interior nodes otherwise.
    [[nodiscard]] int nodes() const { return boundary == Boundary::periodic ? N : N - 1; }

    void validate() const {
        if (N < 3) throw InvalidArgument("GridSpec: N must be at least 3");
        if (!(L > 0.0) || !std::isfinite(L)) throw InvalidArgument("GridSpec: L must be positive");
    }
};

struct DifferenceOps {
    Matrix D1;  ///< central first difference, skew-symmetric
    Matrix R;   ///< second difference (discrete Laplacian)
};

inline DifferenceOps difference_ops(const GridSpec& grid) {
    grid.validate();
    const int n = grid.nodes();
    const double dx = grid.dx();
    DifferenceOps ops{Matrix::Zero(n, n), Matrix::Zero(n, n)};
    const double c1 = 1.0 / (2.0 * dx);
    const double c2 = 1.0 / (dx * dx);
    for (int j = 0; j < n; ++j) {
        ops.R(j, j) = -2.0 * c2;
        if (grid.boundary == Boundary::periodic) {
            const int right = (j + 1) % n;
            const int left = (j + n - 1) % n;
            ops.D1(j, right) += c1;
            ops.D1(j, left) -= c1;
            ops.R(j, right) += c2;
            ops.R(j, left) += c2;
        } else {
            if (j + 1 < n) {
                ops.D1(j, j + 1) = c1;
                ops.R(j, j + 1) = c2;
            }
            if (j > 0) {
                ops.D1(j, j - 1) = -c1;
                ops.R(j, j - 1) = c2;
            }
        }
    }
    return ops;
}

/// A built system together with its benchmark initial state.
struct BenchmarkProblem {
    SemidiscreteSystem system;
    Vector initial;
    GridSpec grid;
};

namespace detail {

// [[0, I], [-I, lower_right]]
inline Matrix canonical_structure(int n, const Matrix& lower_right) {
    Matrix s = Matrix::Zero(2 * n, 2 * n);
    s.topRightCorner(n, n).setIdentity();
    s.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
    s.bottomRightCorner(n, n) = lower_right;
    return s;
}

inline Matrix block_diag(const Matrix& a, const Matrix& b) {
    Matrix out = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    out.topLeftCorner(a.rows(), a.cols()) = a;
    out.bottomRightCorner(b.rows(), b.cols()) = b;
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Klein-Gordon: u_tt + gamma u_t - kappa u_xx + omega^2 u + alpha u^3 = 0

struct KleinGordonParams {
    double omega = std::sqrt(0.2);
    double kappa = 0.04;
    double alpha = -1.0;
    double gamma = 0.1;
};

inline GridSpec klein_gordon_grid() { return {2.0, 20, Boundary::periodic}; }

/// z = (u_1..u_N, v_1..v_N) on x_j = j dx, j = 1..N.
inline SemidiscreteSystem build_klein_gordon(const GridSpec& grid, const KleinGordonParams& p,
                                             double sav_shift = 10.0) {
    if (grid.boundary != Boundary::periodic) throw InvalidArgument("klein_gordon: needs a periodic grid");
    const DifferenceOps ops = difference_ops(grid);
    const int n = grid.nodes();
    const Matrix eye = Matrix::Identity(n, n);

    SemidiscreteSystem sys;
    sys.name = "klein_gordon";
    sys.S = detail::canonical_structure(n, Matrix::Zero(n, n));
    sys.M = detail::block_diag(p.omega * p.omega * eye - p.kappa * ops.R, eye);
    const double alpha = p.alpha;
    sys.potential = [n, alpha](const Vector& z) {
        return 0.25 * alpha * z.head(n).array().pow(4).sum();
    };
    sys.potential_gradient = [n, alpha](const Vector& z) {
        Vector g = Vector::Zero(z.size());
        g.head(n) = alpha * z.head(n).array().cube().matrix();
        return g;
    };
    sys.damping = DampingDescriptor::constant(detail::block_diag(Matrix::Zero(n, n), p.gamma * eye));
    sys.combined_S = detail::canonical_structure(n, -p.gamma * eye);
    sys.sav_shift = sav_shift;
    sys.validate();
    return sys;
}

inline Vector klein_gordon_initial(const GridSpec& grid) {
    const int n = grid.nodes();
    Vector z(2 * n);
    const double sqrt2 = std::sqrt(2.0);
    const double sqrt5 = std::sqrt(5.0);
    for (int j = 1; j <= n; ++j) {
        const double x = j * grid.dx();
        const double sech = 1.0 / std::cosh(sqrt2 * x);
        z[j - 1] = std::tanh(sqrt2 * x) / sqrt5;
        z[n + j - 1] = -(3.0 * sqrt2) / (10.0 * sqrt5) * sech * sech;
    }
    return z;
}

inline BenchmarkProblem klein_gordon(const KleinGordonParams& p = {}, GridSpec grid = klein_gordon_grid(),
                                     double sav_shift = 10.0) {
    return {build_klein_gordon(grid, p, sav_shift), klein_gordon_initial(grid), grid};
}

// ---------------------------------------------------------------------------
// Damped alpha-FPU: u_tt - beta u_xxt - (u_x + eps u_x^{k+1}/(k+1))_x + m^2 u + gamma u_t = 0

enum class FpuFormulation {
    conservative,  ///< S skew, D = diag(0, gamma I - beta R)
    dissipative,   ///< gamma absorbed into S, D = diag(0, -beta R)
};

inline std::string_view to_string(FpuFormulation f) {
    return f == FpuFormulation::conservative ? "conservative" : "dissipative";
}

struct FpuParams {
    int k = 1;
    double eps = 0.005;
    double beta = 0.01;
    double gamma = 0.5;
    double m = 1.0;
    double ic_alpha = 0.1;  ///< soliton parameter of the initial profile
    FpuFormulation formulation = FpuFormulation::conservative;
};

inline GridSpec afpu_grid() { return {2.0, 20, Boundary::dirichlet}; }

/// z = (u_1..u_{N-1}, v_1..v_{N-1}); u_0 = u_N = 0.
inline SemidiscreteSystem build_afpu(const GridSpec& grid, const FpuParams& p, double sav_shift = 10.0) {
    if (grid.boundary != Boundary::dirichlet) throw InvalidArgument("afpu: needs a dirichlet grid");
    if (p.k < 1) throw InvalidArgument("afpu: k must be a positive integer");
    const DifferenceOps ops = difference_ops(grid);
    const int n = grid.nodes();
    const Matrix eye = Matrix::Identity(n, n);
    const Matrix zero = Matrix::Zero(n, n);
    const Matrix damping_block = p.gamma * eye - p.beta * ops.R;

    SemidiscreteSystem sys;
    sys.M = detail::block_diag(p.m * p.m * eye - ops.R, eye);

    const int k = p.k;
    const double dx = grid.dx();
    const double coeff = p.eps / (std::pow(dx, k + 2) * (k + 1) * (k + 2));
    // Differences u_{j+1} - u_j for j = 0..N-1 with zero boundary values.
    auto diffs = [n](const Vector& z) {
        Vector d(n + 1);
        d[0] = z[0];
        for (int j = 1; j < n; ++j) d[j] = z[j] - z[j - 1];
        d[n] = -z[n - 1];
        return d;
    };
    sys.potential = [diffs, coeff, k](const Vector& z) {
        const Vector d = diffs(z);
        double sum = 0.0;
        for (Index j = 0; j < d.size(); ++j) sum += std::pow(d[j], k + 2);
        return coeff * sum;
    };
    sys.potential_gradient = [diffs, coeff, k, n](const Vector& z) {
        const Vector d = diffs(z);
        Vector g = Vector::Zero(z.size());
        const double c = coeff * (k + 2);
        for (int i = 0; i < n; ++i) g[i] = c * (std::pow(d[i], k + 1) - std::pow(d[i + 1], k + 1));
        return g;
    };

    if (p.formulation == FpuFormulation::conservative) {
        sys.name = "afpu_conservative";
        sys.S = detail::canonical_structure(n, zero);
        sys.damping = DampingDescriptor::constant(detail::block_diag(zero, damping_block));
    } else {
        sys.name = "afpu_dissipative";
        sys.S = detail::canonical_structure(n, -p.gamma * eye);
        sys.damping = DampingDescriptor::constant(detail::block_diag(zero, -p.beta * ops.R));
    }
    sys.combined_S = detail::canonical_structure(n, -damping_block);
    sys.sav_shift = sav_shift;
    sys.validate();
    return sys;
}

/// Two-soliton profile evaluated at t = 0 on the interior nodes j = 1..N-1.
inline Vector afpu_initial(const GridSpec& grid, const FpuParams& p) {
    const int n = grid.nodes();
    const double a = p.ic_alpha;
    const double t = 0.0;
    auto softplus = [&](double shift, int j) {
        return std::log1p(std::exp(2.0 * a * (j - shift) + t * std::sinh(a)));
    };
    Vector z = Vector::Zero(2 * n);
    for (int j = 1; j <= n; ++j) {
        z[j - 1] = 5.0 * (softplus(97.0, j) + softplus(32.0, j) - softplus(96.0, j) - softplus(33.0, j));
    }
    return z;
}

inline BenchmarkProblem afpu(const FpuParams& p = {}, GridSpec grid = afpu_grid(), double sav_shift = 10.0) {
    return {build_afpu(grid, p, sav_shift), afpu_initial(grid, p), grid};
}

// ---------------------------------------------------------------------------
// Damped gKdV: u_t + eps u_xxx + (sigma u^{k+1})_x + mu u = 0

struct GkdvParams {
    double sigma = 0.001;
    double eps = 1.0;
    int k = 2;
    double mu = 0.5;
};

inline GridSpec gkdv_grid() { return {10.0, 20, Boundary::periodic}; }

/// S = D1, M = -eps R (singular), D = mu I. The damping cannot be absorbed.
inline SemidiscreteSystem build_gkdv(const GridSpec& grid, const GkdvParams& p, double sav_shift = 10.0) {
    if (grid.boundary != Boundary::periodic) throw InvalidArgument("gkdv: needs a periodic grid");
    if (p.k < 1) throw InvalidArgument("gkdv: k must be a positive integer");
    const DifferenceOps ops = difference_ops(grid);
    const int n = grid.nodes();

    SemidiscreteSystem sys;
    sys.name = "gkdv";
    sys.S = ops.D1;
    sys.M = -p.eps * ops.R;
    const double sigma = p.sigma;
    const int k = p.k;
    sys.potential = [sigma, k](const Vector& z) {
        double sum = 0.0;
        for (Index j = 0; j < z.size(); ++j) sum += std::pow(z[j], k + 2);
        return -sigma / (k + 2) * sum;
    };
    sys.potential_gradient = [sigma, k](const Vector& z) {
        Vector g(z.size());
        for (Index j = 0; j < z.size(); ++j) g[j] = -sigma * std::pow(z[j], k + 1);
        return g;
    };
    sys.damping = DampingDescriptor::constant(p.mu * Matrix::Identity(n, n));
    sys.sav_shift = sav_shift;
    sys.validate();
    return sys;
}

inline Vector gkdv_initial(const GridSpec& grid) {
    const int n = grid.nodes();
    Vector z(n);
    for (int j = 1; j <= n; ++j) {
        const double x = j * grid.dx() - 0.5 * grid.L;
        z[j - 1] = 0.4 * std::exp(-0.5 * x * x);
    }
    return z;
}

inline BenchmarkProblem gkdv(const GkdvParams& p = {}, GridSpec grid = gkdv_grid(), double sav_shift = 10.0) {
    return {build_gkdv(grid, p, sav_shift), gkdv_initial(grid), grid};
}

}  // namespace hamsplit::models
