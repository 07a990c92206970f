#pragma once

// Entropic optimal-transport plans between two point clouds with uniform
// marginals: T = D(u) K D(v), K = exp(-lambda * M), rows summing to 1/n and
// columns to 1/m. Two balancing schemes are provided: the classical
// Sinkhorn-Knopp alternation and an SCF iteration on the eigenvector-dependent
// eigenproblem J_R(v) v = mu v, where R is the Sinkhorn fixed-point map on v.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "projection.hpp"

namespace wda {

/// Kernel entries are clamped from below to this value so exp(-lambda*M)
/// underflow cannot break strict positivity.
inline constexpr double kKernelFloor = 1e-300;

struct KernelMatrix {
    Matrix entries;
    /// Regularization the kernel was built with; empty for kernels supplied
    /// directly (builtin examples, CSV input).
    std::optional<double> lambda;

    Eigen::Index rows() const noexcept { return entries.rows(); }
    Eigen::Index cols() const noexcept { return entries.cols(); }

    /// Validates a user-supplied kernel: finite, nonnegative, nonempty.
    /// Entries below kKernelFloor (including zeros) are raised to it.
    static KernelMatrix from_entries(Matrix k) {
        if (k.size() == 0) throw DimensionError("kernel must be nonempty", 1, 0);
        for (Eigen::Index j = 0; j < k.cols(); ++j) {
            for (Eigen::Index i = 0; i < k.rows(); ++i) {
                double& x = k(i, j);
                if (!std::isfinite(x) || x < 0)
                    throw DomainError("kernel entries must be finite and nonnegative");
                x = std::max(x, kKernelFloor);
            }
        }
        return KernelMatrix{std::move(k), std::nullopt};
    }
};

/// Diagonal scalings (u, v), defined up to (alpha u, v / alpha).
struct ScalingPair {
    Vector u;
    Vector v;
};

enum class EigenMethod {
    /// Restarted Lanczos on the symmetric operator similar to J_R(v).
    Lanczos,
    /// Plain power iteration on J_R(v), warm-started from the current iterate.
    Power,
};

struct BalancingConfig {
    double tol = 1e-5;
    int maxIter = 1000;
    double eigTol = 1e-7;
    int eigMaxIter = 200;
    EigenMethod eigMethod = EigenMethod::Lanczos;

    /// Config with the given tolerance and eigTol = 1e-2 * tol.
    static BalancingConfig with_tol(double tol) {
        BalancingConfig cfg;
        cfg.tol = tol;
        cfg.eigTol = 1e-2 * tol;
        return cfg;
    }

    void validate() const {
        if (!(tol > 0)) throw ParameterError("balancing tol must be > 0");
        if (maxIter < 1) throw ParameterError("balancing maxIter must be >= 1");
        if (!(eigTol > 0)) throw ParameterError("balancing eigTol must be > 0");
        if (eigMaxIter < 1) throw ParameterError("balancing eigMaxIter must be >= 1");
    }
};

/// Outcome of a balancing run. Non-convergence is reported, not thrown: the
/// best (last) iterate is returned with converged == false.
struct BalanceResult {
    ScalingPair scaling;
    int iterations = 0;
    bool converged = false;
    /// Final successive-iterate distance.
    double step = std::numeric_limits<double>::infinity();
    /// Successive-iterate distance after every iteration.
    std::vector<double> stepHistory;
    /// Inner eigensolves that stopped at eigMaxIter before reaching eigTol.
    int eigenWarnings = 0;
    /// Total applications of the Jacobian operator across all eigensolves.
    int operatorApplications = 0;
};

struct TransportPlan {
    Matrix entries;
    double rowMarginal = 0;
    double colMarginal = 0;
    /// max(max_i |row_i - 1/n|, max_j |col_j - 1/m|)
    double residual = 0;

    double total_mass() const { return entries.sum(); }
};

namespace detail {

inline void require_positive(const Vector& v, const char* what) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!(v[i] > 0) || !std::isfinite(v[i])) throw DomainError(std::string(what) + " must be strictly positive and finite");
}

inline void require_positive_kernel(const KernelMatrix& k) {
    if (k.entries.size() == 0) throw DimensionError("kernel must be nonempty", 1, 0);
    if (!((k.entries.array() > 0).all() && k.entries.allFinite()))
        throw DomainError("kernel must be strictly positive and finite");
}

struct EigenPair {
    Vector vector;
    double value = 0;
    bool converged = false;
    int applications = 0;
};

// Dominant eigenpair of a symmetric positive semidefinite operator by
// restarted Lanczos with full reorthogonalization. Converged when the Ritz
// residual ||A x - theta x|| <= tol * |theta|.
template <class Apply>
EigenPair lanczos_dominant(Apply&& apply, Vector start, double tol, int maxApplications, Eigen::Index maxBasis = 30) {
    const Eigen::Index n = start.size();
    EigenPair out;
    double nrm = start.norm();
    if (!(nrm > 0)) {
        start.setOnes();
        nrm = start.norm();
    }
    Vector x = start / nrm;
    if (n == 1) {
        Vector y = apply(x);
        out.vector = x;
        out.value = y[0];
        out.converged = true;
        out.applications = 1;
        return out;
    }
    const Eigen::Index basis = std::min(n, maxBasis);
    Matrix V(n, basis + 1);
    Vector alpha(basis), beta(basis);
    out.vector = x;
    double scale = 0;
    while (out.applications < maxApplications) {
        V.col(0) = x;
        for (Eigen::Index j = 0; j < basis && out.applications < maxApplications; ++j) {
            Vector w = apply(V.col(j));
            ++out.applications;
            alpha[j] = V.col(j).dot(w);
            for (int pass = 0; pass < 2; ++pass)
                w.noalias() -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
            beta[j] = w.norm();
            scale = std::max({scale, std::abs(alpha[j]), beta[j]});
            // Below this the new direction is roundoff, not Krylov information.
            const bool invariant = beta[j] <= 1e-13 * scale;

            const Eigen::Index k = j + 1;
            Matrix t = Matrix::Zero(k, k);
            for (Eigen::Index i = 0; i < k; ++i) {
                t(i, i) = alpha[i];
                if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Matrix> es(t);
            if (es.info() != Eigen::Success) throw NumericError("tridiagonal eigensolve failed in Lanczos");
            const Vector y = es.eigenvectors().col(k - 1);
            out.value = es.eigenvalues()[k - 1];
            const double resid = invariant ? 0.0 : std::abs(beta[j] * y[k - 1]);
            if (invariant || resid <= tol * std::abs(out.value) || j + 1 == basis ||
                out.applications >= maxApplications) {
                x = V.leftCols(k) * y;
                x /= x.norm();
                out.vector = x;
                if (resid <= tol * std::abs(out.value)) {
                    out.converged = true;
                    return out;
                }
                break;
            }
            V.col(j + 1) = w / beta[j];
        }
    }
    return out;
}

// S(v) = 1 ./ (K v)
inline Vector reciprocal_row_map(const Matrix& k, const Vector& v) {
    return (k * v).cwiseInverse();
}

// R(v) assembled from S: R = (n/m) ./ (K^T S(v))
inline Vector fixed_point_map(const Matrix& k, const Vector& s) {
    const double ratio = static_cast<double>(k.rows()) / static_cast<double>(k.cols());
    return (k.transpose() * s).cwiseInverse() * ratio;
}

inline double marginal_residual(const Matrix& t) {
    const double row = 1.0 / static_cast<double>(t.rows());
    const double col = 1.0 / static_cast<double>(t.cols());
    const double r = (t.rowwise().sum().array() - row).abs().maxCoeff();
    const double c = (t.colwise().sum().array() - col).abs().maxCoeff();
    return std::max(r, c);
}

}  // namespace detail

/// M(i, j) = ||P^T x_i - P^T y_j||^2 for columns x_i of X and y_j of Y.
inline Matrix build_cost_matrix(const Projection& p, const Eigen::Ref<const Matrix>& x,
                                const Eigen::Ref<const Matrix>& y) {
    detail::require_same("cost matrix: rows of X vs projection dimension", p.dim(), x.rows());
    detail::require_same("cost matrix: rows of Y vs projection dimension", p.dim(), y.rows());
    const Matrix px = p.matrix().transpose() * x;
    const Matrix py = p.matrix().transpose() * y;
    Matrix m(x.cols(), y.cols());
    for (Eigen::Index j = 0; j < y.cols(); ++j)
        for (Eigen::Index i = 0; i < x.cols(); ++i) m(i, j) = (px.col(i) - py.col(j)).squaredNorm();
    return m;
}

/// K = exp(-lambda * M) element-wise, floored at kKernelFloor.
inline KernelMatrix build_kernel(const Eigen::Ref<const Matrix>& m, double lambda) {
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw ParameterError("lambda must be finite and >= 0");
    if ((m.array() < 0).any()) throw DomainError("cost matrix must be nonnegative");
    KernelMatrix k;
    k.entries = (-lambda * m.array()).exp().max(kKernelFloor).matrix();
    k.lambda = lambda;
    return k;
}

/// The Sinkhorn fixed-point map on the column scaling,
/// R(v) = (1/m) 1 ./ (K^T ((1/n) 1 ./ (K v))).
inline Vector map_R(const KernelMatrix& k, const Vector& v) {
    detail::require_same("map_R: length of v vs kernel columns", k.cols(), v.size());
    detail::require_positive(v, "map_R argument");
    return detail::fixed_point_map(k.entries, detail::reciprocal_row_map(k.entries, v));
}

/// J_R(v) w = (m/n) D^2(R(v)) K^T D^2(S(v)) K w, evaluated with two
/// matrix-vector products; the m x m Jacobian is never formed.
inline Vector jacobian_apply(const KernelMatrix& k, const Vector& v, const Vector& w) {
    detail::require_same("jacobian_apply: length of v vs kernel columns", k.cols(), v.size());
    detail::require_same("jacobian_apply: length of w vs kernel columns", k.cols(), w.size());
    detail::require_positive(v, "jacobian_apply base point");
    const Vector s = detail::reciprocal_row_map(k.entries, v);
    const Vector r = detail::fixed_point_map(k.entries, s);
    const double ratio = static_cast<double>(k.cols()) / static_cast<double>(k.rows());
    const Vector inner = s.cwiseProduct(s.cwiseProduct(k.entries * w));
    return ratio * r.cwiseProduct(r.cwiseProduct(k.entries.transpose() * inner));
}

/// Classical Sinkhorn-Knopp: v <- (1/m) ./ (K^T u), then u <- (1/n) ./ (K v).
/// The step is ||v_{k+1} - v_k||_2 on the raw iterates.
inline BalanceResult sk_iterate(const KernelMatrix& k, const BalancingConfig& cfg,
                                const std::optional<Vector>& v0 = std::nullopt) {
    cfg.validate();
    detail::require_positive_kernel(k);
    const Eigen::Index n = k.rows(), m = k.cols();
    const double rn = 1.0 / static_cast<double>(n), rm = 1.0 / static_cast<double>(m);
    Vector v = v0 ? *v0 : Vector::Constant(m, rm);
    detail::require_same("sk_iterate: length of v0", m, v.size());
    detail::require_positive(v, "starting vector");
    Vector u = (k.entries * v).cwiseInverse() * rn;

    BalanceResult res;
    for (int it = 1; it <= cfg.maxIter; ++it) {
        Vector vn = (k.entries.transpose() * u).cwiseInverse() * rm;
        u = (k.entries * vn).cwiseInverse() * rn;
        res.step = (vn - v).norm();
        res.stepHistory.push_back(res.step);
        v = std::move(vn);
        res.iterations = it;
        if (res.step < cfg.tol) {
            res.converged = true;
            break;
        }
    }
    res.scaling = {std::move(u), std::move(v)};
    return res;
}

/// SCF on the NEPv J_R(v) v = mu v. Each iterate is the positive dominant
/// eigenvector of J_R(v_k), normalized to unit 1-norm; the loop stops when the
/// 2-norm distance of consecutive normalized iterates drops below cfg.tol.
/// Finishes with u = (1/n) ./ (K v).
///
/// J_R(v) = D(r) G D(r)^{-1} with G = (m/n) D(r) K^T D(s)^2 K D(r) symmetric
/// positive semidefinite (r = R(v), s = S(v)), so the Lanczos path solves for
/// the top eigenvector of G and maps it back through D(r).
inline BalanceResult acc_sk(const KernelMatrix& k, const BalancingConfig& cfg,
                            const std::optional<Vector>& v0 = std::nullopt) {
    cfg.validate();
    detail::require_positive_kernel(k);
    const Eigen::Index n = k.rows(), m = k.cols();
    const double rn = 1.0 / static_cast<double>(n);
    const double ratio = static_cast<double>(m) / static_cast<double>(n);
    const double root = std::sqrt(ratio);
    const Matrix& kk = k.entries;

    Vector v = v0 ? *v0 : Vector::Constant(m, 1.0 / static_cast<double>(m));
    detail::require_same("acc_sk: length of v0", m, v.size());
    detail::require_positive(v, "starting vector");
    v /= v.sum();

    BalanceResult res;
    for (int it = 1; it <= cfg.maxIter; ++it) {
        const Vector s = detail::reciprocal_row_map(kk, v);
        const Vector r = detail::fixed_point_map(kk, s);

        Vector next;
        bool eigOk = false;
        if (cfg.eigMethod == EigenMethod::Lanczos) {
            // G w = A^T A w with A = sqrt(m/n) D(s) K D(r); no squares of s are formed.
            auto apply = [&](const Vector& w) -> Vector {
                const Vector a = root * s.cwiseProduct(kk * r.cwiseProduct(w));
                return root * r.cwiseProduct(kk.transpose() * s.cwiseProduct(a));
            };
            detail::EigenPair ep =
                detail::lanczos_dominant(apply, Vector(v.cwiseQuotient(r)), cfg.eigTol, cfg.eigMaxIter);
            res.operatorApplications += ep.applications;
            eigOk = ep.converged;
            next = r.cwiseProduct(ep.vector);
        } else {
            next = v / v.norm();
            for (int j = 0; j < cfg.eigMaxIter; ++j) {
                Vector y = ratio * r.cwiseProduct(r.cwiseProduct(kk.transpose() * s.cwiseProduct(s.cwiseProduct(kk * next))));
                ++res.operatorApplications;
                y /= y.norm();
                const double delta = (y - next).norm();
                next = std::move(y);
                if (delta < cfg.eigTol) {
                    eigOk = true;
                    break;
                }
            }
        }
        if (!eigOk) ++res.eigenWarnings;

        // Perron vector: fix the sign, strip roundoff-level sign noise.
        if (next.sum() < 0) next = -next;
        const double floor = std::max(next.cwiseAbs().maxCoeff() * 1e-300, std::numeric_limits<double>::min());
        next = next.cwiseAbs().cwiseMax(floor);
        next /= next.sum();

        res.step = (next - v).norm();
        res.stepHistory.push_back(res.step);
        v = std::move(next);
        res.iterations = it;
        if (res.step < cfg.tol) {
            res.converged = true;
            break;
        }
    }
    Vector u = (kk * v).cwiseInverse() * rn;
    res.scaling = {std::move(u), std::move(v)};
    return res;
}

/// T = D(u) K D(v) with its marginal residual against (1/n, 1/m).
inline TransportPlan assemble_plan(const KernelMatrix& k, const ScalingPair& s) {
    detail::require_same("assemble_plan: length of u", k.rows(), s.u.size());
    detail::require_same("assemble_plan: length of v", k.cols(), s.v.size());
    detail::require_positive(s.u, "row scaling u");
    detail::require_positive(s.v, "column scaling v");
    TransportPlan t;
    t.entries = s.u.asDiagonal() * k.entries * s.v.asDiagonal();
    t.rowMarginal = 1.0 / static_cast<double>(k.rows());
    t.colMarginal = 1.0 / static_cast<double>(k.cols());
    t.residual = detail::marginal_residual(t.entries);
    return t;
}

}  // namespace wda
