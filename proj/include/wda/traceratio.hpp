#pragma once

// Trace-ratio optimization: maximize q(P) = tr(P^T A P) / tr(P^T B P) over
// column-orthonormal P, by SCF on H(P) = A - q(P) B.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "projection.hpp"

namespace wda {

namespace detail {

inline void require_square(const char* what, const Eigen::Ref<const Matrix>& m, Eigen::Index d) {
    if (m.rows() != m.cols()) throw DimensionError(std::string(what) + " must be square", m.rows(), m.cols());
    require_same(what, d, m.rows());
}

}  // namespace detail

/// tr(P^T A P) / tr(P^T B P). DomainError when the denominator is not positive.
inline double trace_ratio(const Projection& p, const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
    detail::require_square("trace ratio numerator", a, p.dim());
    detail::require_square("trace ratio denominator", b, p.dim());
    const Matrix& x = p.matrix();
    const double num = (x.transpose() * a * x).trace();
    const double den = (x.transpose() * b * x).trace();
    if (!(den > 0)) {
        std::ostringstream msg;
        msg << "trace ratio denominator tr(P^T B P) = " << den << " is not positive";
        throw DomainError(msg.str());
    }
    return num / den;
}

struct Eigenbasis {
    Projection basis;
    /// The p largest eigenvalues, descending.
    Vector values;
    /// lambda_p - lambda_{p+1}; +inf when p == d.
    double gap = 0;
    bool degenerateGap = false;
};

/// Orthonormal eigenbasis of the p algebraically largest eigenvalues of the
/// symmetric matrix H. Equal eigenvalues keep their index order, and each
/// column is signed so that its first entry of largest magnitude is positive.
inline Eigenbasis top_eigenbasis(const Eigen::Ref<const Matrix>& h, Eigen::Index p) {
    const Eigen::Index d = h.rows();
    detail::require_square("eigenproblem matrix", h, d);
    if (p < 1 || p > d) throw DimensionError("top_eigenbasis needs 1 <= p <= d", d, p);
    if (!h.allFinite()) throw NumericError("eigenproblem matrix has non-finite entries");
    const Matrix sym = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "symmetric eigensolver failed (d = " << d << ", ||H||_F = " << sym.norm()
            << ", asymmetry = " << (h - h.transpose()).norm() << ")";
        throw NumericError(msg.str());
    }
    const Vector& ev = es.eigenvalues();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return ev[i] > ev[j]; });

    Matrix cols(d, p);
    Eigenbasis out;
    out.values.resize(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        const Eigen::Index src = order[static_cast<std::size_t>(k)];
        Vector x = es.eigenvectors().col(src);
        Eigen::Index at = 0;
        for (Eigen::Index i = 1; i < d; ++i)
            if (std::abs(x[i]) > std::abs(x[at])) at = i;
        if (x[at] < 0) x = -x;
        cols.col(k) = x;
        out.values[k] = ev[src];
    }
    out.basis = Projection::orthonormalized(std::move(cols));
    if (p < d) {
        out.gap = out.values[p - 1] - ev[order[static_cast<std::size_t>(p)]];
        out.degenerateGap = out.gap <= 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    } else {
        out.gap = std::numeric_limits<double>::infinity();
    }
    return out;
}

/// Largest principal angle between span(P) and span(Q), in [0, pi/2].
/// Evaluated as atan2(||Q - P P^T Q||_2, sigma_min(P^T Q)), which keeps full
/// relative accuracy for small angles.
inline double subspace_distance(const Projection& p, const Projection& q) {
    detail::require_same("subspace distance: ambient dimension", p.dim(), q.dim());
    detail::require_same("subspace distance: subspace dimension", p.rank(), q.rank());
    const Matrix ptq = p.matrix().transpose() * q.matrix();
    const Matrix residual = q.matrix() - p.matrix() * ptq;
    Eigen::JacobiSVD<Matrix> cosines(ptq);
    const double c = cosines.singularValues().minCoeff();
    double s = 0;
    if (residual.norm() > 0) {
        Eigen::JacobiSVD<Matrix> sines(residual);
        s = sines.singularValues().maxCoeff();
    }
    return std::atan2(s, std::clamp(c, 0.0, 1.0));
}

/// ||H P - P (P^T H P)||_F
inline double nepv_residual(const Eigen::Ref<const Matrix>& h, const Projection& p) {
    const Matrix& x = p.matrix();
    const Matrix hx = h * x;
    return (hx - x * (x.transpose() * hx)).norm();
}

struct TroptResult {
    Projection P;
    double q = 0;
    int iterations = 0;
    bool converged = false;
    /// NEPv residual ||H(P)P - P(P^T H(P) P)||_F at the returned P.
    double residual = 0;
    /// q(P_0), q(P_1), ...
    std::vector<double> trace;
    /// d(P_{j+1}, P_j) per iteration.
    std::vector<double> steps;
    /// Some eigensolve met lambda_p == lambda_{p+1}; the returned basis is then
    /// one of several maximizers.
    bool degenerateGap = false;
};

/// SCF: P_{j+1} = top-p eigenbasis of A - q(P_j) B until d(P_{j+1}, P_j) < tol.
/// A decrease of q beyond 1e-12 * max(1, |q|) is an invariant violation and
/// raises NumericError.
inline TroptResult tropt_scf(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b, Eigen::Index p,
                             const Projection& p0, double tol = 1e-5, int maxIter = 500) {
    const Eigen::Index d = a.rows();
    detail::require_square("TRopt A", a, d);
    detail::require_square("TRopt B", b, d);
    detail::require_same("TRopt initial projection: dimension", d, p0.dim());
    detail::require_same("TRopt initial projection: columns", p, p0.rank());
    if (!(tol > 0)) throw ParameterError("TRopt tol must be > 0");
    if (maxIter < 1) throw ParameterError("TRopt maxIter must be >= 1");

    TroptResult out;
    out.P = p0;
    out.q = trace_ratio(out.P, a, b);
    out.trace.push_back(out.q);
    for (int it = 1; it <= maxIter; ++it) {
        const Matrix h = a - out.q * b;
        Eigenbasis eb = top_eigenbasis(h, p);
        out.degenerateGap = out.degenerateGap || eb.degenerateGap;
        const double qn = trace_ratio(eb.basis, a, b);
        if (qn < out.q - 1e-12 * std::max(1.0, std::abs(out.q))) {
            std::ostringstream msg;
            msg << "trace ratio decreased from " << out.q << " to " << qn << " at SCF step " << it;
            throw NumericError(msg.str());
        }
        const double step = subspace_distance(out.P, eb.basis);
        out.P = std::move(eb.basis);
        out.q = qn;
        out.trace.push_back(qn);
        out.steps.push_back(step);
        out.iterations = it;
        if (step < tol) {
            out.converged = true;
            break;
        }
    }
    out.residual = nepv_residual(a - out.q * b, out.P);
    return out;
}

}  // namespace wda
