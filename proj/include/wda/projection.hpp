#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "error.hpp"

namespace wda {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A d x p matrix with orthonormal columns. Every constructor path either
/// checks or enforces ||P^T P - I||_F < kOrthonormalityTol.
class Projection {
public:
    static constexpr double kOrthonormalityTol = 1e-10;

    Projection() = default;

    /// Wraps an already-orthonormal matrix; throws DomainError otherwise.
    explicit Projection(Matrix cols) : cols_(std::move(cols)) {
        if (cols_.cols() < 1 || cols_.cols() > cols_.rows())
            throw DimensionError("projection needs 1 <= p <= d columns", cols_.rows(), cols_.cols());
        if (orthonormality_error() >= kOrthonormalityTol)
            throw DomainError("projection columns are not orthonormal (||P^T P - I||_F = " +
                              std::to_string(orthonormality_error()) + ")");
    }

    /// Two passes of modified Gram-Schmidt. Column directions are kept (no
    /// sign flips), so an almost-orthonormal input changes only at roundoff.
    static Projection orthonormalized(Matrix m) {
        const Eigen::Index p = m.cols();
        if (p < 1 || p > m.rows())
            throw DimensionError("projection needs 1 <= p <= d columns", m.rows(), p);
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index j = 0; j < p; ++j) {
                for (Eigen::Index i = 0; i < j; ++i)
                    m.col(j) -= m.col(i).dot(m.col(j)) * m.col(i);
                const double nrm = m.col(j).norm();
                if (!(nrm > 1e-300)) throw NumericError("rank-deficient projection candidate");
                m.col(j) /= nrm;
            }
        }
        Projection out;
        out.cols_ = std::move(m);
        return out;
    }

    /// First p coordinate vectors of R^d.
    static Projection identity_columns(Eigen::Index d, Eigen::Index p) {
        return Projection(Matrix::Identity(d, p));
    }

    /// Q factor of a seeded Gaussian d x p matrix, with the sign of diag(R)
    /// folded in so the distribution is Haar.
    static Projection random(Eigen::Index d, Eigen::Index p, std::uint64_t seed) {
        if (p < 1 || p > d) throw DimensionError("projection needs 1 <= p <= d columns", d, p);
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        Matrix g(d, p);
        for (Eigen::Index j = 0; j < p; ++j)
            for (Eigen::Index i = 0; i < d; ++i) g(i, j) = normal(rng);
        Eigen::HouseholderQR<Matrix> qr(g);
        Matrix q = qr.householderQ() * Matrix::Identity(d, p);
        const Matrix& r = qr.matrixQR();
        for (Eigen::Index j = 0; j < p; ++j)
            if (r(j, j) < 0) q.col(j) = -q.col(j);
        return orthonormalized(std::move(q));
    }

    const Matrix& matrix() const noexcept { return cols_; }
    Eigen::Index dim() const noexcept { return cols_.rows(); }
    Eigen::Index rank() const noexcept { return cols_.cols(); }

    double orthonormality_error() const {
        return (cols_.transpose() * cols_ - Matrix::Identity(rank(), rank())).norm();
    }

private:
    Matrix cols_;
};

}  // namespace wda
