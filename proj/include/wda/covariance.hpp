#pragma once

// Between- and within-class cross-covariances weighted by transport plans:
//   C_b(P) = sum_{c < c'} sum_ij T^{cc'}_ij (x_i - y_j)(x_i - y_j)^T
//   C_w(P) = sum_c       sum_ij T^{cc}_ij  (x_i - x_j)(x_i - x_j)^T  (+ eps I)
// assembled as F F^T from the concatenated weighted-difference factors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "balancing.hpp"
#include "data.hpp"
#include "error.hpp"
#include "projection.hpp"

namespace wda {

/// Inner-solver outcome for one class pair.
struct PairDiagnostics {
    std::size_t first = 0;
    std::size_t second = 0;
    int iterations = 0;
    bool converged = false;
    double step = 0;
    int eigenWarnings = 0;
    /// Marginal residual of the assembled plan.
    double residual = 0;

    bool within() const noexcept { return first == second; }
};

struct CovariancePair {
    Matrix Cb;
    Matrix Cw;
    /// d x n_b and d x n_w weighted-difference factors; left empty when the
    /// memory budget forced block accumulation.
    Matrix factorB;
    Matrix factorW;
    double epsilon = 0;
    /// One entry per class pair, in pair order.
    std::vector<PairDiagnostics> pairs;

    bool factors_stored() const noexcept { return factorB.size() > 0 || factorW.size() > 0; }
    int warning_count() const {
        int n = 0;
        for (const auto& p : pairs) n += (!p.converged) + p.eigenWarnings;
        return n;
    }
};

struct CovarianceOptions {
    /// Largest factor (d * columns, in doubles) kept in memory at once. Above
    /// it, factors are not stored and the products are accumulated pair by
    /// pair in column blocks of at most this size.
    std::size_t memoryBudget = std::size_t{1} << 26;
    /// Worker threads for the per-pair plan solves; 0 means hardware count.
    unsigned threads = 1;
};

/// Per-pair column scalings carried between calls, indexed like
/// class_pairs().
using WarmStarts = std::vector<std::optional<Vector>>;

/// Fixed pair order: (0,0), (0,1), ..., (0,C-1), (1,1), (1,2), ...; pairs
/// with equal entries feed C_w, the others C_b.
inline std::vector<std::pair<std::size_t, std::size_t>> class_pairs(std::size_t classes) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t a = 0; a < classes; ++a)
        for (std::size_t b = a; b < classes; ++b) out.emplace_back(a, b);
    return out;
}

/// Column j * n + i is sqrt(T_ij) (x_i - y_j): j-major, i-minor.
inline Matrix weighted_difference_factor(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y,
                                         const Eigen::Ref<const Matrix>& t) {
    detail::require_same("difference factor: rows of Y vs rows of X", x.rows(), y.rows());
    detail::require_same("difference factor: plan rows", x.cols(), t.rows());
    detail::require_same("difference factor: plan columns", y.cols(), t.cols());
    if ((t.array() < 0).any() || !t.allFinite()) throw DomainError("transport plan entries must be finite and nonnegative");
    const Eigen::Index n = x.cols(), m = y.cols();
    Matrix f(x.rows(), n * m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) f.col(j * n + i) = std::sqrt(t(i, j)) * (x.col(i) - y.col(j));
    return f;
}

namespace detail {

struct PairPlan {
    TransportPlan plan;
    PairDiagnostics diag;
    Vector v;
};

inline PairPlan solve_pair(const Projection& p, const LabeledDataset& data, std::size_t a, std::size_t b, double lambda,
                           const BalancingConfig& cfg, const std::optional<Vector>& warm) {
    const Matrix& x = data.classes[a].points;
    const Matrix& y = data.classes[b].points;
    const KernelMatrix k = build_kernel(build_cost_matrix(p, x, y), lambda);
    std::optional<Vector> start;
    if (warm && warm->size() == y.cols()) start = warm;
    BalanceResult res = acc_sk(k, cfg, start);
    PairPlan out;
    out.plan = assemble_plan(k, res.scaling);
    out.diag = {a, b, res.iterations, res.converged, res.step, res.eigenWarnings, out.plan.residual};
    out.v = std::move(res.scaling.v);
    return out;
}

inline std::vector<PairPlan> solve_all_pairs(const Projection& p, const LabeledDataset& data, double lambda,
                                             const BalancingConfig& cfg, WarmStarts* warm, unsigned threads) {
    const auto pairs = class_pairs(data.class_count());
    std::vector<PairPlan> out(pairs.size());
    if (warm && warm->size() != pairs.size()) warm->assign(pairs.size(), std::nullopt);
    auto work = [&](std::size_t k) {
        std::optional<Vector> start = warm ? (*warm)[k] : std::nullopt;
        out[k] = solve_pair(p, data, pairs[k].first, pairs[k].second, lambda, cfg, start);
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, pairs.size()));
    if (threads <= 1) {
        for (std::size_t k = 0; k < pairs.size(); ++k) work(k);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < pairs.size(); k += threads) work(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    if (warm)
        for (std::size_t k = 0; k < pairs.size(); ++k) (*warm)[k] = out[k].v;
    return out;
}

inline void check_inputs(const Projection& p, const LabeledDataset& data, double epsilon) {
    data.validate();
    detail::require_same("projection dimension vs data dimension", data.dim(), p.dim());
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw ParameterError("ridge epsilon must be finite and >= 0");
}

inline void symmetrize(Matrix& c) { c = (0.5 * (c + c.transpose())).eval(); }

}  // namespace detail

/// Plans for every class pair by Acc-SK at projection P, then C_b = F_b F_b^T
/// and C_w = F_w F_w^T + epsilon I. When warm is given, each pair's solve
/// starts from the stored v and the store is updated.
inline CovariancePair cross_covariances(const Projection& p, const LabeledDataset& data, double lambda,
                                        const BalancingConfig& cfg, double epsilon, WarmStarts* warm = nullptr,
                                        const CovarianceOptions& opts = {}) {
    detail::check_inputs(p, data, epsilon);
    cfg.validate();
    const auto pairs = class_pairs(data.class_count());
    std::vector<detail::PairPlan> plans = detail::solve_all_pairs(p, data, lambda, cfg, warm, opts.threads);

    const Eigen::Index d = data.dim();
    Eigen::Index nb = 0, nw = 0;
    for (const auto& [a, b] : pairs) {
        const Eigen::Index cols = data.classes[a].points.cols() * data.classes[b].points.cols();
        (a == b ? nw : nb) += cols;
    }
    const auto budget = static_cast<Eigen::Index>(std::max<std::size_t>(opts.memoryBudget, 1));
    const bool store = d * std::max(nb, nw) <= budget;

    CovariancePair out;
    out.epsilon = epsilon;
    out.Cb = Matrix::Zero(d, d);
    out.Cw = Matrix::Zero(d, d);
    if (store) {
        out.factorB.resize(d, nb);
        out.factorW.resize(d, nw);
        Eigen::Index atB = 0, atW = 0;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto [a, b] = pairs[k];
            Matrix f = weighted_difference_factor(data.classes[a].points, data.classes[b].points, plans[k].plan.entries);
            if (a == b) {
                out.factorW.middleCols(atW, f.cols()) = f;
                atW += f.cols();
            } else {
                out.factorB.middleCols(atB, f.cols()) = f;
                atB += f.cols();
            }
        }
        if (nb > 0) out.Cb.selfadjointView<Eigen::Lower>().rankUpdate(out.factorB);
        if (nw > 0) out.Cw.selfadjointView<Eigen::Lower>().rankUpdate(out.factorW);
    } else {
        // Column blocks of each pair's factor, built on the fly.
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto [a, b] = pairs[k];
            const Matrix& x = data.classes[a].points;
            const Matrix& y = data.classes[b].points;
            const Matrix& t = plans[k].plan.entries;
            Matrix& c = a == b ? out.Cw : out.Cb;
            const Eigen::Index colsPerBlock = std::max<Eigen::Index>(1, budget / std::max<Eigen::Index>(1, d * x.cols()));
            for (Eigen::Index j0 = 0; j0 < y.cols(); j0 += colsPerBlock) {
                const Eigen::Index cnt = std::min(colsPerBlock, y.cols() - j0);
                const Matrix f = weighted_difference_factor(x, y.middleCols(j0, cnt), t.middleCols(j0, cnt));
                c.selfadjointView<Eigen::Lower>().rankUpdate(f);
            }
        }
    }
    out.Cb = Matrix(out.Cb.selfadjointView<Eigen::Lower>());
    out.Cw = Matrix(out.Cw.selfadjointView<Eigen::Lower>());
    detail::symmetrize(out.Cb);
    detail::symmetrize(out.Cw);
    out.Cw.diagonal().array() += epsilon;
    for (auto& pl : plans) out.pairs.push_back(pl.diag);
    return out;
}

/// Same contract as cross_covariances via explicit double sums of rank-one
/// updates.
inline CovariancePair cross_covariances_naive(const Projection& p, const LabeledDataset& data, double lambda,
                                              const BalancingConfig& cfg, double epsilon) {
    detail::check_inputs(p, data, epsilon);
    cfg.validate();
    const auto pairs = class_pairs(data.class_count());
    const Eigen::Index d = data.dim();
    CovariancePair out;
    out.epsilon = epsilon;
    out.Cb = Matrix::Zero(d, d);
    out.Cw = Matrix::Zero(d, d);
    Vector diff(d);
    for (const auto& [a, b] : pairs) {
        detail::PairPlan pl = detail::solve_pair(p, data, a, b, lambda, cfg, std::nullopt);
        const Matrix& x = data.classes[a].points;
        const Matrix& y = data.classes[b].points;
        Matrix& c = a == b ? out.Cw : out.Cb;
        for (Eigen::Index i = 0; i < x.cols(); ++i) {
            for (Eigen::Index j = 0; j < y.cols(); ++j) {
                diff = x.col(i) - y.col(j);
                c.noalias() += pl.plan.entries(i, j) * diff * diff.transpose();
            }
        }
        out.pairs.push_back(pl.diag);
    }
    detail::symmetrize(out.Cb);
    detail::symmetrize(out.Cw);
    out.Cw.diagonal().array() += epsilon;
    return out;
}

/// Uniform-weight scatter matrices (the lambda = 0 plans T = 1/(n m)):
///   S_b = sum_{c < c'} (1/n_c) X X^T + (1/n_c') Y Y^T - mu_c mu_c'^T - mu_c' mu_c^T
///   S_w = sum_c 2 Sigma_c,  Sigma_c the biased class covariance.
struct Scatter {
    Matrix Sb;
    Matrix Sw;
};

inline Scatter lda_scatter(const LabeledDataset& data) {
    data.validate();
    const Eigen::Index d = data.dim();
    const std::size_t nc = data.class_count();
    std::vector<Vector> mu(nc);
    std::vector<Matrix> second(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        const Matrix& x = data.classes[c].points;
        const double n = static_cast<double>(x.cols());
        mu[c] = x.rowwise().sum() / n;
        second[c] = (x * x.transpose()) / n;
    }
    Scatter s{Matrix::Zero(d, d), Matrix::Zero(d, d)};
    for (std::size_t a = 0; a < nc; ++a) {
        s.Sw += 2.0 * (second[a] - mu[a] * mu[a].transpose());
        for (std::size_t b = a + 1; b < nc; ++b)
            s.Sb += second[a] + second[b] - mu[a] * mu[b].transpose() - mu[b] * mu[a].transpose();
    }
    detail::symmetrize(s.Sb);
    detail::symmetrize(s.Sw);
    return s;
}

}  // namespace wda
