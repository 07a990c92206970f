#pragma once

// Bi-level driver: refresh transport plans and cross-covariances at P_k,
// then solve the trace-ratio problem with those covariances frozen.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "balancing.hpp"
#include "covariance.hpp"
#include "data.hpp"
#include "error.hpp"
#include "projection.hpp"
#include "traceratio.hpp"

namespace wda {

enum class InitKind { Random, Pca, Lda };

inline const char* to_string(InitKind k) {
    switch (k) {
        case InitKind::Random: return "random";
        case InitKind::Pca: return "pca";
        case InitKind::Lda: return "lda";
    }
    return "?";
}

struct WdaConfig {
    double lambda = 0.01;
    Eigen::Index p = 2;
    double tol = 1e-5;
    int maxOuterIter = 200;
    double ridge = 0;
    /// Inner plans are solved well below the outer tolerance so that plan
    /// error does not show up in the objective trace.
    BalancingConfig balancing = BalancingConfig::with_tol(1e-10);
    double troptTol = 1e-10;
    int troptMaxIter = 500;
    std::uint64_t seed = 0;
    InitKind init = InitKind::Random;
    unsigned threads = 1;
    /// Re-evaluate f at the returned projection (one extra plan solve) and
    /// append it to the objective trace.
    bool evaluateFinal = true;

    void validate() const {
        if (!(lambda >= 0) || !std::isfinite(lambda)) throw ParameterError("lambda must be finite and >= 0");
        if (p < 1) throw ParameterError("p must be >= 1");
        if (!(tol > 0)) throw ParameterError("tol must be > 0");
        if (maxOuterIter < 1) throw ParameterError("maxOuterIter must be >= 1");
        if (!(ridge >= 0) || !std::isfinite(ridge)) throw ParameterError("ridge must be finite and >= 0");
        if (!(troptTol > 0)) throw ParameterError("TRopt tol must be > 0");
        if (troptMaxIter < 1) throw ParameterError("TRopt maxIter must be >= 1");
        balancing.validate();
    }
};

struct ConvergenceTrace {
    /// f(P_0), f(P_1), ...; with evaluateFinal the last entry is f at the
    /// returned projection.
    std::vector<double> objective;
    /// d(P_{k+1}, P_k) per outer iteration.
    std::vector<double> subspaceStep;
    /// Acc-SK iteration count per class pair, per outer iteration.
    std::vector<std::vector<int>> innerIterations;
    /// TRopt SCF steps per outer iteration.
    std::vector<int> troptIterations;
    std::vector<double> wallTime;
    /// Non-converged inner solves plus inner eigensolver warnings.
    int innerWarnings = 0;
    int troptNonConverged = 0;
    bool degenerateGap = false;

    /// Largest drop between consecutive objective values (0 if monotone).
    double max_decrease() const {
        double worst = 0;
        for (std::size_t k = 1; k < objective.size(); ++k) worst = std::max(worst, objective[k - 1] - objective[k]);
        return worst;
    }
};

struct FitResult {
    Projection P;
    ConvergenceTrace trace;
    bool converged = false;
    int iterations = 0;
    /// f at the returned projection (NaN when evaluateFinal is off).
    double objective = std::numeric_limits<double>::quiet_NaN();
};

/// f(P) = tr(P^T C_b(P) P) / tr(P^T C_w(P) P) with fresh plans at P.
inline double objective(const Projection& p, const LabeledDataset& data, const WdaConfig& cfg) {
    cfg.validate();
    const CovariancePair c = cross_covariances(p, data, cfg.lambda, cfg.balancing, cfg.ridge, nullptr, {.threads = cfg.threads});
    return trace_ratio(p, c.Cb, c.Cw);
}

/// P^T X
inline Matrix transform(const Projection& p, const Eigen::Ref<const Matrix>& x) {
    detail::require_same("transform: rows of X vs projection dimension", p.dim(), x.rows());
    return p.matrix().transpose() * x;
}

/// Trace-ratio solve on the uniform-weight scatter matrices, started from the
/// top-p eigenbasis of S_w.
inline Projection lda_fit(const LabeledDataset& data, Eigen::Index p, double ridge = 0, double tol = 1e-10,
                          int maxIter = 500) {
    data.validate();
    if (data.class_count() < 2) throw DomainError("LDA needs at least two classes (no between-class pairs)");
    if (p < 1 || p > data.dim()) throw DimensionError("LDA needs 1 <= p <= d", data.dim(), p);
    Scatter s = lda_scatter(data);
    s.Sw.diagonal().array() += ridge;
    const Projection p0 = top_eigenbasis(s.Sw, p).basis;
    TroptResult r = tropt_scf(s.Sb, s.Sw, p, p0, tol, maxIter);
    if (!r.converged) throw NumericError("LDA trace-ratio solve did not converge");
    return r.P;
}

/// Top-p eigenbasis of the pooled covariance.
inline Projection pca_fit(const LabeledDataset& data, Eigen::Index p) {
    data.validate();
    const Matrix all = data.stacked();
    const Matrix centered = all.colwise() - all.rowwise().mean();
    return top_eigenbasis(centered * centered.transpose() / static_cast<double>(all.cols()), p).basis;
}

inline Projection initial_projection(const LabeledDataset& data, const WdaConfig& cfg) {
    switch (cfg.init) {
        case InitKind::Pca: return pca_fit(data, cfg.p);
        case InitKind::Lda: return lda_fit(data, cfg.p, cfg.ridge, cfg.troptTol, cfg.troptMaxIter);
        case InitKind::Random: break;
    }
    return Projection::random(data.dim(), cfg.p, cfg.seed);
}

/// Outer loop: plans at P_k (warm-started per pair), covariances, TRopt from
/// P_k, stop when d(P_{k+1}, P_k) < tol. Non-convergence at maxOuterIter is
/// reported through the result, not thrown.
inline FitResult fit(const LabeledDataset& data, const WdaConfig& cfg, const std::optional<Projection>& p0 = std::nullopt) {
    cfg.validate();
    data.validate();
    if (data.class_count() < 2) throw DomainError("fit needs at least two classes");
    if (cfg.p > data.dim()) throw DimensionError("subspace dimension p exceeds data dimension", data.dim(), cfg.p);
    using clock = std::chrono::steady_clock;

    FitResult out;
    if (p0) {
        detail::require_same("initial projection dimension", data.dim(), p0->dim());
        detail::require_same("initial projection columns", cfg.p, p0->rank());
        out.P = *p0;
    } else {
        out.P = initial_projection(data, cfg);
    }
    WarmStarts warm;
    const CovarianceOptions opts{.threads = cfg.threads};
    auto& tr = out.trace;
    for (int k = 0; k < cfg.maxOuterIter; ++k) {
        const auto t0 = clock::now();
        const CovariancePair c = cross_covariances(out.P, data, cfg.lambda, cfg.balancing, cfg.ridge, &warm, opts);
        tr.objective.push_back(trace_ratio(out.P, c.Cb, c.Cw));
        std::vector<int> inner;
        for (const auto& pd : c.pairs) inner.push_back(pd.iterations);
        tr.innerIterations.push_back(std::move(inner));
        tr.innerWarnings += c.warning_count();

        TroptResult t = tropt_scf(c.Cb, c.Cw, cfg.p, out.P, cfg.troptTol, cfg.troptMaxIter);
        tr.troptIterations.push_back(t.iterations);
        tr.troptNonConverged += !t.converged;
        tr.degenerateGap = tr.degenerateGap || t.degenerateGap;
        const double step = subspace_distance(out.P, t.P);
        out.P = std::move(t.P);
        tr.subspaceStep.push_back(step);
        tr.wallTime.push_back(std::chrono::duration<double>(clock::now() - t0).count());
        out.iterations = k + 1;
        if (step < cfg.tol) {
            out.converged = true;
            break;
        }
    }
    if (cfg.evaluateFinal) {
        const CovariancePair c = cross_covariances(out.P, data, cfg.lambda, cfg.balancing, cfg.ridge, &warm, opts);
        out.objective = trace_ratio(out.P, c.Cb, c.Cw);
        tr.objective.push_back(out.objective);
        tr.innerWarnings += c.warning_count();
    }
    return out;
}

}  // namespace wda
