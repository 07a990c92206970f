#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "data.hpp"
#include "error.hpp"
#include "projection.hpp"
#include "wda.hpp"

namespace wda {

/// K-nearest-neighbour majority vote in Euclidean distance. Neighbours are
/// ranked by (distance, label); a vote tie goes to the label with the
/// smallest summed neighbour distance, then to the smallest label.
inline std::vector<int> knn_predict(const Eigen::Ref<const Matrix>& trainX, const std::vector<int>& trainLabels,
                                    const Eigen::Ref<const Matrix>& testX, int k) {
    const Eigen::Index n = trainX.cols();
    if (n == 0) throw DimensionError("KNN training set is empty", 1, 0);
    detail::require_same("KNN labels vs training points", n, static_cast<std::ptrdiff_t>(trainLabels.size()));
    detail::require_same("KNN test dimension vs training dimension", trainX.rows(), testX.rows());
    if (k < 1 || k > n) throw ParameterError("KNN needs 1 <= K <= n_train, got K = " + std::to_string(k));

    const int maxLabel = *std::max_element(trainLabels.begin(), trainLabels.end());
    if (*std::min_element(trainLabels.begin(), trainLabels.end()) < 0) throw ParameterError("KNN labels must be >= 0");
    std::vector<int> out(static_cast<std::size_t>(testX.cols()));
    std::vector<std::pair<double, int>> ranked(static_cast<std::size_t>(n));
    std::vector<int> votes(static_cast<std::size_t>(maxLabel) + 1);
    std::vector<double> summed(votes.size());
    for (Eigen::Index t = 0; t < testX.cols(); ++t) {
        for (Eigen::Index i = 0; i < n; ++i)
            ranked[static_cast<std::size_t>(i)] = {(trainX.col(i) - testX.col(t)).norm(), trainLabels[static_cast<std::size_t>(i)]};
        std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end());
        std::fill(votes.begin(), votes.end(), 0);
        std::fill(summed.begin(), summed.end(), 0.0);
        for (int j = 0; j < k; ++j) {
            ++votes[static_cast<std::size_t>(ranked[static_cast<std::size_t>(j)].second)];
            summed[static_cast<std::size_t>(ranked[static_cast<std::size_t>(j)].second)] += ranked[static_cast<std::size_t>(j)].first;
        }
        int best = -1;
        for (int c = 0; c <= maxLabel; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            if (votes[cu] == 0) continue;
            if (best < 0) {
                best = c;
                continue;
            }
            const auto bu = static_cast<std::size_t>(best);
            if (votes[cu] > votes[bu] || (votes[cu] == votes[bu] && summed[cu] < summed[bu])) best = c;
        }
        out[static_cast<std::size_t>(t)] = best;
    }
    return out;
}

inline double error_rate(const std::vector<int>& predicted, const std::vector<int>& truth) {
    detail::require_same("predicted vs true labels", static_cast<std::ptrdiff_t>(truth.size()),
                         static_cast<std::ptrdiff_t>(predicted.size()));
    if (truth.empty()) return 0;
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) wrong += predicted[i] != truth[i];
    return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

/// SplitMix64 finalizer; used to derive per-repeat seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

struct EvalOptions {
    int K = 10;
    int repeats = 20;
    /// Also classify with a seeded random orthonormal projection per repeat.
    bool randomBaseline = false;
    /// Skip fitting: identity projection on all d coordinates, train = test.
    bool identityDiagnostic = false;

    void validate() const {
        if (K < 1) throw ParameterError("K must be >= 1");
        if (repeats < 1) throw ParameterError("repeats must be >= 1");
    }
};

struct EvalReport {
    double error = 0;
    int K = 0;
    Eigen::Index p = 0;
    int repeats = 0;
    std::vector<double> perRepeatErrors;
    double meanWallTime = 0;
    /// Filled when the random baseline is on; same length as perRepeatErrors.
    std::vector<double> baselineErrors;
    /// Repeats whose fit threw; they are excluded from the mean.
    int failures = 0;
    std::vector<std::string> failureMessages;
    int nonConverged = 0;

    /// Repeats in which the fitted projection strictly beat the baseline.
    int wins_over_baseline() const {
        int w = 0;
        for (std::size_t r = 0; r < baselineErrors.size() && r < perRepeatErrors.size(); ++r)
            w += perRepeatErrors[r] < baselineErrors[r];
        return w;
    }
};

/// Repeated holdout: per repeat, split (seed derived from split.seed), fit on
/// the training side (seed derived from cfg.seed), classify the projected
/// test side by KNN.
inline EvalReport evaluate(const LabeledDataset& data, const WdaConfig& cfg, const SplitSpec& split, const EvalOptions& opts) {
    opts.validate();
    cfg.validate();
    split.validate();
    data.validate();
    using clock = std::chrono::steady_clock;
    EvalReport rep;
    rep.K = opts.K;
    rep.p = opts.identityDiagnostic ? data.dim() : cfg.p;
    rep.repeats = opts.repeats;
    double timeSum = 0;
    for (int r = 0; r < opts.repeats; ++r) {
        const auto ru = static_cast<std::uint64_t>(r);
        if (opts.identityDiagnostic) {
            const LabeledDataset all = standardize(data);
            const Projection id = Projection::identity_columns(data.dim(), data.dim());
            const Matrix x = transform(id, all.stacked());
            rep.perRepeatErrors.push_back(error_rate(knn_predict(x, all.label_indices(), x, opts.K), all.label_indices()));
            continue;
        }
        SplitSpec s = split;
        s.seed = mix_seed(split.seed ^ mix_seed(ru));
        auto [train, test] = wda::split(data, s);
        WdaConfig c = cfg;
        c.seed = mix_seed(cfg.seed + ru);
        try {
            const auto t0 = clock::now();
            FitResult f = fit(train, c);
            timeSum += std::chrono::duration<double>(clock::now() - t0).count();
            rep.nonConverged += !f.converged;
            const auto pred = knn_predict(transform(f.P, train.stacked()), train.label_indices(), transform(f.P, test.stacked()), opts.K);
            rep.perRepeatErrors.push_back(error_rate(pred, test.label_indices()));
        } catch (const Error& e) {
            ++rep.failures;
            rep.failureMessages.emplace_back(e.what());
            continue;
        }
        if (opts.randomBaseline) {
            const Projection q = Projection::random(data.dim(), cfg.p, mix_seed(c.seed ^ 0x5A5A5A5Aull));
            const auto pred = knn_predict(transform(q, train.stacked()), train.label_indices(), transform(q, test.stacked()), opts.K);
            rep.baselineErrors.push_back(error_rate(pred, test.label_indices()));
        }
    }
    const auto done = rep.perRepeatErrors.size();
    if (done > 0) {
        rep.error = std::accumulate(rep.perRepeatErrors.begin(), rep.perRepeatErrors.end(), 0.0) / static_cast<double>(done);
        rep.meanWallTime = timeSum / static_cast<double>(done);
    }
    return rep;
}

enum class BenchAxis { P, D, N };

inline const char* to_string(BenchAxis a) {
    switch (a) {
        case BenchAxis::P: return "p";
        case BenchAxis::D: return "d";
        case BenchAxis::N: return "n";
    }
    return "?";
}

struct BenchOptions {
    /// Values held fixed while the other axis varies.
    Eigen::Index d = 10;
    Eigen::Index p = 2;
    /// Total points split 30/40/30 across the three classes.
    int n = 100;
    std::uint64_t dataSeed = 0;
    int repeats = 3;
};

struct BenchRow {
    double value = 0;
    double meanWallTime = 0;
    /// Mean outer iterations over the repeats.
    double meanIterations = 0;
    double meanTimePerIteration = 0;
};

struct BenchReport {
    BenchAxis axis = BenchAxis::D;
    std::vector<BenchRow> rows;
    /// Least-squares slope and R^2: of log t against log value for d and n,
    /// of t against value for p.
    double slope = 0;
    double intercept = 0;
    double r2 = 0;
};

/// Least-squares line y = a + b x; returns (b, a, R^2).
inline std::tuple<double, double, double> fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    const double b = sxx > 0 ? sxy / sxx : 0;
    const double r2 = (sxx > 0 && syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;
    return {b, my - b * mx, r2};
}

/// Synthetic class sizes 30/40/30 scaled to about n points, each even.
inline std::vector<int> scaled_counts(int n) {
    auto even = [](double x) { return std::max(2, 2 * static_cast<int>(std::lround(x / 2))); };
    return {even(0.3 * n), even(0.4 * n), even(0.3 * n)};
}

/// Times fit on synthetic data for each grid value of one axis. Data
/// generation is outside the timed region.
inline BenchReport bench_scaling(BenchAxis axis, const std::vector<double>& grid, const WdaConfig& base, const BenchOptions& opts) {
    if (grid.size() < 3) throw ParameterError("benchmark grid needs at least 3 values");
    if (!std::is_sorted(grid.begin(), grid.end())) throw ParameterError("benchmark grid must be sorted ascending");
    if (opts.repeats < 1) throw ParameterError("benchmark repeats must be >= 1");
    using clock = std::chrono::steady_clock;
    BenchReport rep;
    rep.axis = axis;
    std::vector<LabeledDataset> datasets;
    std::vector<WdaConfig> configs;
    for (double g : grid) {
        if (!(g >= 1)) throw ParameterError("benchmark grid values must be >= 1");
        Eigen::Index d = opts.d;
        int n = opts.n;
        WdaConfig cfg = base;
        cfg.p = opts.p;
        const auto gi = static_cast<Eigen::Index>(std::lround(g));
        switch (axis) {
            case BenchAxis::P: cfg.p = gi; break;
            case BenchAxis::D: d = gi; break;
            case BenchAxis::N: n = static_cast<int>(gi); break;
        }
        if (cfg.p > d) throw ParameterError("benchmark p exceeds d");
        datasets.push_back(standardize(make_synthetic(d, scaled_counts(n), opts.dataSeed)));
        configs.push_back(cfg);
        rep.rows.push_back(BenchRow{g, 0, 0, 0});
    }
    // Untimed warm-up, then grid values round-robin within each repeat so
    // slow drifts in machine speed hit every grid value alike.
    (void)fit(datasets.front(), configs.front());
    for (int r = 0; r < opts.repeats; ++r) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            WdaConfig cfg = configs[i];
            cfg.seed = mix_seed(base.seed + static_cast<std::uint64_t>(r));
            const auto t0 = clock::now();
            const FitResult f = fit(datasets[i], cfg);
            const double t = std::chrono::duration<double>(clock::now() - t0).count();
            BenchRow& row = rep.rows[i];
            row.meanWallTime += t / opts.repeats;
            row.meanIterations += static_cast<double>(f.iterations) / opts.repeats;
            row.meanTimePerIteration += t / std::max(1, f.iterations) / opts.repeats;
        }
    }
    std::vector<double> x, y;
    for (const auto& row : rep.rows) {
        if (axis == BenchAxis::P) {
            x.push_back(row.value);
            y.push_back(row.meanWallTime);
        } else {
            x.push_back(std::log(row.value));
            y.push_back(std::log(row.meanWallTime));
        }
    }
    std::tie(rep.slope, rep.intercept, rep.r2) = fit_line(x, y);
    return rep;
}

}  // namespace wda
