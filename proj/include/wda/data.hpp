#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "projection.hpp"

namespace wda {

struct LabeledClass {
    std::string label;
    /// d x n_c, one point per column.
    Matrix points;
};

struct LabeledDataset {
    std::vector<LabeledClass> classes;
    bool standardized = false;
    Vector featureMeans;
    Vector featureStds;
    /// Features whose pooled variance was zero at standardization time; they
    /// are centered but not scaled.
    std::vector<bool> constantFeatures;

    Eigen::Index dim() const { return classes.empty() ? 0 : classes.front().points.rows(); }
    std::size_t class_count() const { return classes.size(); }

    Eigen::Index total_points() const {
        Eigen::Index n = 0;
        for (const auto& c : classes) n += c.points.cols();
        return n;
    }

    /// All points side by side, class by class.
    Matrix stacked() const {
        Matrix out(dim(), total_points());
        Eigen::Index at = 0;
        for (const auto& c : classes) {
            out.middleCols(at, c.points.cols()) = c.points;
            at += c.points.cols();
        }
        return out;
    }

    /// Class index of every column of stacked().
    std::vector<int> label_indices() const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(total_points()));
        for (std::size_t c = 0; c < classes.size(); ++c)
            out.insert(out.end(), static_cast<std::size_t>(classes[c].points.cols()), static_cast<int>(c));
        return out;
    }

    void validate() const {
        if (classes.empty()) throw DimensionError("dataset has no classes", 1, 0);
        const Eigen::Index d = dim();
        if (d < 1) throw DimensionError("dataset feature dimension", 1, d);
        for (const auto& c : classes) {
            detail::require_same("feature dimension of class", d, c.points.rows());
            if (c.points.cols() < 1) throw DimensionError("class '" + c.label + "' has no points", 1, 0);
        }
    }
};

enum class SyntheticLayout {
    /// Class centers on a circle of radius 4 at 90, 210 and 330 degrees; the
    /// two modes of each class sit one unit either side of the center,
    /// tangentially.
    Triangle,
    /// Modes (0,0)/(3,3), (0,3)/(3,0), (1.5,-1.5)/(1.5,4.5). The three class
    /// means coincide, so no linear projection separates the classes.
    Interleaved,
};

inline constexpr double kSyntheticModeStd = 0.3;

namespace detail {

inline std::vector<std::array<double, 4>> synthetic_modes(SyntheticLayout layout) {
    if (layout == SyntheticLayout::Interleaved)
        return {{0.0, 0.0, 3.0, 3.0}, {0.0, 3.0, 3.0, 0.0}, {1.5, -1.5, 1.5, 4.5}};
    std::vector<std::array<double, 4>> out;
    for (double deg : {90.0, 210.0, 330.0}) {
        const double a = deg * std::numbers::pi / 180.0;
        const double cx = 4.0 * std::cos(a), cy = 4.0 * std::sin(a);
        const double tx = -std::sin(a), ty = std::cos(a);
        out.push_back({cx - tx, cy - ty, cx + tx, cy + ty});
    }
    return out;
}

}  // namespace detail

/// Three bi-modal classes. Coordinates 1-2 come from the class's two modes
/// (first half of the columns from the first mode), isotropic std 0.3;
/// coordinates 3..d are standard normal noise. Labels are "1", "2", "3".
inline LabeledDataset make_synthetic(Eigen::Index d, const std::vector<int>& counts, std::uint64_t seed,
                                     SyntheticLayout layout = SyntheticLayout::Triangle) {
    if (d < 2) throw ParameterError("synthetic data needs d >= 2");
    if (counts.size() != 3) throw ParameterError("synthetic data has exactly three classes");
    for (int n : counts)
        if (n < 2 || n % 2 != 0) throw ParameterError("synthetic class sizes must be even and >= 2, got " + std::to_string(n));
    const auto modes = detail::synthetic_modes(layout);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    LabeledDataset out;
    for (std::size_t c = 0; c < 3; ++c) {
        const int n = counts[c];
        Matrix x(d, n);
        for (int i = 0; i < n; ++i) {
            const bool second = i >= n / 2;
            x(0, i) = modes[c][second ? 2 : 0] + kSyntheticModeStd * normal(rng);
            x(1, i) = modes[c][second ? 3 : 1] + kSyntheticModeStd * normal(rng);
            for (Eigen::Index r = 2; r < d; ++r) x(r, i) = normal(rng);
        }
        out.classes.push_back({std::to_string(c + 1), std::move(x)});
    }
    return out;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

inline bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace detail

/// Reads comma-separated numeric features plus one label column. The label
/// column is 0-based; -1 means the last column. A first row whose feature
/// cells are all non-numeric is taken as a header. Classes appear in order of
/// first occurrence; column order and row order are preserved.
inline LabeledDataset parse_csv(std::istream& in, int labelColumn = -1) {
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (lineNo == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (detail::trim(line).empty()) continue;
        rows.emplace_back(lineNo, detail::split_fields(line));
    }
    if (rows.empty()) throw ParseError("empty CSV input", 0, 0);

    const std::size_t width = rows.front().second.size();
    if (width < 2) throw ParseError("CSV needs at least one feature column and a label column", rows.front().first, 0);
    const std::size_t label = labelColumn < 0 ? width - 1 : static_cast<std::size_t>(labelColumn);
    if (label >= width) throw ParseError("label column out of range", rows.front().first, label + 1);

    std::size_t first = 0;
    {
        double tmp;
        bool anyNumeric = false;
        for (std::size_t c = 0; c < width; ++c)
            if (c != label && detail::parse_number(rows.front().second[c], tmp)) anyNumeric = true;
        if (!anyNumeric) first = 1;
    }
    if (first >= rows.size()) throw ParseError("CSV has a header but no data rows", rows.front().first, 0);

    const Eigen::Index d = static_cast<Eigen::Index>(width - 1);
    std::vector<std::string> labels;
    std::vector<std::vector<Vector>> columns;
    for (std::size_t r = first; r < rows.size(); ++r) {
        const auto& [row, cells] = rows[r];
        if (cells.size() != width)
            throw ParseError("ragged row: expected " + std::to_string(width) + " fields, got " + std::to_string(cells.size()), row, 0);
        if (cells[label].empty()) throw ParseError("missing label", row, label + 1);
        Vector x(d);
        Eigen::Index k = 0;
        for (std::size_t c = 0; c < width; ++c) {
            if (c == label) continue;
            if (!detail::parse_number(cells[c], x[k++]))
                throw ParseError("non-numeric feature value '" + cells[c] + "'", row, c + 1);
        }
        auto it = std::find(labels.begin(), labels.end(), cells[label]);
        std::size_t cls = static_cast<std::size_t>(it - labels.begin());
        if (it == labels.end()) {
            labels.push_back(cells[label]);
            columns.emplace_back();
        }
        columns[cls].push_back(std::move(x));
    }
    LabeledDataset out;
    for (std::size_t c = 0; c < labels.size(); ++c) {
        Matrix m(d, static_cast<Eigen::Index>(columns[c].size()));
        for (std::size_t i = 0; i < columns[c].size(); ++i) m.col(static_cast<Eigen::Index>(i)) = columns[c][i];
        out.classes.push_back({labels[c], std::move(m)});
    }
    return out;
}

inline LabeledDataset load_csv(const std::string& path, int labelColumn = -1) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'", 0, 0);
    return parse_csv(in, labelColumn);
}

/// Header x1..xd,label; one row per point, class by class; 17 significant
/// digits so values round-trip exactly.
inline void write_csv(std::ostream& out, const LabeledDataset& data) {
    data.validate();
    for (const auto& c : data.classes)
        if (c.label.find_first_of(",\n\r\"") != std::string::npos || detail::trim(c.label) != c.label)
            throw ParameterError("label '" + c.label + "' cannot be written unquoted");
    const Eigen::Index d = data.dim();
    for (Eigen::Index r = 0; r < d; ++r) out << 'x' << (r + 1) << ',';
    out << "label\n";
    char buf[32];
    for (const auto& c : data.classes) {
        for (Eigen::Index i = 0; i < c.points.cols(); ++i) {
            for (Eigen::Index r = 0; r < d; ++r) {
                std::snprintf(buf, sizeof buf, "%.17g", c.points(r, i));
                out << buf << ',';
            }
            out << c.label << '\n';
        }
    }
}

inline void write_csv(const std::string& path, const LabeledDataset& data) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing", 0, 0);
    write_csv(out, data);
}

/// Applies previously computed statistics: x <- (x - mean) / std, with
/// flagged features only centered.
inline LabeledDataset apply_standardization(LabeledDataset data, const Vector& means, const Vector& stds,
                                            const std::vector<bool>& constant) {
    data.validate();
    detail::require_same("standardization means", data.dim(), means.size());
    detail::require_same("standardization stds", data.dim(), stds.size());
    detail::require_same("standardization flags", data.dim(), static_cast<std::ptrdiff_t>(constant.size()));
    Vector scale(data.dim());
    for (Eigen::Index r = 0; r < data.dim(); ++r) scale[r] = constant[static_cast<std::size_t>(r)] ? 1.0 : 1.0 / stds[r];
    for (auto& c : data.classes) c.points = scale.asDiagonal() * (c.points.colwise() - means);
    data.standardized = true;
    data.featureMeans = means;
    data.featureStds = stds;
    data.constantFeatures = constant;
    return data;
}

/// Pooled per-feature centering and scaling to unit population std.
inline LabeledDataset standardize(LabeledDataset data) {
    data.validate();
    const Matrix all = data.stacked();
    const double n = static_cast<double>(all.cols());
    const Vector means = all.rowwise().sum() / n;
    const Vector stds = ((all.colwise() - means).array().square().rowwise().sum() / n).sqrt().matrix();
    std::vector<bool> constant(static_cast<std::size_t>(data.dim()));
    for (Eigen::Index r = 0; r < data.dim(); ++r)
        constant[static_cast<std::size_t>(r)] = !(stds[r] > 1e-12 * std::max(1.0, std::abs(means[r])));
    return apply_standardization(std::move(data), means, stds, constant);
}

struct SplitSpec {
    double trainFraction = 0.5;
    std::uint64_t seed = 0;
    bool stratified = true;

    void validate() const {
        if (!(trainFraction > 0 && trainFraction < 1)) throw ParameterError("train fraction must lie in (0, 1)");
    }
};

/// Seeded train/test split. Stratified: round(fraction * n_c) points of each
/// class go to training. Standardization statistics are computed on the
/// training side and applied to both sides.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& data, const SplitSpec& spec) {
    spec.validate();
    data.validate();
    std::mt19937_64 rng(spec.seed);
    const std::size_t nc = data.class_count();
    std::vector<std::vector<Eigen::Index>> trainIdx(nc), testIdx(nc);

    if (spec.stratified) {
        for (std::size_t c = 0; c < nc; ++c) {
            const Eigen::Index n = data.classes[c].points.cols();
            if (n < 2) throw ParameterError("class '" + data.classes[c].label + "' is too small to split (" + std::to_string(n) + " point)");
            std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
            std::shuffle(perm.begin(), perm.end(), rng);
            const auto k = std::clamp<Eigen::Index>(std::lround(spec.trainFraction * static_cast<double>(n)), 1, n - 1);
            trainIdx[c].assign(perm.begin(), perm.begin() + k);
            testIdx[c].assign(perm.begin() + k, perm.end());
        }
    } else {
        std::vector<std::pair<std::size_t, Eigen::Index>> all;
        for (std::size_t c = 0; c < nc; ++c)
            for (Eigen::Index i = 0; i < data.classes[c].points.cols(); ++i) all.emplace_back(c, i);
        std::shuffle(all.begin(), all.end(), rng);
        const auto k = static_cast<std::size_t>(std::lround(spec.trainFraction * static_cast<double>(all.size())));
        for (std::size_t t = 0; t < all.size(); ++t) (t < k ? trainIdx : testIdx)[all[t].first].push_back(all[t].second);
        for (std::size_t c = 0; c < nc; ++c)
            if (trainIdx[c].empty() || testIdx[c].empty())
                throw ParameterError("class '" + data.classes[c].label + "' ends up empty on one side of the split");
    }

    auto gather = [&](std::vector<std::vector<Eigen::Index>>& idx) {
        LabeledDataset out;
        for (std::size_t c = 0; c < nc; ++c) {
            std::sort(idx[c].begin(), idx[c].end());
            Matrix m(data.dim(), static_cast<Eigen::Index>(idx[c].size()));
            for (std::size_t i = 0; i < idx[c].size(); ++i) m.col(static_cast<Eigen::Index>(i)) = data.classes[c].points.col(idx[c][i]);
            out.classes.push_back({data.classes[c].label, std::move(m)});
        }
        return out;
    };
    LabeledDataset train = standardize(gather(trainIdx));
    LabeledDataset test = apply_standardization(gather(testIdx), train.featureMeans, train.featureStds, train.constantFeatures);
    return {std::move(train), std::move(test)};
}

}  // namespace wda
