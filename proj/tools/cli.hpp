#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <wda.hpp>

namespace wda::cli {

using json = nlohmann::ordered_json;

enum ExitCode : int {
    kOk = 0,
    kValidation = 2,
    kParse = 3,
    kNotConverged = 4,
    kNumeric = 5,
};

/// Writes to a sibling temp file, then renames over the target.
inline void write_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError("cannot open '" + tmp.string() + "' for writing", 0, 0);
        out << contents;
        out.flush();
        if (!out) throw ParseError("write to '" + tmp.string() + "' failed", 0, 0);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw ParseError("cannot move output into place at '" + path + "': " + ec.message(), 0, 0);
    }
}

inline std::string fmt17(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Header "d p", then d rows of p values.
inline std::string format_projection(const Projection& p) {
    std::ostringstream out;
    out << p.dim() << ' ' << p.rank() << '\n';
    for (Eigen::Index i = 0; i < p.dim(); ++i) {
        for (Eigen::Index j = 0; j < p.rank(); ++j) out << (j ? " " : "") << fmt17(p.matrix()(i, j));
        out << '\n';
    }
    return out.str();
}

inline Projection parse_projection(std::istream& in) {
    long long d = 0, p = 0;
    if (!(in >> d >> p)) throw ParseError("projection file: missing 'd p' header", 1, 0);
    if (d < 1 || p < 1 || p > d) throw ParseError("projection file: header needs 1 <= p <= d", 1, 0);
    Matrix m(d, p);
    for (long long i = 0; i < d; ++i)
        for (long long j = 0; j < p; ++j)
            if (!(in >> m(i, j))) throw ParseError("projection file: missing or non-numeric value", static_cast<std::size_t>(i + 2), static_cast<std::size_t>(j + 1));
    std::string rest;
    if (in >> rest) throw ParseError("projection file: trailing data '" + rest + "'", 0, 0);
    return Projection(std::move(m));
}

inline Projection load_projection(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'", 0, 0);
    return parse_projection(in);
}

/// Plain numeric CSV (no header, no labels).
inline Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'", 0, 0);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_fields(line);
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            if (!detail::parse_number(cells[c], row[c])) throw ParseError("non-numeric matrix entry '" + cells[c] + "'", lineNo, c + 1);
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("ragged row: expected " + std::to_string(rows.front().size()) + " fields, got " + std::to_string(row.size()), lineNo, 0);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("empty matrix file '" + path + "'", 0, 0);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
}

inline json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
    return rows;
}

/// Inserts "--key=value" for every entry of a flat JSON config object right
/// after the subcommand name, so explicit command-line flags (which come
/// later) take precedence. Unknown keys are rejected.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
    std::vector<std::string> out;
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        } else {
            out.push_back(args[i]);
        }
    }
    if (path.empty()) return out;
    if (out.empty()) throw CLI::ValidationError("--config", "a subcommand must precede --config");
    CLI::App* sub = nullptr;
    try {
        sub = app.get_subcommand(out.front());
    } catch (const CLI::OptionNotFound&) {
        throw CLI::ValidationError("--config", "unknown subcommand '" + out.front() + "'");
    }
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config '" + path + "'", 0, 0);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config '" + path + "' is not valid JSON: " + e.what(), 0, 0);
    }
    if (!cfg.is_object()) throw ParseError("config '" + path + "' must be a JSON object", 0, 0);
    std::vector<std::string> injected;
    for (const auto& [key, value] : cfg.items()) {
        CLI::Option* opt = sub->get_option_no_throw("--" + key);
        if (opt == nullptr) throw CLI::ValidationError("--config", "unknown config key '" + key + "'");
        if (value.is_boolean()) {
            if (!opt->get_expected_min() && value.get<bool>()) injected.push_back("--" + key);
            else if (opt->get_expected_min()) injected.push_back("--" + key + "=" + (value.get<bool>() ? "true" : "false"));
            continue;
        }
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_array()) {
            for (const auto& item : value) text += (text.empty() ? "" : ",") + (item.is_string() ? item.get<std::string>() : item.dump());
        } else if (value.is_number()) {
            text = value.dump();
        } else {
            throw CLI::ValidationError("--config", "unsupported value for key '" + key + "'");
        }
        injected.push_back("--" + key + "=" + text);
    }
    out.insert(out.begin() + 1, injected.begin(), injected.end());
    return out;
}

struct DataArgs {
    std::string path;
    int labelColumn = -1;
    bool synthetic = false;
    long long d = 10;
    std::vector<int> counts{30, 40, 30};
    std::uint64_t dataSeed = 0;
    std::string layout = "triangle";

    void add(CLI::App* c) {
        c->add_option("--data", path, "CSV file: numeric features plus a label column");
        c->add_option("--label-column", labelColumn, "0-based label column (-1 = last)");
        c->add_flag("--synthetic", synthetic, "Use the synthetic three-class generator");
        c->add_option("--d", d, "Synthetic feature dimension")->check(CLI::Range(2LL, 1000000LL));
        c->add_option("--counts", counts, "Synthetic class sizes")->delimiter(',')->expected(3);
        c->add_option("--data-seed", dataSeed, "Synthetic generator seed");
        c->add_option("--layout", layout, "Synthetic mode layout")->check(CLI::IsMember({"triangle", "interleaved"}));
    }

    LabeledDataset load() const {
        if (synthetic == !path.empty()) throw ParameterError("give exactly one of --data and --synthetic");
        if (synthetic)
            return make_synthetic(d, counts, dataSeed, layout == "interleaved" ? SyntheticLayout::Interleaved : SyntheticLayout::Triangle);
        return load_csv(path, labelColumn);
    }

    json to_json() const {
        if (synthetic) return {{"source", "synthetic"}, {"d", d}, {"counts", counts}, {"data_seed", dataSeed}, {"layout", layout}};
        return {{"source", path}, {"label_column", labelColumn}};
    }
};

struct FitArgs {
    double lambda = 0.01;
    long long p = 2;
    double tol = 1e-5;
    int maxOuterIter = 200;
    bool ridge = false;
    std::optional<double> epsilon;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string init = "random";
    double balTol = 1e-10;
    int balMaxIter = 1000;
    double troptTol = 1e-10;
    int troptMaxIter = 500;

    void add(CLI::App* c) {
        c->add_option("--lambda", lambda, "Entropic regularization")->check(CLI::NonNegativeNumber);
        c->add_option("--p", p, "Subspace dimension")->check(CLI::PositiveNumber);
        c->add_option("--tol", tol, "Outer stopping tolerance (radians)")->check(CLI::PositiveNumber);
        c->add_option("--max-outer-iter", maxOuterIter, "Outer iteration cap")->check(CLI::PositiveNumber);
        c->add_flag("--ridge", ridge, "Add epsilon = 1 to the within-class matrix");
        c->add_option("--epsilon", epsilon, "Explicit ridge value")->check(CLI::NonNegativeNumber);
        c->add_option("--seed", seed, "Seed for the random initial projection")->envname("WDA_SEED");
        c->add_option("--threads", threads, "Threads for per-pair plan solves")->envname("WDA_THREADS");
        c->add_option("--init", init, "Initial projection")->check(CLI::IsMember({"random", "pca", "lda"}));
        c->add_option("--bal-tol", balTol, "Inner balancing tolerance")->check(CLI::PositiveNumber);
        c->add_option("--bal-max-iter", balMaxIter, "Inner balancing iteration cap")->check(CLI::PositiveNumber);
        c->add_option("--tropt-tol", troptTol, "Trace-ratio SCF tolerance")->check(CLI::PositiveNumber);
        c->add_option("--tropt-max-iter", troptMaxIter, "Trace-ratio SCF iteration cap")->check(CLI::PositiveNumber);
    }

    WdaConfig config() const {
        WdaConfig c;
        c.lambda = lambda;
        c.p = p;
        c.tol = tol;
        c.maxOuterIter = maxOuterIter;
        c.ridge = epsilon ? *epsilon : (ridge ? 1.0 : 0.0);
        c.seed = seed;
        c.threads = threads;
        c.init = init == "pca" ? InitKind::Pca : init == "lda" ? InitKind::Lda : InitKind::Random;
        c.balancing = BalancingConfig::with_tol(balTol);
        c.balancing.maxIter = balMaxIter;
        c.troptTol = troptTol;
        c.troptMaxIter = troptMaxIter;
        c.validate();
        return c;
    }
};

inline json config_json(const WdaConfig& c) {
    return {{"lambda", c.lambda},         {"p", c.p},
            {"tol", c.tol},               {"max_outer_iter", c.maxOuterIter},
            {"ridge", c.ridge},           {"seed", c.seed},
            {"threads", c.threads},       {"init", to_string(c.init)},
            {"bal_tol", c.balancing.tol}, {"bal_eig_tol", c.balancing.eigTol},
            {"bal_max_iter", c.balancing.maxIter}, {"tropt_tol", c.troptTol},
            {"tropt_max_iter", c.troptMaxIter}};
}

inline json trace_json(const ConvergenceTrace& t) {
    return {{"objective", t.objective},
            {"subspace_step", t.subspaceStep},
            {"inner_iterations", t.innerIterations},
            {"tropt_iterations", t.troptIterations},
            {"wall_time", t.wallTime},
            {"inner_warnings", t.innerWarnings},
            {"tropt_non_converged", t.troptNonConverged},
            {"degenerate_gap", t.degenerateGap},
            {"max_objective_decrease", t.max_decrease()}};
}

inline json header(const std::string& command) { return {{"command", command}, {"version", kVersion}}; }

inline void emit(const json& report, const std::string& path, std::ostream& out) {
    const std::string text = report.dump(2) + "\n";
    if (path.empty() || path == "-") out << text;
    else write_atomic(path, text);
}

inline std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> out;
    for (const auto& cell : detail::split_fields(s)) {
        double x;
        if (!detail::parse_number(cell, x)) throw ParameterError("grid value '" + cell + "' is not a number");
        out.push_back(x);
    }
    return out;
}

/// Runs the command line; returns the process exit code. args excludes argv[0].
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Wasserstein discriminant analysis"};
    app.name("wda");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.add_option("--config", "JSON object of option values for the subcommand; command-line flags win");

    // balance
    auto* bal = app.add_subcommand("balance", "Balance a kernel by SK or Acc-SK and report convergence");
    std::string balBuiltin, balKernel, balAlg = "accsk", balEigMethod = "lanczos", balOut;
    double balTol = 1e-5, balEps = 1e-8;
    std::optional<double> balEigTol;
    int balMaxIter = 1000, balEigMaxIter = 200;
    long long balSize = 2;
    bal->add_option("--builtin", balBuiltin, "Builtin kernel")->check(CLI::IsMember({"k1", "k2", "uniform"}));
    bal->add_option("--kernel", balKernel, "Kernel matrix CSV");
    bal->add_option("--alg", balAlg, "Balancing algorithm")->check(CLI::IsMember({"sk", "accsk"}));
    bal->add_option("--tol", balTol, "Stopping tolerance")->check(CLI::PositiveNumber);
    bal->add_option("--max-iter", balMaxIter, "Iteration cap")->check(CLI::PositiveNumber);
    bal->add_option("--eig-tol", balEigTol, "Inner eigensolver tolerance (default 1e-2 * tol)")->check(CLI::PositiveNumber);
    bal->add_option("--eig-max-iter", balEigMaxIter, "Inner eigensolver operator-application cap")->check(CLI::PositiveNumber);
    bal->add_option("--eig-method", balEigMethod, "Inner eigensolver")->check(CLI::IsMember({"lanczos", "power"}));
    bal->add_option("--epsilon", balEps, "Small entry of the k1/k2 kernels")->check(CLI::PositiveNumber);
    bal->add_option("--size", balSize, "Size of the uniform kernel")->check(CLI::PositiveNumber);
    bal->add_option("--out", balOut, "Report path (default stdout)");

    // fit
    auto* fitCmd = app.add_subcommand("fit", "Fit a projection");
    DataArgs fitData;
    FitArgs fitArgs;
    std::string fitOut, fitTrace;
    fitData.add(fitCmd);
    fitArgs.add(fitCmd);
    fitCmd->add_option("--out", fitOut, "Projection file to write");
    fitCmd->add_option("--trace", fitTrace, "Report path (default: <out>.json, or stdout without --out)");

    // transform
    auto* trCmd = app.add_subcommand("transform", "Project a labelled CSV with a stored projection");
    std::string trProj, trData, trStats, trOut;
    int trLabel = -1;
    trCmd->add_option("--projection", trProj, "Projection file")->required();
    trCmd->add_option("--data", trData, "Input CSV")->required();
    trCmd->add_option("--label-column", trLabel, "0-based label column (-1 = last)");
    trCmd->add_option("--stats", trStats, "Fit report whose standardization statistics are applied first");
    trCmd->add_option("--out", trOut, "Output CSV (default stdout)");

    // eval
    auto* evCmd = app.add_subcommand("eval", "Repeated-holdout KNN evaluation");
    DataArgs evData;
    FitArgs evArgs;
    int evK = 10, evRepeats = 20;
    double evFraction = 0.5;
    std::uint64_t evSplitSeed = 0;
    bool evBaseline = false, evIdentity = false, evPooled = false;
    std::string evOut, evCsv;
    evData.add(evCmd);
    evArgs.add(evCmd);
    evCmd->add_option("--K", evK, "Neighbours");
    evCmd->add_option("--repeats", evRepeats, "Random splits");
    evCmd->add_option("--train-fraction", evFraction, "Training share per class");
    evCmd->add_option("--split-seed", evSplitSeed, "Base seed for the splits");
    evCmd->add_flag("--baseline", evBaseline, "Also score a random orthonormal projection");
    evCmd->add_flag("--identity", evIdentity, "Diagnostic: identity projection, train = test");
    evCmd->add_flag("--unstratified", evPooled, "Split all points together instead of per class");
    evCmd->add_option("--out", evOut, "Report path (default stdout)");
    evCmd->add_option("--csv", evCsv, "Per-repeat CSV rows");

    // bench
    auto* bnCmd = app.add_subcommand("bench", "Time fit along one axis");
    std::string bnAxis = "d", bnGrid = "80,160,320,640", bnOut, bnCsv;
    BenchOptions bnOpts;
    FitArgs bnArgs;
    bnArgs.ridge = true;
    bnCmd->add_option("--axis", bnAxis, "Axis to sweep")->check(CLI::IsMember({"p", "d", "n"}));
    bnCmd->add_option("--grid", bnGrid, "Comma-separated ascending values");
    bnCmd->add_option("--repeats", bnOpts.repeats, "Fits per grid value")->check(CLI::PositiveNumber);
    bnCmd->add_option("--fixed-d", bnOpts.d, "Dimension when not swept");
    bnCmd->add_option("--fixed-p", bnOpts.p, "Subspace dimension when not swept");
    bnCmd->add_option("--fixed-n", bnOpts.n, "Point count when not swept");
    bnCmd->add_option("--data-seed", bnOpts.dataSeed, "Synthetic generator seed");
    bnArgs.add(bnCmd);
    bnCmd->add_option("--out", bnOut, "Report path (default stdout)");
    bnCmd->add_option("--csv", bnCsv, "Scaling table as CSV");

    // tropt
    auto* toCmd = app.add_subcommand("tropt", "Solve a fixed trace-ratio problem");
    std::string toA, toB, toOut;
    long long toP = 1, toRandom = 0;
    double toTol = 1e-5;
    int toMaxIter = 500;
    std::uint64_t toSeed = 0;
    toCmd->add_option("--a", toA, "Numerator matrix CSV");
    toCmd->add_option("--b", toB, "Denominator matrix CSV (SPD)");
    toCmd->add_option("--random", toRandom, "Use a random SPD pair of this dimension instead");
    toCmd->add_option("--p", toP, "Subspace dimension")->check(CLI::PositiveNumber);
    toCmd->add_option("--tol", toTol, "Subspace-distance tolerance")->check(CLI::PositiveNumber);
    toCmd->add_option("--max-iter", toMaxIter, "Iteration cap")->check(CLI::PositiveNumber);
    toCmd->add_option("--seed", toSeed, "Seed for --random and the start")->envname("WDA_SEED");
    toCmd->add_option("--out", toOut, "Report path (default stdout)");

    try {
        args = expand_config(args, app);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kParse;
    }

    try {
        if (bal->parsed()) {
            if (balBuiltin.empty() == balKernel.empty()) throw ParameterError("give exactly one of --builtin and --kernel");
            KernelMatrix k;
            json src;
            if (!balKernel.empty()) {
                k = KernelMatrix::from_entries(load_matrix_csv(balKernel));
                src = balKernel;
            } else if (balBuiltin == "uniform") {
                k = KernelMatrix::from_entries(Matrix::Ones(balSize, balSize));
                src = "uniform";
            } else {
                Matrix m(balBuiltin == "k1" ? 2 : 3, 2);
                if (balBuiltin == "k1") m << 1, balEps, 1, 1;
                else m << 1, balEps, 1, 1, 1, 1;
                k = KernelMatrix::from_entries(m);
                src = balBuiltin;
            }
            BalancingConfig cfg = BalancingConfig::with_tol(balTol);
            cfg.maxIter = balMaxIter;
            if (balEigTol) cfg.eigTol = *balEigTol;
            cfg.eigMaxIter = balEigMaxIter;
            cfg.eigMethod = balEigMethod == "power" ? EigenMethod::Power : EigenMethod::Lanczos;
            const BalanceResult r = balAlg == "sk" ? sk_iterate(k, cfg) : acc_sk(k, cfg);
            const TransportPlan t = assemble_plan(k, r.scaling);
            json rep = header("balance");
            rep["config"] = {{"kernel", src},           {"rows", k.rows()},
                             {"cols", k.cols()},        {"alg", balAlg},
                             {"tol", cfg.tol},          {"max_iter", cfg.maxIter},
                             {"eig_tol", cfg.eigTol},   {"eig_max_iter", cfg.eigMaxIter},
                             {"eig_method", balEigMethod}, {"epsilon", balEps}};
            rep["converged"] = r.converged;
            rep["iterations"] = r.iterations;
            rep["error"] = r.stepHistory;
            rep["final_step"] = r.step;
            rep["marginal_residual"] = t.residual;
            rep["total_mass"] = t.total_mass();
            rep["eigen_warnings"] = r.eigenWarnings;
            rep["operator_applications"] = r.operatorApplications;
            rep["u"] = to_json(r.scaling.u);
            rep["v"] = to_json(r.scaling.v);
            emit(rep, balOut, out);
            return r.converged ? kOk : kNotConverged;
        }

        if (fitCmd->parsed()) {
            const WdaConfig cfg = fitArgs.config();
            const LabeledDataset data = standardize(fitData.load());
            const FitResult f = fit(data, cfg);
            json rep = header("fit");
            rep["config"] = config_json(cfg);
            rep["data"] = fitData.to_json();
            rep["converged"] = f.converged;
            rep["iterations"] = f.iterations;
            rep["objective"] = f.objective;
            rep["trace"] = trace_json(f.trace);
            rep["standardization"] = {{"means", to_json(data.featureMeans)},
                                      {"stds", to_json(data.featureStds)},
                                      {"constant", data.constantFeatures}};
            rep["projection"] = to_json(f.P.matrix());
            if (!fitOut.empty()) write_atomic(fitOut, format_projection(f.P));
            emit(rep, fitTrace.empty() && !fitOut.empty() ? fitOut + ".json" : fitTrace, out);
            return f.converged ? kOk : kNotConverged;
        }

        if (trCmd->parsed()) {
            const Projection p = load_projection(trProj);
            LabeledDataset data = load_csv(trData, trLabel);
            if (!trStats.empty()) {
                std::ifstream in(trStats);
                if (!in) throw ParseError("cannot open '" + trStats + "'", 0, 0);
                json j;
                try {
                    j = json::parse(in);
                    const auto& s = j.at("standardization");
                    const auto means = s.at("means").get<std::vector<double>>();
                    const auto stds = s.at("stds").get<std::vector<double>>();
                    const auto constant = s.at("constant").get<std::vector<bool>>();
                    data = apply_standardization(std::move(data), Eigen::Map<const Vector>(means.data(), static_cast<Eigen::Index>(means.size())),
                                                 Eigen::Map<const Vector>(stds.data(), static_cast<Eigen::Index>(stds.size())), constant);
                } catch (const json::exception& e) {
                    throw ParseError("stats file '" + trStats + "' has no usable standardization block: " + e.what(), 0, 0);
                }
            }
            LabeledDataset projected;
            for (const auto& c : data.classes) projected.classes.push_back({c.label, transform(p, c.points)});
            std::ostringstream csv;
            write_csv(csv, projected);
            if (trOut.empty()) out << csv.str();
            else write_atomic(trOut, csv.str());
            return kOk;
        }

        if (evCmd->parsed()) {
            const WdaConfig cfg = evArgs.config();
            const LabeledDataset data = evData.load();
            SplitSpec split{evFraction, evSplitSeed, !evPooled};
            EvalOptions opts{evK, evRepeats, evBaseline, evIdentity};
            const EvalReport r = evaluate(data, cfg, split, opts);
            json rep = header("eval");
            rep["config"] = config_json(cfg);
            rep["config"]["K"] = evK;
            rep["config"]["repeats"] = evRepeats;
            rep["config"]["train_fraction"] = evFraction;
            rep["config"]["split_seed"] = evSplitSeed;
            rep["config"]["stratified"] = !evPooled;
            rep["config"]["baseline"] = evBaseline;
            rep["config"]["identity"] = evIdentity;
            rep["data"] = evData.to_json();
            rep["error"] = r.error;
            rep["per_repeat_errors"] = r.perRepeatErrors;
            if (evBaseline) {
                rep["baseline_errors"] = r.baselineErrors;
                rep["wins_over_baseline"] = r.wins_over_baseline();
            }
            rep["mean_wall_time"] = r.meanWallTime;
            rep["failures"] = r.failures;
            rep["failure_messages"] = r.failureMessages;
            rep["non_converged"] = r.nonConverged;
            if (!evCsv.empty()) {
                std::ostringstream csv;
                csv << "repeat,error" << (evBaseline ? ",baseline_error" : "") << '\n';
                for (std::size_t i = 0; i < r.perRepeatErrors.size(); ++i) {
                    csv << i << ',' << fmt17(r.perRepeatErrors[i]);
                    if (evBaseline && i < r.baselineErrors.size()) csv << ',' << fmt17(r.baselineErrors[i]);
                    csv << '\n';
                }
                write_atomic(evCsv, csv.str());
            }
            emit(rep, evOut, out);
            return r.failures > 0 && r.perRepeatErrors.empty() ? kNumeric : kOk;
        }

        if (bnCmd->parsed()) {
            WdaConfig cfg = bnArgs.config();
            const BenchAxis axis = bnAxis == "p" ? BenchAxis::P : bnAxis == "n" ? BenchAxis::N : BenchAxis::D;
            const std::vector<double> grid = parse_grid(bnGrid);
            const BenchReport r = bench_scaling(axis, grid, cfg, bnOpts);
            json rep = header("bench");
            rep["config"] = config_json(cfg);
            rep["config"]["axis"] = bnAxis;
            rep["config"]["grid"] = grid;
            rep["config"]["repeats"] = bnOpts.repeats;
            rep["config"]["fixed_d"] = bnOpts.d;
            rep["config"]["fixed_p"] = bnOpts.p;
            rep["config"]["fixed_n"] = bnOpts.n;
            rep["config"]["data_seed"] = bnOpts.dataSeed;
            json rows = json::array();
            std::ostringstream csv;
            csv << "value,mean_wall_time,mean_iterations,mean_time_per_iteration\n";
            for (const auto& row : r.rows) {
                rows.push_back({{"value", row.value},
                                {"mean_wall_time", row.meanWallTime},
                                {"mean_iterations", row.meanIterations},
                                {"mean_time_per_iteration", row.meanTimePerIteration}});
                csv << fmt17(row.value) << ',' << fmt17(row.meanWallTime) << ',' << fmt17(row.meanIterations) << ','
                    << fmt17(row.meanTimePerIteration) << '\n';
            }
            rep["rows"] = rows;
            rep[axis == BenchAxis::P ? "linear_slope" : "loglog_slope"] = r.slope;
            rep["r2"] = r.r2;
            if (!bnCsv.empty()) write_atomic(bnCsv, csv.str());
            emit(rep, bnOut, out);
            return kOk;
        }

        if (toCmd->parsed()) {
            Matrix a, b;
            if (toRandom > 0) {
                if (!toA.empty() || !toB.empty()) throw ParameterError("--random excludes --a and --b");
                const Matrix ga = Projection::random(toRandom, toRandom, toSeed).matrix();
                const Matrix gb = Projection::random(toRandom, toRandom, toSeed + 1).matrix();
                Vector da = Vector::LinSpaced(toRandom, 1.0, 2.0 * static_cast<double>(toRandom));
                Vector db = Vector::LinSpaced(toRandom, 1.0, 3.0);
                a = ga * da.asDiagonal() * ga.transpose();
                b = gb * db.asDiagonal() * gb.transpose();
            } else {
                if (toA.empty() || toB.empty()) throw ParameterError("give --a and --b, or --random");
                a = load_matrix_csv(toA);
                b = load_matrix_csv(toB);
            }
            const Projection p0 = Projection::random(a.rows(), toP, toSeed + 2);
            const TroptResult r = tropt_scf(a, b, toP, p0, toTol, toMaxIter);
            json rep = header("tropt");
            rep["config"] = {{"a", toA}, {"b", toB}, {"random", toRandom}, {"p", toP},
                             {"tol", toTol}, {"max_iter", toMaxIter}, {"seed", toSeed}};
            rep["converged"] = r.converged;
            rep["iterations"] = r.iterations;
            rep["q"] = r.q;
            rep["q_trace"] = r.trace;
            rep["steps"] = r.steps;
            rep["residual"] = r.residual;
            rep["degenerate_gap"] = r.degenerateGap;
            rep["projection"] = to_json(r.P.matrix());
            emit(rep, toOut, out);
            return r.converged ? kOk : kNotConverged;
        }
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kParse;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const Error& e) {
        err << "invalid input: " << e.what() << '\n';
        return kValidation;
    }
    return kValidation;
}

}  // namespace wda::cli
