#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "bvtrack/appendix.hpp"
#include "bvtrack/error.hpp"
#include "bvtrack/ocp.hpp"
#include "bvtrack/table.hpp"

namespace bvtrack::cli {

enum ExitCode : int { ok = 0, usage = 1, solver_failure = 2, verification_failure = 3 };

class UsageError : public Error {
public:
    using Error::Error;
};

enum class Command { solve, study, rho_sweep, verify_appendix };

struct CliRun {
    Command command = Command::study;
    OcpConfig cfg{};
    std::vector<int> levels{1, 2, 3, 4};
    std::vector<SolverPath> paths{all_paths.begin(), all_paths.end()};
    std::vector<double> rhos;
    AppendixOptions appendix{};
    TableFormat format = TableFormat::csv;
    std::optional<std::string> out;
    int jobs = 1;
    std::uint64_t seed = 0;
    bool help = false;
    std::string help_text;
};

namespace detail {

template <class T>
T number(std::string_view s, std::string_view what)
{
    T v{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) {
        throw UsageError(std::string(what) + ": cannot parse '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    for (;;) {
        const auto p = s.find(sep);
        out.push_back(s.substr(0, p));
        if (p == std::string_view::npos) {
            return out;
        }
        s.remove_prefix(p + 1);
    }
}

inline std::vector<int> parse_levels(std::string_view s)
{
    const auto p = s.find("..");
    const int lo = number<int>(s.substr(0, p), "--levels");
    const int hi = p == std::string_view::npos ? lo : number<int>(s.substr(p + 2), "--levels");
    if (lo < 1 || hi < lo) {
        throw UsageError("--levels: expected A..B with 1 <= A <= B");
    }
    std::vector<int> out;
    for (int l = lo; l <= hi; ++l) {
        out.push_back(l);
    }
    return out;
}

inline RhoRule parse_rho(std::string_view s)
{
    if (s == "h") {
        return {RhoKind::h, 0.0};
    }
    if (s == "h32") {
        return {RhoKind::h32, 0.0};
    }
    if (s == "h2") {
        return {RhoKind::h2, 0.0};
    }
    if (s.starts_with("const:")) {
        const double v = number<double>(s.substr(6), "--rho");
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw UsageError("--rho: constant must be positive");
        }
        return {RhoKind::constant, v};
    }
    throw UsageError("--rho: expected h, h32, h2 or const:<value>");
}

inline void parse_inner(std::string_view s, SolverConfig& solver)
{
    if (s == "exact") {
        solver.inner_mode = InnerMode::fast_diagonalization;
        return;
    }
    if (s.starts_with("pcg:")) {
        const double tol = number<double>(s.substr(4), "--inner");
        if (!(tol > 0.0 && tol < 1.0)) {
            throw UsageError("--inner: tolerance must lie in (0,1)");
        }
        solver.inner_mode = InnerMode::inner_pcg;
        solver.inner_rel_tol = tol;
        return;
    }
    throw UsageError("--inner: expected exact or pcg:<tol>");
}

inline std::vector<SolverPath> parse_paths(std::string_view s)
{
    if (s == "all") {
        return {all_paths.begin(), all_paths.end()};
    }
    for (const auto p : all_paths) {
        if (s == to_string(p)) {
            return {p};
        }
    }
    throw UsageError("--path: expected schur-cg, schur-pcg, full-pcg or all");
}

inline std::vector<double> parse_rho_list(std::string_view s)
{
    std::vector<double> out;
    for (const auto part : split(s, ',')) {
        out.push_back(number<double>(part, "--rho-list"));
    }
    return out;
}

inline std::vector<int> parse_sizes(std::string_view s)
{
    std::vector<int> out;
    for (const auto part : split(s, ',')) {
        out.push_back(number<int>(part, "--sizes"));
    }
    return out;
}

inline std::vector<double> default_rho_list()
{
    std::vector<double> out;
    for (int k = 0; k <= 16; k += 2) {
        out.push_back(std::ldexp(1.0, -k));
    }
    return out;
}

inline int thread_count(const std::optional<int>& flag, const char* env)
{
    if (flag) {
        if (*flag < 1) {
            throw UsageError("--jobs must be >= 1");
        }
        return *flag;
    }
    if (env != nullptr && *env != '\0') {
        const int n = number<int>(env, "BVTRACK_THREADS");
        if (n < 1) {
            throw UsageError("BVTRACK_THREADS must be >= 1");
        }
        return n;
    }
    return 1;
}

} // namespace detail

/// Parses arguments (without the program name). `env_threads` is the value
/// of BVTRACK_THREADS, overridden by --jobs.
[[nodiscard]] inline CliRun parse_args(std::span<const std::string> args,
                                       const char* env_threads = std::getenv("BVTRACK_THREADS"))
{
    CLI::App app{"Boundary value tracking by energy-regularized optimal control on the unit cube.\n"
                 "Without a subcommand, runs the cosine study with rho = h^2 at levels 1..4.",
                 "bvtrack"};
    app.require_subcommand(0, 1);
    app.set_help_flag();

    bool help = false;
    int dim = 3;
    std::string rho = "h2";
    std::string target = "cosine";
    std::string path = "all";
    double tol = 1e-9;
    int max_iters = 1000;
    std::string inner = "exact";
    std::string format = "csv";
    std::string out;
    std::uint64_t seed = 0;
    std::optional<int> jobs;
    std::string sampling = "interpolated";
    int quad_order = 5;
    double damping = 0.8;
    int smooth = 1;
    std::string smoother = "face-block";
    std::string transfer = "interior-aligned";

    app.add_flag("-h,--help", help, "Print this help and exit");
    app.add_option("--dim", dim, "Spatial dimension")->check(CLI::Range(1, 3))->capture_default_str();
    app.add_option("--rho", rho, "Regularization: h, h32, h2 or const:<value>")->capture_default_str();
    app.add_option("--target", target, "Target on the boundary")
        ->check(CLI::IsMember({"cosine", "quadratic"}))
        ->capture_default_str();
    app.add_option("--path", path, "Solver path: schur-cg, schur-pcg, full-pcg or all")->capture_default_str();
    app.add_option("--tol", tol, "Relative residual tolerance of the outer CG")->capture_default_str();
    app.add_option("--max-iters", max_iters, "Outer CG iteration limit")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--inner", inner, "Interior solve: exact (fast diagonalization) or pcg:<tol>")->capture_default_str();
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "md"}))->capture_default_str();
    app.add_option("--out", out, "Write output to this file instead of stdout");
    app.add_option("--seed", seed, "Seed for randomized checks")->capture_default_str();
    app.add_option("--jobs", jobs, "Levels solved concurrently (default: BVTRACK_THREADS or 1)");
    app.add_option("--sampling", sampling, "Target sampling for rhs and error")
        ->check(CLI::IsMember({"interpolated", "exact"}))
        ->capture_default_str();
    app.add_option("--quad-order", quad_order, "Gauss points per direction")->check(CLI::Range(5, 10))->capture_default_str();
    app.add_option("--gmg-damping", damping, "Multigrid smoother damping")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    app.add_option("--gmg-smooth", smooth, "Pre- and post-smoothing steps")->check(CLI::Range(0, 10))->capture_default_str();
    app.add_option("--gmg-smoother", smoother, "Multigrid smoother")
        ->check(CLI::IsMember({"face-block", "jacobi"}))
        ->capture_default_str();
    app.add_option("--gmg-transfer", transfer, "Multigrid grid transfer")
        ->check(CLI::IsMember({"interior-aligned", "nested"}))
        ->capture_default_str();

    auto* solve = app.add_subcommand("solve", "Solve at one level and report error and iterations")->fallthrough();
    int solve_level = 1;
    solve->add_option("--level", solve_level, "Refinement level")->check(CLI::PositiveNumber)->capture_default_str();

    auto* study = app.add_subcommand("study", "Convergence study over a range of levels")->fallthrough();
    std::string levels = "1..4";
    bool allow_large = false;
    study->add_option("--levels", levels, "Level range A..B")->capture_default_str();
    study->add_flag("--allow-large", allow_large, "Permit levels above 5 in 3D");

    auto* sweep = app.add_subcommand("rho-sweep", "Fixed level, descending list of rho values")->fallthrough();
    int sweep_level = 4;
    std::string rho_list = "1,2^-2,...,2^-16";
    sweep->add_option("--level", sweep_level, "Refinement level")->check(CLI::PositiveNumber)->capture_default_str();
    sweep->add_option("--rho-list", rho_list, "Comma separated rho values, descending")->capture_default_str();

    auto* appx = app.add_subcommand("verify-appendix", "Check the approximation estimates with their constants")
                     ->fallthrough();
    std::string sizes = "8,16,32,64";
    double shrink = 1.0;
    appx->add_option("--sizes", sizes, "Comma separated interval counts, doubling")->capture_default_str();
    appx->add_option("--shrink", shrink, "Factor applied to every proven constant")->capture_default_str();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    CliRun run;
    if (help) {
        run.help = true;
        run.help_text = app.help("", CLI::AppFormatMode::All);
        return run;
    }
    if (solve->parsed()) {
        run.command = Command::solve;
    } else if (sweep->parsed()) {
        run.command = Command::rho_sweep;
    } else if (appx->parsed()) {
        run.command = Command::verify_appendix;
    }

    auto& c = run.cfg;
    c.d = dim;
    c.rho = detail::parse_rho(rho);
    c.target = target == "cosine" ? Target::cosine() : Target::quadratic(dim);
    c.sampling = sampling == "exact" ? TargetSampling::exact : TargetSampling::interpolated;
    c.quad_order = quad_order;
    if (!(tol > 0.0 && tol < 1.0)) {
        throw UsageError("--tol must lie in (0,1)");
    }
    c.solver.rel_tol = tol;
    c.solver.max_iters = max_iters;
    detail::parse_inner(inner, c.solver);
    if (!(damping > 0.0)) {
        throw UsageError("--gmg-damping must lie in (0,1]");
    }
    c.solver.gmg.damping = damping;
    c.solver.gmg.pre_smooth = smooth;
    c.solver.gmg.post_smooth = smooth;
    c.solver.gmg.smoother = smoother == "jacobi" ? GmgSmoother::jacobi : GmgSmoother::face_block_jacobi;
    c.solver.gmg.transfer = transfer == "nested" ? GmgTransfer::nested : GmgTransfer::interior_aligned;
    run.paths = detail::parse_paths(path);
    c.path = run.paths.front();
    run.format = format == "md" ? TableFormat::md : TableFormat::csv;
    if (!out.empty()) {
        run.out = out;
    }
    run.seed = seed;
    run.jobs = detail::thread_count(jobs, env_threads);

    switch (run.command) {
    case Command::solve:
        c.level = solve_level;
        break;
    case Command::study:
        run.levels = detail::parse_levels(levels);
        if (dim == 3 && run.levels.back() > 5 && !allow_large) {
            throw UsageError("--levels: 3D levels above 5 need --allow-large");
        }
        c.level = run.levels.front();
        break;
    case Command::rho_sweep:
        c.level = sweep_level;
        run.rhos = sweep->count("--rho-list") > 0 ? detail::parse_rho_list(rho_list) : detail::default_rho_list();
        for (std::size_t i = 0; i < run.rhos.size(); ++i) {
            if (!(run.rhos[i] > 0.0) || (i > 0 && run.rhos[i] >= run.rhos[i - 1])) {
                throw UsageError("--rho-list: values must be positive and strictly descending");
            }
        }
        break;
    case Command::verify_appendix:
        run.appendix.sizes = detail::parse_sizes(sizes);
        run.appendix.shrink = shrink;
        for (std::size_t i = 0; i < run.appendix.sizes.size(); ++i) {
            const int n = run.appendix.sizes[i];
            if (n < 4 || (i > 0 && n != 2 * run.appendix.sizes[i - 1])) {
                throw UsageError("--sizes: values must be >= 4 and doubling");
            }
        }
        if (run.appendix.sizes.size() < 2) {
            throw UsageError("--sizes: need at least two sizes");
        }
        if (!(shrink > 0.0)) {
            throw UsageError("--shrink must be positive");
        }
        break;
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return run;
}

namespace detail {

inline std::string solve_report(const CliRun& run, std::ostream& err, int& code)
{
    const auto space = TensorSpace::at_level(run.cfg.d, run.cfg.level);
    const auto quad = gauss_rule(run.cfg.quad_order);
    std::vector<std::vector<std::string>> body;
    for (const auto path : run.paths) {
        OcpConfig c = run.cfg;
        c.path = path;
        try {
            const auto sol = solve_ocp(c);
            const double e = boundary_l2_error(sol.coeffs, space, c.target, quad, c.sampling);
            body.push_back({to_string(path), std::to_string(c.level), std::to_string(space.total_dofs()),
                            fmt::sci(sol.rho), fmt::sci4(e), std::to_string(sol.report.iterations),
                            fmt::sci4(sol.full_rel_residual),
                            fmt::sci4(recover_control(space, sol.coeffs).dual_norm)});
        } catch (const SolverFailure& e) {
            err << "bvtrack: " << e.what() << '\n';
            code = ExitCode::solver_failure;
        }
    }
    const std::vector<std::string> header{"path", "level", "dofs", "rho", "error", "iterations", "rel_residual",
                                          "h1_norm"};
    if (body.empty()) {
        return {};
    }
    if (run.format == TableFormat::md) {
        return bvtrack::detail::markdown(header, body);
    }
    std::string text;
    for (std::size_t i = 0; i < header.size(); ++i) {
        text += header[i];
        text += i + 1 < header.size() ? ',' : '\n';
    }
    for (const auto& row : body) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            text += row[i];
            text += i + 1 < row.size() ? ',' : '\n';
        }
    }
    return text;
}

} // namespace detail

/// Executes a parsed run and returns the exit code.
inline int run(const CliRun& r, std::ostream& out, std::ostream& err)
{
    if (r.help) {
        out << r.help_text;
        return ExitCode::ok;
    }
    std::string text;
    int code = ExitCode::ok;
    try {
        switch (r.command) {
        case Command::solve:
            text = detail::solve_report(r, err, code);
            break;
        case Command::study: {
            const auto table = run_convergence_study(r.cfg, r.levels, r.paths, r.jobs);
            text = emit_table(table, r.format);
            for (const auto& row : table.rows) {
                if (!row.failure.empty()) {
                    err << "bvtrack: level " << row.level << ": " << row.failure << '\n';
                    code = ExitCode::solver_failure;
                }
            }
            break;
        }
        case Command::rho_sweep: {
            const auto recs = rho_sweep(r.cfg, r.rhos);
            text = emit_rho_sweep(recs, r.format);
            if (recs.size() >= 2) {
                try {
                    const auto fit = fit_sweep_slope(recs);
                    err << "bvtrack: pre-saturation slope " << fmt::fixed2(fit.slope) << " over " << fit.points
                        << " points\n";
                } catch (const Error& e) {
                    err << "bvtrack: no slope fit: " << e.what() << '\n';
                }
            }
            break;
        }
        case Command::verify_appendix: {
            const auto rep = verify_appendix(r.appendix);
            text = emit_appendix_report(rep);
            if (!rep.passed()) {
                for (const auto& e : rep.estimates) {
                    if (!e.passed) {
                        err << "bvtrack: violated: " << e.name << ' ' << e.violation << '\n';
                    }
                }
                for (const auto& o : rep.orders) {
                    if (!o.passed) {
                        err << "bvtrack: order too low: " << o.name << " observed " << fmt::fixed2(o.observed)
                            << " < " << fmt::fixed2(o.required) << '\n';
                    }
                }
                code = ExitCode::verification_failure;
            }
            break;
        }
        }
    } catch (const ConfigError& e) {
        err << "bvtrack: " << e.what() << '\n';
        return ExitCode::usage;
    } catch (const Error& e) {
        err << "bvtrack: " << e.what() << '\n';
        return ExitCode::solver_failure;
    }

    if (r.out) {
        std::ofstream f(*r.out, std::ios::binary);
        f << text;
        if (!f) {
            err << "bvtrack: cannot write " << *r.out << '\n';
            return ExitCode::usage;
        }
    } else {
        out << text;
    }
    return code;
}

inline int main(int argc, char** argv)
{
    const std::vector<std::string> args(argv + 1, argv + argc);
    CliRun r;
    try {
        r = parse_args(args);
    } catch (const UsageError& e) {
        std::cerr << "bvtrack: " << e.what() << "\nRun with --help for usage.\n";
        return ExitCode::usage;
    }
    return run(r, std::cout, std::cerr);
}

} // namespace bvtrack::cli
