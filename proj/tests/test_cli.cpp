#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "bvtrack/cli.hpp"

using namespace bvtrack;
using bvtrack::cli::parse_args;

namespace {

cli::CliRun parse(std::vector<std::string> args, const char* env = nullptr) { return parse_args(args, env); }

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args, const char* env = nullptr)
{
    Outcome o;
    std::ostringstream out;
    std::ostringstream err;
    try {
        o.code = cli::run(parse(std::move(args), env), out, err);
    } catch (const cli::UsageError& e) {
        o.code = cli::ExitCode::usage;
        err << e.what();
    }
    o.out = out.str();
    o.err = err.str();
    return o;
}

Outcome exec(const std::string& args)
{
    Outcome o;
    const std::string cmd = std::string(BVTRACK_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    if (p == nullptr) {
        o.code = -1;
        return o;
    }
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) {
        o.out.append(buf.data(), n);
    }
    const int status = pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

} // namespace

TEST(ParseArgs, Defaults)
{
    const auto r = parse({});
    EXPECT_EQ(r.command, cli::Command::study);
    EXPECT_EQ(r.cfg.d, 3);
    EXPECT_EQ(r.cfg.rho.kind, RhoKind::h2);
    EXPECT_EQ(r.cfg.target.kind, TargetKind::cosine);
    EXPECT_EQ(r.levels, (std::vector<int>{1, 2, 3, 4}));
    EXPECT_EQ(r.paths.size(), 3u);
    EXPECT_EQ(r.format, TableFormat::csv);
    EXPECT_DOUBLE_EQ(r.cfg.solver.rel_tol, 1e-9);
    EXPECT_EQ(r.cfg.solver.max_iters, 1000);
    EXPECT_EQ(r.cfg.solver.inner_mode, InnerMode::fast_diagonalization);
    EXPECT_EQ(r.cfg.sampling, TargetSampling::interpolated);
    EXPECT_EQ(r.jobs, 1);
    EXPECT_FALSE(r.out.has_value());
}

TEST(ParseArgs, Options)
{
    const auto r = parse({"--dim", "2", "--rho", "h32", "--target", "quadratic", "--path", "schur-pcg", "--tol", "1e-8",
                          "--inner", "pcg:1e-12", "--format", "md", "study", "--levels", "2..5"});
    EXPECT_EQ(r.cfg.d, 2);
    EXPECT_EQ(r.cfg.rho.kind, RhoKind::h32);
    EXPECT_EQ(r.cfg.target.kind, TargetKind::quadratic);
    EXPECT_EQ(r.paths, (std::vector<SolverPath>{SolverPath::schur_pcg}));
    EXPECT_DOUBLE_EQ(r.cfg.solver.rel_tol, 1e-8);
    EXPECT_EQ(r.cfg.solver.inner_mode, InnerMode::inner_pcg);
    EXPECT_DOUBLE_EQ(r.cfg.solver.inner_rel_tol, 1e-12);
    EXPECT_EQ(r.format, TableFormat::md);
    EXPECT_EQ(r.levels, (std::vector<int>{2, 3, 4, 5}));
}

TEST(ParseArgs, ConstantRhoAndSubcommands)
{
    const auto s = parse({"--rho", "const:0.5", "solve", "--level", "3"});
    EXPECT_EQ(s.command, cli::Command::solve);
    EXPECT_EQ(s.cfg.level, 3);
    EXPECT_DOUBLE_EQ(s.cfg.rho(0.1), 0.5);

    const auto w = parse({"--dim", "2", "rho-sweep"});
    EXPECT_EQ(w.command, cli::Command::rho_sweep);
    EXPECT_EQ(w.cfg.level, 4);
    ASSERT_EQ(w.rhos.size(), 9u);
    EXPECT_DOUBLE_EQ(w.rhos.front(), 1.0);
    EXPECT_DOUBLE_EQ(w.rhos.back(), std::ldexp(1.0, -16));

    const auto l = parse({"rho-sweep", "--rho-list", "1,0.1,0.01"});
    EXPECT_EQ(l.rhos, (std::vector<double>{1.0, 0.1, 0.01}));

    const auto a = parse({"verify-appendix", "--sizes", "4,8,16", "--shrink", "0.5"});
    EXPECT_EQ(a.command, cli::Command::verify_appendix);
    EXPECT_EQ(a.appendix.sizes, (std::vector<int>{4, 8, 16}));
    EXPECT_DOUBLE_EQ(a.appendix.shrink, 0.5);
}

TEST(ParseArgs, UsageErrors)
{
    const std::vector<std::vector<std::string>> bad{
        {"--dim", "4"},
        {"--dim", "0"},
        {"--rho", "h3"},
        {"--rho", "const:-1"},
        {"--target", "sine"},
        {"--path", "gmres"},
        {"--tol", "0"},
        {"--tol", "2"},
        {"--inner", "pcg:abc"},
        {"--format", "json"},
        {"--frobnicate"},
        {"study", "--levels", "3..2"},
        {"study", "--levels", "0..2"},
        {"study", "--levels", "1..6"},
        {"rho-sweep", "--rho-list", "0.1,0.2"},
        {"rho-sweep", "--rho-list", "1,x"},
        {"verify-appendix", "--sizes", "8,12"},
        {"verify-appendix", "--sizes", "8"},
        {"verify-appendix", "--shrink", "0"},
        {"--quad-order", "4"},
        {"--jobs", "0"},
        {"solve", "study"},
    };
    for (const auto& args : bad) {
        std::string joined;
        for (const auto& a : args) {
            joined += a + ' ';
        }
        EXPECT_THROW((void)parse(args), cli::UsageError) << joined;
    }
    EXPECT_NO_THROW((void)parse({"study", "--levels", "1..6", "--allow-large"}));
    EXPECT_NO_THROW((void)parse({"--dim", "2", "study", "--levels", "1..6"}));
}

TEST(ParseArgs, ThreadsFromEnvironment)
{
    EXPECT_EQ(parse({}, "3").jobs, 3);
    EXPECT_EQ(parse({"--jobs", "2"}, "3").jobs, 2);
    EXPECT_THROW((void)parse({}, "zero"), cli::UsageError);
}

TEST(Help, ListsDefaults)
{
    const auto r = run({"--help"});
    EXPECT_EQ(r.code, cli::ExitCode::ok);
    for (const char* s : {"--dim", "--rho", "h2", "--tol", "1e-09", "--max-iters", "1000", "--inner", "exact", "--format",
                          "csv", "--jobs", "solve", "study", "rho-sweep", "verify-appendix", "1..4"}) {
        EXPECT_NE(r.out.find(s), std::string::npos) << s;
    }
}

TEST(Run, LevelOneStudyRow)
{
    const auto r = run({"study", "--levels", "1..1"});
    EXPECT_EQ(r.code, cli::ExitCode::ok);
    EXPECT_EQ(r.out, std::string(csv_header) + "\n1,27,2.5e-1,1.669e-1,,1,1,1\n");
}

TEST(Run, MarkdownTable)
{
    const auto r = run({"--format", "md", "study", "--levels", "1..1"});
    EXPECT_EQ(r.code, cli::ExitCode::ok);
    std::istringstream in(r.out);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) {
        lines.push_back(l);
    }
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_NE(lines[0].find("#PSCG its"), std::string::npos);
    EXPECT_NE(lines[1].find("---:"), std::string::npos);
    EXPECT_NE(lines[2].find("1.669e-1"), std::string::npos);
}

TEST(Run, CsvRoundTripAndDeterminism)
{
    const auto a = run({"--path", "schur-pcg", "study", "--levels", "1..3"});
    const auto b = run({"--path", "schur-pcg", "--jobs", "3", "study", "--levels", "1..3"});
    EXPECT_EQ(a.code, cli::ExitCode::ok);
    EXPECT_EQ(a.out, b.out);
    const auto t = parse_table_csv(a.out);
    ASSERT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(emit_table(t, TableFormat::csv), a.out);
    EXPECT_FALSE(t.rows[0].iters_full_pcg.has_value());
    EXPECT_TRUE(t.rows[2].iters_pscg.has_value());
}

TEST(Run, ParseTableRejectsGarbage)
{
    EXPECT_THROW((void)parse_table_csv("nope\n"), ConfigError);
    EXPECT_THROW((void)parse_table_csv(std::string(csv_header) + "\n1,2,3\n"), ConfigError);
    EXPECT_THROW((void)parse_table_csv(std::string(csv_header) + "\n1,27,x,,,,,\n"), ConfigError);
}

TEST(Run, SolveReport)
{
    const auto r = run({"--dim", "2", "solve", "--level", "2"});
    EXPECT_EQ(r.code, cli::ExitCode::ok);
    EXPECT_EQ(r.out.rfind("path,level,dofs,rho,error,iterations,rel_residual,h1_norm\n", 0), 0u);
    EXPECT_NE(r.out.find("schur-cg,2,"), std::string::npos);
    EXPECT_NE(r.out.find("full-pcg,2,"), std::string::npos);
}

TEST(Run, SolverFailureExitCode)
{
    const auto r = run({"--max-iters", "2", "--path", "schur-cg", "study", "--levels", "2..3"});
    EXPECT_EQ(r.code, cli::ExitCode::solver_failure);
    EXPECT_NE(r.err.find("level 3"), std::string::npos);
    const auto t = parse_table_csv(r.out);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_FALSE(t.rows[1].error.has_value());
}

TEST(Run, RhoSweepReportsSlope)
{
    const auto r = run({"--dim", "2", "rho-sweep", "--level", "2", "--rho-list", "1,0.25,0.0625,0.015625,0.00390625"});
    EXPECT_EQ(r.code, cli::ExitCode::ok);
    EXPECT_EQ(r.out.rfind("rho,error,h1_norm,h1_norm_sqrt_rho,target_norm,iterations\n", 0), 0u);
    EXPECT_NE(r.err.find("slope"), std::string::npos);
}

TEST(Run, AppendixExitCodes)
{
    EXPECT_EQ(run({"verify-appendix", "--sizes", "8,16"}).code, cli::ExitCode::ok);
    const auto bad = run({"verify-appendix", "--sizes", "8,16", "--shrink", "0.1"});
    EXPECT_EQ(bad.code, cli::ExitCode::verification_failure);
    EXPECT_NE(bad.err.find("violated"), std::string::npos);
}

TEST(Run, WritesOutFile)
{
    const auto path = std::filesystem::temp_directory_path() / "bvtrack_cli_test.csv";
    std::filesystem::remove(path);
    const auto r = run({"--out", path.string(), "study", "--levels", "1..1"});
    EXPECT_EQ(r.code, cli::ExitCode::ok);
    EXPECT_TRUE(r.out.empty());
    std::ifstream f(path);
    std::stringstream s;
    s << f.rdbuf();
    EXPECT_EQ(s.str(), std::string(csv_header) + "\n1,27,2.5e-1,1.669e-1,,1,1,1\n");
    std::filesystem::remove(path);

    const auto unwritable = run({"--out", "/nonexistent-dir/x.csv", "study", "--levels", "1..1"});
    EXPECT_EQ(unwritable.code, cli::ExitCode::usage);
}

TEST(Executable, ExitCodesAndOutput)
{
    EXPECT_EQ(exec("--dim 4").code, 1);
    EXPECT_EQ(exec("--bogus").code, 1);
    const auto ok = exec("study --levels 1..1");
    EXPECT_EQ(ok.code, 0);
    EXPECT_EQ(ok.out, std::string(csv_header) + "\n1,27,2.5e-1,1.669e-1,,1,1,1\n");
    EXPECT_EQ(exec("--max-iters 2 --path schur-cg study --levels 3..3").code, 2);
    EXPECT_EQ(exec("verify-appendix --sizes 8,16 --shrink 0.1").code, 3);
    const auto help = exec("--help");
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("verify-appendix"), std::string::npos);
}
