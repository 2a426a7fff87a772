#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bvtrack/appendix.hpp"
#include "bvtrack/error.hpp"
#include "bvtrack/ocp.hpp"

namespace bvtrack {

enum class TableFormat { csv, md };

namespace fmt {

// "1.669e-01" -> "1.669e-1"
inline std::string trim_exponent(std::string s)
{
    const auto e = s.find('e');
    if (e == std::string::npos) {
        return s;
    }
    std::string mant = s.substr(0, e);
    std::string exp = s.substr(e + 1);
    std::string sign;
    if (!exp.empty() && (exp[0] == '-' || exp[0] == '+')) {
        if (exp[0] == '-') {
            sign = "-";
        }
        exp.erase(0, 1);
    }
    const auto nz = exp.find_first_not_of('0');
    exp = nz == std::string::npos ? "0" : exp.substr(nz);
    return mant + "e" + sign + exp;
}

/// Scientific notation with 4 significant digits.
inline std::string sci4(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific, 3);
    return trim_exponent(std::string(buf, r.ptr));
}

/// Shortest round-trip scientific notation.
inline std::string sci(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific);
    return trim_exponent(std::string(buf, r.ptr));
}

inline std::string fixed2(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
    return {buf, r.ptr};
}

template <class T>
std::string opt(const std::optional<T>& v, std::string (*f)(T))
{
    return v ? f(*v) : std::string{};
}

inline std::string integer(int v) { return std::to_string(v); }

} // namespace fmt

inline constexpr std::string_view csv_header = "level,dofs,h,error,eoc,iters_full_pcg,iters_scg,iters_pscg";

namespace detail {

inline std::vector<std::string> row_cells(const ConvergenceRow& r)
{
    return {std::to_string(r.level),
            std::to_string(r.dofs),
            fmt::sci(r.h),
            fmt::opt<double>(r.error, fmt::sci4),
            fmt::opt<double>(r.eoc, fmt::fixed2),
            fmt::opt<int>(r.iters_full_pcg, fmt::integer),
            fmt::opt<int>(r.iters_scg, fmt::integer),
            fmt::opt<int>(r.iters_pscg, fmt::integer)};
}

inline std::string markdown(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& body)
{
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = std::max<std::size_t>(header[c].size(), 3);
        for (const auto& row : body) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
        os << '|';
        for (std::size_t c = 0; c < cells.size(); ++c) {
            os << ' ' << std::setw(static_cast<int>(width[c])) << cells[c] << " |";
        }
        os << '\n';
    };
    line(header);
    os << '|';
    for (const auto w : width) {
        os << std::string(w + 1, '-') << ":|";
    }
    os << '\n';
    for (const auto& row : body) {
        line(row);
    }
    return os.str();
}

} // namespace detail

/// CSV or markdown rendering of a convergence table; byte-stable.
[[nodiscard]] inline std::string emit_table(const ConvergenceTable& table, TableFormat format)
{
    if (table.rows.empty()) {
        throw ConfigError("emit_table: empty table");
    }
    std::vector<std::vector<std::string>> body;
    for (const auto& r : table.rows) {
        body.push_back(detail::row_cells(r));
    }
    if (format == TableFormat::md) {
        return detail::markdown({"level", "dofs", "h", "error", "eoc", "#PCG its", "#SCG its", "#PSCG its"}, body);
    }
    std::string out(csv_header);
    out += '\n';
    for (const auto& row : body) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += row[c];
            out += c + 1 < row.size() ? ',' : '\n';
        }
    }
    return out;
}

namespace detail {

template <class T>
std::optional<T> parse_cell(std::string_view cell, const char* what)
{
    if (cell.empty()) {
        return std::nullopt;
    }
    T v{};
    const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (r.ec != std::errc{} || r.ptr != cell.data() + cell.size()) {
        throw ConfigError(std::string("parse_table_csv: bad ") + what + " cell '" + std::string(cell) + "'");
    }
    return v;
}

} // namespace detail

/// Inverse of emit_table(..., csv).
[[nodiscard]] inline ConvergenceTable parse_table_csv(std::string_view text)
{
    ConvergenceTable t;
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != csv_header) {
        throw ConfigError("parse_table_csv: unexpected header");
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string_view> cells;
        std::string_view rest = line;
        for (;;) {
            const auto p = rest.find(',');
            cells.push_back(rest.substr(0, p));
            if (p == std::string_view::npos) {
                break;
            }
            rest.remove_prefix(p + 1);
        }
        if (cells.size() != 8) {
            throw ConfigError("parse_table_csv: expected 8 columns, got " + std::to_string(cells.size()));
        }
        ConvergenceRow r;
        r.level = detail::parse_cell<int>(cells[0], "level").value_or(0);
        r.dofs = detail::parse_cell<std::size_t>(cells[1], "dofs").value_or(0);
        r.h = detail::parse_cell<double>(cells[2], "h").value_or(0.0);
        r.error = detail::parse_cell<double>(cells[3], "error");
        r.eoc = detail::parse_cell<double>(cells[4], "eoc");
        r.iters_full_pcg = detail::parse_cell<int>(cells[5], "iters_full_pcg");
        r.iters_scg = detail::parse_cell<int>(cells[6], "iters_scg");
        r.iters_pscg = detail::parse_cell<int>(cells[7], "iters_pscg");
        t.rows.push_back(std::move(r));
    }
    return t;
}

[[nodiscard]] inline std::string emit_rho_sweep(std::span<const RhoSweepRecord> recs, TableFormat format)
{
    std::vector<std::vector<std::string>> body;
    for (const auto& r : recs) {
        body.push_back({fmt::sci(r.rho), fmt::sci4(r.error), fmt::sci4(r.h1_norm),
                        fmt::sci4(r.h1_norm * std::sqrt(r.rho)), fmt::sci4(r.target_norm), std::to_string(r.iterations)});
    }
    const std::vector<std::string> header{"rho", "error", "h1_norm", "h1_norm_sqrt_rho", "target_norm", "iterations"};
    if (format == TableFormat::md) {
        return detail::markdown(header, body);
    }
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        out += header[c];
        out += c + 1 < header.size() ? ',' : '\n';
    }
    for (const auto& row : body) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += row[c];
            out += c + 1 < row.size() ? ',' : '\n';
        }
    }
    return out;
}

[[nodiscard]] inline std::string emit_appendix_report(const AppendixReport& rep)
{
    std::vector<std::vector<std::string>> body;
    for (const auto& e : rep.estimates) {
        body.push_back({e.name, fmt::sci4(e.proven), fmt::sci4(e.observed), e.passed ? "pass" : "FAIL " + e.violation});
    }
    std::string out = detail::markdown({"estimate", "proven C", "observed C", "status"}, body);
    body.clear();
    for (const auto& o : rep.orders) {
        body.push_back({o.name, fmt::fixed2(o.required), fmt::fixed2(o.observed), o.passed ? "pass" : "FAIL"});
    }
    out += '\n';
    out += detail::markdown({"order check", "required", "observed", "status"}, body);
    return out;
}

} // namespace bvtrack
