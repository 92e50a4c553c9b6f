#pragma once

#include "streamnmf/basis_selection.hpp"
#include "streamnmf/dataset.hpp"
#include "streamnmf/estimation.hpp"
#include "streamnmf/relaxed_basis.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace streamnmf {

inline std::vector<std::string> psi_column_names(const BasisSelectionParams&) {
    return {"p", "q"};
}
inline std::vector<std::string> psi_column_names(const RelaxedParams&) { return {"alpha"}; }

inline Vector psi_values(const BasisSelectionParams& psi) {
    Vector v(2);
    v << psi.p, psi.q;
    return v;
}
inline Vector psi_values(const RelaxedParams& psi) {
    Vector v(1);
    v << psi.alpha;
    return v;
}

/// Trace CSV: header `t,B_1_1,...,B_M_K[,psi...]`, one row per snapshot,
/// floating values at 17 significant digits so a re-import is exact.
template <StateProcess P>
void write_trace_csv(const std::filesystem::path& path, const EstimateTrace<P>& trace,
                     bool include_psi = true) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write trace: " + path.string());
    require(!trace.empty(), "write_trace_csv: empty trace");
    const Eigen::Index m = trace.front().theta.B.rows();
    const Eigen::Index k = trace.front().theta.B.cols();
    out << "t";
    for (Eigen::Index r = 0; r < m; ++r)
        for (Eigen::Index c = 0; c < k; ++c) out << ",B_" << r + 1 << "_" << c + 1;
    if (include_psi)
        for (const std::string& name : psi_column_names(trace.front().theta.psi))
            out << ',' << name;
    out << '\n';
    for (const TraceEntry<P>& entry : trace) {
        out << entry.t;
        for (Eigen::Index r = 0; r < m; ++r)
            for (Eigen::Index c = 0; c < k; ++c) out << ',' << format_double(entry.theta.B(r, c));
        if (include_psi) {
            const Vector psi = psi_values(entry.theta.psi);
            for (Eigen::Index i = 0; i < psi.size(); ++i) out << ',' << format_double(psi(i));
        }
        out << '\n';
    }
}

/// A trace read back as raw columns.
struct TraceTable {
    std::vector<std::string> columns; // value column names, no leading "t"
    std::vector<long> times;
    std::vector<Vector> rows;
};

inline TraceTable read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open trace: " + path.string());
    TraceTable table;
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw data_error(path.string() + ": empty trace file");
    ++line_no;
    {
        std::stringstream header(line);
        std::string cell;
        bool first = true;
        while (std::getline(header, cell, ',')) {
            if (first) {
                if (cell != "t")
                    throw data_error(path.string() + ": first column must be 't'");
                first = false;
            } else {
                table.columns.push_back(cell);
            }
        }
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        const std::string ctx = path.string() + ":" + std::to_string(line_no);
        if (!std::getline(row, cell, ',')) throw data_error(ctx + ": missing time column");
        table.times.push_back(static_cast<long>(parse_integer(cell, ctx)));
        Vector values(static_cast<Eigen::Index>(table.columns.size()));
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            if (!std::getline(row, cell, ',')) throw data_error(ctx + ": short row");
            values(i) = parse_double(cell, ctx);
        }
        if (std::getline(row, cell, ',')) throw data_error(ctx + ": extra fields");
        table.rows.push_back(std::move(values));
    }
    return table;
}

inline void write_trace_table(const std::filesystem::path& path, const TraceTable& table) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write trace: " + path.string());
    out << "t";
    for (const std::string& name : table.columns) out << ',' << name;
    out << '\n';
    for (size_t r = 0; r < table.rows.size(); ++r) {
        out << table.times[r];
        const Vector& values = table.rows[r];
        for (Eigen::Index i = 0; i < values.size(); ++i) out << ',' << format_double(values(i));
        out << '\n';
    }
}

/// Projection of a trace onto the time column and the M*K basis-entry
/// columns, the per-entry trajectory file used for plotting.
inline TraceTable export_basis_trajectory(const TraceTable& table) {
    TraceTable out;
    out.times = table.times;
    std::vector<Eigen::Index> keep;
    for (size_t i = 0; i < table.columns.size(); ++i) {
        if (table.columns[i].rfind("B_", 0) == 0) {
            keep.push_back(static_cast<Eigen::Index>(i));
            out.columns.push_back(table.columns[i]);
        }
    }
    require(!keep.empty(), "trace has no basis-entry columns");
    out.rows.reserve(table.rows.size());
    for (const Vector& row : table.rows) {
        Vector values(static_cast<Eigen::Index>(keep.size()));
        for (size_t i = 0; i < keep.size(); ++i)
            values(static_cast<Eigen::Index>(i)) = row(keep[i]);
        out.rows.push_back(std::move(values));
    }
    return out;
}

} // namespace streamnmf
