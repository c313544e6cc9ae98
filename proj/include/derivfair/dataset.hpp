#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "derivfair/autodiff.hpp"
#include "derivfair/errors.hpp"

namespace derivfair {

/// Column-named numeric table with one designated outcome column.
struct Dataset {
    std::vector<std::string> columns;
    Matrix values;  // rows x columns
    std::string outcome;
    bool binary_outcome = false;

    Eigen::Index rows() const { return values.rows(); }

    int column_index(const std::string& name) const {
        const auto it = std::find(columns.begin(), columns.end(), name);
        if (it == columns.end()) throw SchemaError("dataset has no column '" + name + "'");
        return static_cast<int>(it - columns.begin());
    }

    bool has_column(const std::string& name) const {
        return std::find(columns.begin(), columns.end(), name) != columns.end();
    }

    Vector column(const std::string& name) const { return values.col(column_index(name)); }

    Vector outcome_values() const { return column(outcome); }

    /// Columns in the requested order.
    Matrix select(const std::vector<std::string>& names) const {
        Matrix out(values.rows(), static_cast<Eigen::Index>(names.size()));
        for (std::size_t j = 0; j < names.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = values.col(column_index(names[j]));
        return out;
    }

    Dataset subset(const std::vector<std::size_t>& row_ids) const {
        Dataset d{columns, Matrix(static_cast<Eigen::Index>(row_ids.size()), values.cols()), outcome, binary_outcome};
        for (std::size_t i = 0; i < row_ids.size(); ++i)
            d.values.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(row_ids[i]));
        return d;
    }

    /// No missing values; outcome exists and is 0/1 when flagged binary.
    void validate() const {
        if (values.cols() != static_cast<Eigen::Index>(columns.size()))
            throw SchemaError("dataset: column names do not match matrix width");
        if (!values.allFinite()) throw SchemaError("dataset: contains missing or non-finite values");
        const Vector y = outcome_values();
        if (binary_outcome)
            for (Eigen::Index i = 0; i < y.size(); ++i)
                if (y[i] != 0.0 && y[i] != 1.0) throw SchemaError("dataset: binary outcome has a value outside {0,1}");
    }
};

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (std::size_t j = 0; j < d.columns.size(); ++j) out << (j ? "," : "") << d.columns[j];
    out << '\n';
    for (Eigen::Index i = 0; i < d.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.values.cols(); ++j) out << (j ? "," : "") << format_double(d.values(i, j));
        out << '\n';
    }
    if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

namespace detail {

inline std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            cell += c;
        } else if (c == ',' && !quoted) {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(trim(cell));
    return out;
}

}  // namespace detail

/// Reads a headered numeric CSV ('.' decimal separator). Only the columns in
/// `keep` are retained when it is non-empty.
inline Dataset read_csv(const std::string& path, const std::string& outcome, bool binary_outcome,
                        const std::vector<std::string>& keep = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("'" + path + "' is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = detail::split_csv_line(line);

    std::vector<std::string> wanted = keep.empty() ? header : keep;
    std::vector<int> source;
    for (const auto& name : wanted) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("'" + path + "' has no column '" + name + "'");
        source.push_back(static_cast<int>(it - header.begin()));
    }

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw SchemaError("'" + path + "' line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields");
        std::vector<double> row;
        for (int s : source) {
            const std::string& cell = cells[static_cast<std::size_t>(s)];
            std::istringstream ss(cell);
            ss.imbue(std::locale::classic());
            double v;
            if (cell.empty() || !(ss >> v) || !(ss >> std::ws).eof())
                throw SchemaError("'" + path + "' line " + std::to_string(line_no) + ": non-numeric value '" + cell +
                                  "'");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    Dataset d{wanted, Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(wanted.size())), outcome,
              binary_outcome};
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < wanted.size(); ++j)
            d.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    d.validate();
    return d;
}

}  // namespace derivfair
