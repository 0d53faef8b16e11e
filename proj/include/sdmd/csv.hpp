#pragma once

#include "sdmd/error.hpp"
#include "sdmd/types.hpp"

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace sdmd::csv {

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_line(const std::string& line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string escape(const std::string& field)
{
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

/// Reads non-empty records, stripping a trailing '\r' and a UTF-8 BOM.
inline std::vector<std::vector<std::string>> read_records(std::istream& in)
{
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        first = false;
        if (line.empty()) continue;
        rows.push_back(split_line(line));
    }
    return rows;
}

/// A dense matrix with row and column labels, as stored in block/model CSV files.
struct LabeledMatrix {
    Labels row_labels;
    Labels col_labels;
    Matrix values;
};

/// Layout: header "label,<col1>,...", then one "<row>,v,v,..." record per row.
inline void write_matrix(std::ostream& out, const Labels& rows, const Labels& cols, const Matrix& m)
{
    out << "label";
    for (const auto& c : cols) out << ',' << escape(c);
    out << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << escape(rows[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << format_double(m(i, j));
        out << '\n';
    }
}

inline LabeledMatrix read_matrix(std::istream& in, const std::string& source)
{
    const auto rows = read_records(in);
    if (rows.empty()) throw data_error("empty matrix file: " + source);
    LabeledMatrix lm;
    lm.col_labels.assign(rows[0].begin() + 1, rows[0].end());
    const auto ncols = lm.col_labels.size();
    lm.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(ncols));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != ncols + 1)
            throw data_error(source + ": row " + std::to_string(r + 1) + " has " +
                             std::to_string(rows[r].size()) + " fields, expected " +
                             std::to_string(ncols + 1));
        lm.row_labels.push_back(rows[r][0]);
        for (std::size_t c = 0; c < ncols; ++c) {
            double v = 0.0;
            if (!parse_double(rows[r][c + 1], v) || !std::isfinite(v))
                throw data_error(source + ": non-numeric cell '" + rows[r][c + 1] + "' at row " +
                                 std::to_string(r + 1));
            lm.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return lm;
}

} // namespace sdmd::csv
