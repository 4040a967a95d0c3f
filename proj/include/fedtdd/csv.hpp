#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fedtdd/error.hpp"
#include "fedtdd/matrix.hpp"

namespace fedtdd {

// Shortest round-trippable decimal form; locale-independent, so report files
// are byte-identical across runs with the same seed.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

struct SeriesCsv {
    Matrix values;
    std::vector<std::string> feature_names;
};

// Header row of feature names, one row per timestep, decimal-point reals.
// Empty cells are rejected: missingness is injected downstream, never read
// from raw input files.
inline SeriesCsv read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error("csv: '" + path + "' is empty");
    SeriesCsv out;
    out.feature_names = split_csv_line(line);
    const std::size_t cols = out.feature_names.size();
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != cols)
            throw Error("csv: '" + path + "' line " + std::to_string(lineno) +
                        ": expected " + std::to_string(cols) + " fields, got " +
                        std::to_string(fields.size()));
        for (const auto& f : fields) {
            if (f.empty())
                throw Error("csv: '" + path + "' line " + std::to_string(lineno) +
                            ": missing cells are not supported");
            double v = 0.0;
            const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc{} || res.ptr != f.data() + f.size())
                throw Error("csv: '" + path + "' line " + std::to_string(lineno) +
                            ": cannot parse '" + f + "' as a real number");
            values.push_back(v);
        }
        ++rows;
    }
    out.values = Matrix(rows, cols);
    out.values.data() = std::move(values);
    return out;
}

inline void write_series_csv(const std::string& path, const Matrix& m,
                             const std::vector<std::string>& feature_names) {
    require(feature_names.size() == m.cols(), "csv: header width mismatch");
    std::ofstream out(path);
    if (!out) throw Error("csv: cannot write '" + path + "'");
    for (std::size_t c = 0; c < feature_names.size(); ++c) {
        if (c) out << ',';
        out << feature_names[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

// Parallel 0/1 mask file matching a series export.
inline void write_mask_csv(const std::string& path, const Mask& m,
                           const std::vector<std::string>& feature_names) {
    require(feature_names.size() == m.cols(), "csv: header width mismatch");
    std::ofstream out(path);
    if (!out) throw Error("csv: cannot write '" + path + "'");
    for (std::size_t c = 0; c < feature_names.size(); ++c) {
        if (c) out << ',';
        out << feature_names[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << int(m(r, c));
        }
        out << '\n';
    }
}

// Generic row writer for report files (trace, metrics, samples).
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw Error("csv: cannot write '" + path + "'");
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace fedtdd
