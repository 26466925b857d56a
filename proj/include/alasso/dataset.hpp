#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "alasso/error.hpp"

namespace alasso {

/// Lag structure of the regression
///   Y_t = sum_i rho_i Y_{t-i} + gamma' W_t + beta' X_{t-1} + eps_t.
///
/// Design columns are always ordered: AR lags, then the W block, then X.
struct ModelSpec {
    std::size_t ar_lags = 0;          // p1
    std::size_t contemporaneous = 0;  // p2, columns of W
    std::size_t lagged = 0;           // p3, columns of X (enter at lag one)
    bool include_intercept = false;
    std::vector<std::string> variable_names;  // p entries once expanded

    std::size_t dim() const noexcept { return ar_lags + contemporaneous + lagged; }

    /// Rows lost at the start of the sample.
    std::size_t lag_trim() const noexcept { return std::max<std::size_t>(ar_lags, 1); }

    void validate() const {
        if (dim() == 0) throw ContractError("model must have at least one regressor");
        if (!variable_names.empty()) {
            if (variable_names.size() != dim())
                throw ContractError("variable_names must have exactly p entries");
            std::set<std::string> seen(variable_names.begin(), variable_names.end());
            if (seen.size() != variable_names.size())
                throw ContractError("variable_names must be distinct");
        }
    }
};

/// Raw observed columns, all of equal length. By convention column 0 is the
/// response, followed by the p2 W columns and the p3 X columns.
struct RawSeriesTable {
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;
    std::vector<std::string> labels;  // optional date labels, one per row

    std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
    std::size_t cols() const noexcept { return columns.size(); }
};

/// Which CSV columns to read. An empty `columns` list selects every non-date
/// column in file order.
struct ColumnMapping {
    std::optional<std::string> date_column;
    std::vector<std::string> columns;
};

/// Means removed when the model carries an unpenalized intercept.
struct Centering {
    double y_mean = 0.0;
    Eigen::VectorXd z_means;
};

/// Response and design of the lagged regression, immutable once built.
struct TimeSeriesDataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd z;  // n x p, column-major
    std::vector<std::string> names;
    ModelSpec spec;
    std::string origin;
    std::optional<Centering> centering;

    std::size_t n() const noexcept { return static_cast<std::size_t>(y.size()); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(z.cols()); }
};

/// Build Z_t = (Y_{t-1}, ..., Y_{t-p1}, W_t', X_{t-1}')' and the aligned response.
inline TimeSeriesDataset build_design(const RawSeriesTable& raw, ModelSpec spec,
                                      std::string origin = {}) {
    spec.validate();
    const std::size_t p1 = spec.ar_lags, p2 = spec.contemporaneous, p3 = spec.lagged;
    if (raw.cols() != 1 + p2 + p3) {
        throw DataError("expected " + std::to_string(1 + p2 + p3) +
                        " raw columns (response + regressors), got " +
                        std::to_string(raw.cols()));
    }
    const std::size_t T = raw.rows();
    for (std::size_t c = 0; c < raw.cols(); ++c) {
        const auto& col = raw.columns[c];
        const std::string name = c < raw.names.size() ? raw.names[c] : "column " + std::to_string(c);
        if (col.size() != T) throw DataError("column '" + name + "' has mismatched length");
        for (std::size_t r = 0; r < T; ++r) {
            if (!std::isfinite(col[r])) {
                throw DataError("non-finite value in column '" + name + "' at row " +
                                std::to_string(r + 1));
            }
        }
    }
    const std::size_t trim = spec.lag_trim();
    if (T <= trim + 1) {
        throw DataError("series of length " + std::to_string(T) + " too short for " +
                        std::to_string(p1) + " autoregressive lag(s)");
    }
    const std::size_t n = T - trim;
    const std::size_t p = spec.dim();
    if (n <= p) {
        throw DataError("effective sample size " + std::to_string(n) +
                        " must exceed the number of regressors " + std::to_string(p));
    }

    if (spec.variable_names.empty()) {
        auto raw_name = [&](std::size_t c) {
            return c < raw.names.size() ? raw.names[c] : "v" + std::to_string(c);
        };
        for (std::size_t i = 1; i <= p1; ++i)
            spec.variable_names.push_back(raw_name(0) + "_lag" + std::to_string(i));
        for (std::size_t j = 0; j < p2; ++j) spec.variable_names.push_back(raw_name(1 + j));
        for (std::size_t j = 0; j < p3; ++j)
            spec.variable_names.push_back(raw_name(1 + p2 + j) + "_lag1");
        spec.validate();
    }

    TimeSeriesDataset out;
    out.y.resize(static_cast<Eigen::Index>(n));
    out.z.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    const auto& Y = raw.columns[0];
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = k + trim;
        const auto row = static_cast<Eigen::Index>(k);
        out.y(row) = Y[t];
        Eigen::Index col = 0;
        for (std::size_t i = 1; i <= p1; ++i) out.z(row, col++) = Y[t - i];
        for (std::size_t j = 0; j < p2; ++j) out.z(row, col++) = raw.columns[1 + j][t];
        for (std::size_t j = 0; j < p3; ++j) out.z(row, col++) = raw.columns[1 + p2 + j][t - 1];
    }

    if (spec.include_intercept) {
        Centering c;
        c.y_mean = out.y.mean();
        c.z_means = out.z.colwise().mean().transpose();
        out.y.array() -= c.y_mean;
        out.z.rowwise() -= c.z_means.transpose();
        out.centering = std::move(c);
    }
    out.names = spec.variable_names;
    out.spec = std::move(spec);
    out.origin = std::move(origin);
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Parse a comma-separated table with a header row.
inline RawSeriesTable parse_csv(std::istream& in, const ColumnMapping& mapping,
                                const std::string& source = "<stream>") {
    std::string line;
    if (!std::getline(in, line)) throw DataError(source + ": missing header row");
    std::vector<std::string> header;
    for (auto& h : detail::split_csv_line(line)) header.emplace_back(detail::trim(h));
    {
        std::set<std::string> seen;
        for (const auto& h : header) {
            if (!seen.insert(h).second) throw DataError(source + ": duplicate column name '" + h + "'");
        }
    }
    auto find = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw DataError(source + ": missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };

    std::optional<std::size_t> date_idx;
    if (mapping.date_column) date_idx = find(*mapping.date_column);
    std::vector<std::size_t> idx;
    if (mapping.columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (!date_idx || c != *date_idx) idx.push_back(c);
    } else {
        for (const auto& name : mapping.columns) idx.push_back(find(name));
    }

    RawSeriesTable table;
    for (auto c : idx) table.names.push_back(header[c]);
    table.columns.resize(idx.size());

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError(source + ": row " + std::to_string(row) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        }
        if (date_idx) table.labels.emplace_back(detail::trim(fields[*date_idx]));
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const auto v = detail::parse_double(fields[idx[k]]);
            if (!v) {
                throw DataError(source + ": cannot parse value at row " + std::to_string(row) +
                                ", column '" + header[idx[k]] + "'");
            }
            if (!std::isfinite(*v)) {
                throw DataError(source + ": non-finite value at row " + std::to_string(row) +
                                ", column '" + header[idx[k]] + "'");
            }
            table.columns[k].push_back(*v);
        }
    }
    return table;
}

inline RawSeriesTable read_csv(const std::string& path, const ColumnMapping& mapping = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return parse_csv(in, mapping, path);
}

/// Values are printed with 17 significant digits, so re-reading is bit-exact.
inline void write_csv(std::ostream& out, const RawSeriesTable& table,
                      const std::string& date_header = "date") {
    const bool with_labels = !table.labels.empty();
    if (with_labels) out << date_header;
    for (std::size_t c = 0; c < table.cols(); ++c) {
        if (with_labels || c > 0) out << ',';
        out << table.names[c];
    }
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        if (with_labels) out << table.labels[r];
        for (std::size_t c = 0; c < table.cols(); ++c) {
            if (with_labels || c > 0) out << ',';
            out << detail::format_double(table.columns[c][r]);
        }
        out << '\n';
    }
}

inline void write_csv(const std::string& path, const RawSeriesTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    write_csv(out, table);
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace alasso
