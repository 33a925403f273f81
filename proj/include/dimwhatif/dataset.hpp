#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "dimwhatif/error.hpp"

namespace dimwhatif {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Point2 = Eigen::Vector2d;

struct FeatureStats {
    double mean = 0.0;
    double std = 0.0;  // population formula
    double min = 0.0;
    double max = 0.0;
};

// Named rows x named numeric features. Immutable once built.
class Dataset {
public:
    Dataset(std::vector<std::string> row_ids, std::vector<std::string> feature_names, Matrix values)
        : row_ids_(std::move(row_ids)), feature_names_(std::move(feature_names)), values_(std::move(values)) {
        require(values_.rows() >= 2, "too_few_rows",
                "dataset needs at least 2 rows, got " + std::to_string(values_.rows()));
        require(values_.cols() >= 2, "too_few_features",
                "dataset needs at least 2 features, got " + std::to_string(values_.cols()));
        require(static_cast<Eigen::Index>(row_ids_.size()) == values_.rows(), "dimension_mismatch",
                "row id count does not match value rows");
        require(static_cast<Eigen::Index>(feature_names_.size()) == values_.cols(), "dimension_mismatch",
                "feature name count does not match value columns");
        for (std::size_t r = 0; r < row_ids_.size(); ++r) {
            const auto [it, inserted] = row_index_.emplace(row_ids_[r], r);
            require(inserted, "duplicate_row_id",
                    "duplicate row id '" + row_ids_[r] + "' at row " + std::to_string(r + 1));
        }
        std::unordered_map<std::string, std::size_t> seen;
        for (std::size_t c = 0; c < feature_names_.size(); ++c) {
            require(seen.emplace(feature_names_[c], c).second, "duplicate_feature_name",
                    "duplicate feature name '" + feature_names_[c] + "'");
        }
        for (Eigen::Index c = 0; c < values_.cols(); ++c) {
            for (Eigen::Index r = 0; r < values_.rows(); ++r) {
                require(std::isfinite(values_(r, c)), "non_finite_value",
                        "non-finite value at row '" + row_ids_[static_cast<std::size_t>(r)] + "', column '" +
                            feature_names_[static_cast<std::size_t>(c)] + "'");
            }
        }
    }

    std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }

    const Matrix& values() const { return values_; }
    Vector row(std::size_t r) const { return values_.row(static_cast<Eigen::Index>(r)).transpose(); }

    const std::vector<std::string>& row_ids() const { return row_ids_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }

    std::optional<std::size_t> find_row(std::string_view id) const {
        const auto it = row_index_.find(std::string(id));
        if (it == row_index_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::size_t> find_feature(std::string_view name) const {
        for (std::size_t c = 0; c < feature_names_.size(); ++c) {
            if (feature_names_[c] == name) return c;
        }
        return std::nullopt;
    }

    FeatureStats stats(std::size_t feature) const {
        require(feature < cols(), "index_out_of_range",
                "feature index " + std::to_string(feature) + " out of range [0, " + std::to_string(cols()) + ")");
        const auto column = values_.col(static_cast<Eigen::Index>(feature));
        FeatureStats s;
        s.mean = column.mean();
        s.min = column.minCoeff();
        s.max = column.maxCoeff();
        const double var = (column.array() - s.mean).square().mean();
        s.std = std::sqrt(var);
        // Rounding in the mean can put it a hair outside [min, max] for
        // constant columns.
        s.mean = std::clamp(s.mean, s.min, s.max);
        if (s.min == s.max) s.std = 0.0;
        return s;
    }

    std::vector<FeatureStats> all_stats() const {
        std::vector<FeatureStats> out;
        out.reserve(cols());
        for (std::size_t c = 0; c < cols(); ++c) out.push_back(stats(c));
        return out;
    }

private:
    std::vector<std::string> row_ids_;
    std::vector<std::string> feature_names_;
    Matrix values_;
    std::unordered_map<std::string, std::size_t> row_index_;
};

namespace detail {

// RFC-4180 record splitter. Accepts LF or CRLF line ends and a missing final
// newline. Quoted fields may contain separators, quotes ("") and newlines.
inline std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // BOM

    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };

    for (; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (!field_started && field.empty()) {
                    in_quotes = true;
                    field_started = true;
                } else {
                    field.push_back(ch);
                }
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
                end_record();
                break;
            case '\n':
                end_record();
                break;
            default:
                field.push_back(ch);
                field_started = true;
        }
    }
    require(!in_quotes, "malformed_csv", "unterminated quoted field");
    if (field_started || !field.empty() || !record.empty()) end_record();
    return records;
}

inline std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::optional<double> parse_real(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty()) return std::nullopt;
    if (cell.front() == '+') cell.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace detail

struct CsvOptions {
    // Column holding the row identifiers, by header name or zero-based index.
    std::variant<std::string, std::size_t> id_column = std::size_t{0};
};

inline Dataset load_csv(std::string_view text, const CsvOptions& options = {}) {
    require(detail::trim(text).find_first_not_of("\r\n") != std::string_view::npos, "empty_dataset",
            "CSV input is empty");
    auto records = detail::parse_csv_records(text);
    require(!records.empty(), "empty_dataset", "CSV input is empty");

    const auto& header = records.front();
    std::size_t id_col = 0;
    if (const auto* name = std::get_if<std::string>(&options.id_column)) {
        const auto it = std::find(header.begin(), header.end(), *name);
        require(it != header.end(), "unknown_id_column", "id column '" + *name + "' not found in header");
        id_col = static_cast<std::size_t>(it - header.begin());
    } else {
        id_col = std::get<std::size_t>(options.id_column);
        require(id_col < header.size(), "unknown_id_column",
                "id column index " + std::to_string(id_col) + " exceeds header width");
    }

    std::vector<std::string> features;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != id_col) features.push_back(header[c]);
    }
    const std::size_t n = records.size() - 1;
    require(n >= 2, "too_few_rows", "dataset needs at least 2 rows, got " + std::to_string(n));
    require(features.size() >= 2, "too_few_features",
            "dataset needs at least 2 numeric columns, got " + std::to_string(features.size()));

    std::vector<std::string> ids;
    ids.reserve(n);
    Matrix values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features.size()));
    std::unordered_map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& rec = records[r + 1];
        // Line numbers are 1-based and count the header.
        const std::string where = "line " + std::to_string(r + 2);
        require(rec.size() == header.size(), "ragged_row",
                where + " has " + std::to_string(rec.size()) + " fields, header has " + std::to_string(header.size()));
        const auto [it, inserted] = seen.emplace(rec[id_col], r);
        require(inserted, "duplicate_row_id",
                "duplicate row id '" + rec[id_col] + "' at " + where + " (first seen at line " +
                    std::to_string(it->second + 2) + ")");
        ids.push_back(rec[id_col]);
        Eigen::Index out_col = 0;
        for (std::size_t c = 0; c < rec.size(); ++c) {
            if (c == id_col) continue;
            const auto v = detail::parse_real(rec[c]);
            require(v.has_value(), "non_numeric_cell",
                    "cell at " + where + " (row '" + rec[id_col] + "'), column '" + header[c] +
                        "' is not a finite number: '" + rec[c] + "'");
            values(static_cast<Eigen::Index>(r), out_col++) = *v;
        }
    }
    return Dataset(std::move(ids), std::move(features), std::move(values));
}

namespace detail {

inline std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    return out + "\"";
}

inline std::string format_real(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
    return std::string(buf, ptr);
}

}  // namespace detail

inline std::string to_csv(const Dataset& ds, const std::string& id_header = "id") {
    std::ostringstream out;
    out << detail::quote_csv(id_header);
    for (const auto& f : ds.feature_names()) out << ',' << detail::quote_csv(f);
    out << '\n';
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        out << detail::quote_csv(ds.row_ids()[r]);
        for (std::size_t c = 0; c < ds.cols(); ++c) {
            out << ',' << detail::format_real(ds.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        }
        out << '\n';
    }
    return out.str();
}

inline nlohmann::json to_json(const FeatureStats& s) {
    return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

inline nlohmann::json to_json(const Dataset& ds) {
    nlohmann::json values = nlohmann::json::array();
    for (std::size_t r = 0; r < ds.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < ds.cols(); ++c) {
            row.push_back(ds.values()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
        }
        values.push_back(std::move(row));
    }
    return {{"row_ids", ds.row_ids()}, {"feature_names", ds.feature_names()}, {"values", std::move(values)}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    auto ids = j.at("row_ids").get<std::vector<std::string>>();
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    const auto& rows = j.at("values");
    Matrix values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        require(rows[r].size() == names.size(), "dimension_mismatch", "ragged values array in dataset JSON");
        for (std::size_t c = 0; c < names.size(); ++c) {
            values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
        }
    }
    return Dataset(std::move(ids), std::move(names), std::move(values));
}

}  // namespace dimwhatif
