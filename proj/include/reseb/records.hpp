#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reseb/array.hpp"

namespace reseb {

// Year-month of one performance row, e.g. 202001.
struct Period {
    int year = 0;
    int month = 0; // 1..12

    int index() const { return year * 12 + (month - 1); }
    Period next() const { return month == 12 ? Period{year + 1, 1} : Period{year, month + 1}; }
    std::string str() const;
    static Period parse(const std::string& s); // YYYYMM

    auto operator<=>(const Period&) const = default;
};

// One loan-month of raw performance data. Missing numerics and categoricals
// stay missing here; imputation happens during feature engineering.
struct MonthlyRecord {
    std::string loan_id;
    Period period;
    std::optional<int> clds; // months delinquent; empty for non-numeric codes ("RA", blank)
    std::optional<double> current_actual_upb;
    std::optional<double> interest_bearing_upb;
    std::optional<double> current_deferred_upb;
    std::optional<double> current_ir;
    std::optional<double> eltv;
    std::optional<double> current_month_modification_cost;
    std::string modification_flag;               // empty = missing
    std::string delinquency_due_to_disaster;     // empty = missing
    std::string borrower_assistance_status_code; // empty = missing
    std::string ddlpi;                  // raw date text, not a model feature
    std::string defect_settlement_date; // raw date text, not a model feature
};

struct OneHotGroup {
    std::string field;                // record field name
    std::vector<std::string> levels;  // includes "NAN" where missing maps there
    std::string missing_level;        // level used for missing/unknown values
};

// Column layout for the delimited input plus the encoded feature order.
// Loaded from a JSON map so category sets are auditable without rebuilds.
struct ColumnLayout {
    char delimiter = '|';
    std::vector<std::string> columns; // role of each input column, "" to skip
    std::vector<std::string> numeric_features; // encoded first, in this order
    std::vector<OneHotGroup> one_hot_groups;   // encoded after the numerics

    std::int64_t feature_width() const;
    std::vector<std::string> feature_names() const;

    static ColumnLayout defaults();
    static ColumnLayout from_json(const std::string& text);
    std::string to_json() const;
};

struct ParseDiagnostics {
    std::int64_t rows_total = 0;
    std::int64_t rows_ok = 0;
    std::int64_t rows_missing_key = 0; // missing loan_id or period -> rejected
    std::int64_t rows_malformed = 0;   // wrong cell count
    std::int64_t numeric_parse_failures = 0; // cells downgraded to missing
};

// Parses "|"-delimited, headerless performance rows per the layout.
// Malformed rows are counted and skipped; strict mode aborts instead.
std::vector<MonthlyRecord> parse_performance_file(const std::string& path, const ColumnLayout& layout,
                                                  ParseDiagnostics& diag, bool strict = false);
std::vector<MonthlyRecord> parse_performance_lines(const std::vector<std::string>& lines, const ColumnLayout& layout,
                                                   ParseDiagnostics& diag, bool strict = false);

void write_performance_file(const std::string& path, const std::vector<MonthlyRecord>& records,
                            const ColumnLayout& layout);

} // namespace reseb
