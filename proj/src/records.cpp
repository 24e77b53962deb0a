#include "reseb/records.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace reseb {

std::string Period::str() const {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%04d%02d", year, month);
    return buf;
}

Period Period::parse(const std::string& s) {
    if (s.size() != 6) throw ContractError("period '" + s + "' is not YYYYMM");
    int y = 0, m = 0;
    auto [p1, e1] = std::from_chars(s.data(), s.data() + 4, y);
    auto [p2, e2] = std::from_chars(s.data() + 4, s.data() + 6, m);
    if (e1 != std::errc{} || e2 != std::errc{} || m < 1 || m > 12) {
        throw ContractError("period '" + s + "' is not YYYYMM");
    }
    return Period{y, m};
}

std::int64_t ColumnLayout::feature_width() const {
    std::int64_t w = static_cast<std::int64_t>(numeric_features.size());
    for (const auto& g : one_hot_groups) w += static_cast<std::int64_t>(g.levels.size());
    return w;
}

std::vector<std::string> ColumnLayout::feature_names() const {
    std::vector<std::string> names = numeric_features;
    for (const auto& g : one_hot_groups) {
        for (const auto& lvl : g.levels) names.push_back(g.field + "_" + lvl);
    }
    return names;
}

ColumnLayout ColumnLayout::defaults() {
    ColumnLayout l;
    l.delimiter = '|';
    l.columns = {"loan_id", "period", "clds", "current_actual_upb", "interest_bearing_upb",
                 "current_deferred_upb", "current_ir", "eltv", "modification_flag",
                 "delinquency_due_to_disaster", "borrower_assistance_status_code",
                 "current_month_modification_cost", "ddlpi", "defect_settlement_date"};
    l.numeric_features = {"current_actual_upb", "interest_bearing_upb", "current_deferred_upb",
                          "current_ir", "eltv", "current_month_modification_cost",
                          "interest_bearing_upb_delta", "current_actual_upb_delta"};
    l.one_hot_groups = {
        {"modification_flag", {"Y", "P", "N"}, "N"},
        {"delinquency_due_to_disaster", {"Y", "NAN"}, "NAN"},
        {"borrower_assistance_status_code", {"F", "R", "T", "NAN"}, "NAN"},
    };
    return l;
}

ColumnLayout ColumnLayout::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ColumnLayout l;
    const std::string d = j.value("delimiter", "|");
    if (d.size() != 1) throw ConfigError("layout delimiter must be a single character");
    l.delimiter = d[0];
    l.columns = j.at("columns").get<std::vector<std::string>>();
    l.numeric_features = j.at("numeric_features").get<std::vector<std::string>>();
    for (const auto& g : j.at("one_hot_groups")) {
        OneHotGroup grp;
        grp.field = g.at("field").get<std::string>();
        grp.levels = g.at("levels").get<std::vector<std::string>>();
        grp.missing_level = g.at("missing_level").get<std::string>();
        bool found = false;
        for (const auto& lvl : grp.levels) found = found || lvl == grp.missing_level;
        if (!found) throw ConfigError("layout group '" + grp.field + "': missing_level not among levels");
        l.one_hot_groups.push_back(std::move(grp));
    }
    return l;
}

std::string ColumnLayout::to_json() const {
    nlohmann::json j;
    j["delimiter"] = std::string(1, delimiter);
    j["columns"] = columns;
    j["numeric_features"] = numeric_features;
    j["one_hot_groups"] = nlohmann::json::array();
    for (const auto& g : one_hot_groups) {
        j["one_hot_groups"].push_back({{"field", g.field}, {"levels", g.levels}, {"missing_level", g.missing_level}});
    }
    return j.dump(2);
}

namespace {

std::optional<double> parse_numeric(const std::string& s, ParseDiagnostics& diag) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [p, e] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (e != std::errc{} || p != s.data() + s.size()) {
        ++diag.numeric_parse_failures;
        return std::nullopt;
    }
    return v;
}

std::optional<int> parse_clds(const std::string& s) {
    if (s.empty()) return std::nullopt;
    int v = 0;
    auto [p, e] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (e != std::errc{} || p != s.data() + s.size() || v < 0) return std::nullopt; // "RA" and friends
    return v;
}

} // namespace

std::vector<MonthlyRecord> parse_performance_lines(const std::vector<std::string>& lines, const ColumnLayout& layout,
                                                   ParseDiagnostics& diag, bool strict) {
    std::vector<MonthlyRecord> out;
    out.reserve(lines.size());
    for (const auto& line : lines) {
        if (line.empty()) continue;
        ++diag.rows_total;
        std::vector<std::string> cells;
        {
            std::string cell;
            std::stringstream ss(line);
            while (std::getline(ss, cell, layout.delimiter)) cells.push_back(cell);
            if (!line.empty() && line.back() == layout.delimiter) cells.push_back("");
        }
        if (cells.size() != layout.columns.size()) {
            ++diag.rows_malformed;
            if (strict) {
                throw ContractError("malformed row (expected " + std::to_string(layout.columns.size()) +
                                    " cells, got " + std::to_string(cells.size()) + "): " + line);
            }
            continue;
        }
        MonthlyRecord r;
        bool have_period = false;
        bool bad_period = false;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string& role = layout.columns[c];
            const std::string& cell = cells[c];
            if (role == "loan_id") r.loan_id = cell;
            else if (role == "period") {
                if (!cell.empty()) {
                    try {
                        r.period = Period::parse(cell);
                        have_period = true;
                    } catch (const ContractError&) {
                        bad_period = true;
                    }
                }
            } else if (role == "clds") r.clds = parse_clds(cell);
            else if (role == "current_actual_upb") r.current_actual_upb = parse_numeric(cell, diag);
            else if (role == "interest_bearing_upb") r.interest_bearing_upb = parse_numeric(cell, diag);
            else if (role == "current_deferred_upb") r.current_deferred_upb = parse_numeric(cell, diag);
            else if (role == "current_ir") r.current_ir = parse_numeric(cell, diag);
            else if (role == "eltv") r.eltv = parse_numeric(cell, diag);
            else if (role == "current_month_modification_cost") r.current_month_modification_cost = parse_numeric(cell, diag);
            else if (role == "modification_flag") r.modification_flag = cell;
            else if (role == "delinquency_due_to_disaster") r.delinquency_due_to_disaster = cell;
            else if (role == "borrower_assistance_status_code") r.borrower_assistance_status_code = cell;
            else if (role == "ddlpi") r.ddlpi = cell;
            else if (role == "defect_settlement_date") r.defect_settlement_date = cell;
            else if (role.empty()) continue; // explicitly skipped column
            else throw ConfigError("layout names unknown column role '" + role + "'");
        }
        if (r.loan_id.empty() || !have_period || bad_period) {
            ++diag.rows_missing_key;
            if (strict) throw ContractError("row missing loan id or period: " + line);
            continue;
        }
        ++diag.rows_ok;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<MonthlyRecord> parse_performance_file(const std::string& path, const ColumnLayout& layout,
                                                  ParseDiagnostics& diag, bool strict) {
    std::ifstream is(path);
    if (!is) throw ContractError("cannot open performance file '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return parse_performance_lines(lines, layout, diag, strict);
}

void write_performance_file(const std::string& path, const std::vector<MonthlyRecord>& records,
                            const ColumnLayout& layout) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot write performance file '" + path + "'");
    os.precision(10);
    for (const auto& r : records) {
        for (std::size_t c = 0; c < layout.columns.size(); ++c) {
            if (c) os << layout.delimiter;
            const std::string& role = layout.columns[c];
            auto num = [&](const std::optional<double>& v) {
                if (v) os << *v;
            };
            if (role == "loan_id") os << r.loan_id;
            else if (role == "period") os << r.period.str();
            else if (role == "clds") {
                if (r.clds) os << *r.clds;
            } else if (role == "current_actual_upb") num(r.current_actual_upb);
            else if (role == "interest_bearing_upb") num(r.interest_bearing_upb);
            else if (role == "current_deferred_upb") num(r.current_deferred_upb);
            else if (role == "current_ir") num(r.current_ir);
            else if (role == "eltv") num(r.eltv);
            else if (role == "current_month_modification_cost") num(r.current_month_modification_cost);
            else if (role == "modification_flag") os << r.modification_flag;
            else if (role == "delinquency_due_to_disaster") os << r.delinquency_due_to_disaster;
            else if (role == "borrower_assistance_status_code") os << r.borrower_assistance_status_code;
            else if (role == "ddlpi") os << r.ddlpi;
            else if (role == "defect_settlement_date") os << r.defect_settlement_date;
        }
        os << "\n";
    }
}

} // namespace reseb
