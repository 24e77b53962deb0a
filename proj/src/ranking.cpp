#include "reseb/ranking.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace reseb {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, delim)) out.push_back(cell);
    if (!line.empty() && line.back() == delim) out.push_back("");
    return out;
}

std::optional<double> parse_cell(const std::string& s) {
    if (s.empty() || s == "NA" || s == "na" || s == "nan") return std::nullopt;
    return std::stod(s);
}

std::string cell_str(const std::optional<double>& v) {
    if (!v) return "NA";
    std::ostringstream os;
    os.precision(12);
    os << *v;
    return os.str();
}

const char* kHeader = "model,cohort,trial,accuracy,precision,recall,f1,auc";

// metric accessors in the fixed AvgR order
using Getter = std::optional<double> MetricsReport::*;
constexpr Getter kMetricFields[5] = {&MetricsReport::accuracy, &MetricsReport::precision, &MetricsReport::recall,
                                     &MetricsReport::f1, &MetricsReport::auc};

double* rank_slot(RankRow& row, int metric) {
    switch (metric) {
        case 0: return &row.acc_rank;
        case 1: return &row.pre_rank;
        case 2: return &row.rec_rank;
        case 3: return &row.f1_rank;
        default: return &row.auc_rank;
    }
}

} // namespace

MetricTable load_metric_table(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ContractError("cannot open metric table '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw ContractError("metric table '" + path + "' is empty");
    if (line.rfind("model,cohort,trial", 0) != 0) {
        throw ContractError("metric table '" + path + "' has an unexpected header: " + line);
    }
    MetricTable t;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_line(line, ',');
        if (cells.size() != 8) {
            throw ContractError("metric table '" + path + "' line " + std::to_string(lineno) + ": expected 8 cells");
        }
        MetricRow r;
        r.model = cells[0];
        r.cohort = cells[1];
        r.trial = (cells[2] == "mean" || cells[2].empty()) ? -1 : std::stoi(cells[2]);
        r.accuracy = parse_cell(cells[3]);
        r.precision = parse_cell(cells[4]);
        r.recall = parse_cell(cells[5]);
        r.f1 = parse_cell(cells[6]);
        r.auc = parse_cell(cells[7]);
        t.rows.push_back(std::move(r));
    }
    return t;
}

void save_metric_table(const std::string& path, const MetricTable& table) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot write metric table '" + path + "'");
    os << kHeader << "\n";
    for (const auto& r : table.rows) {
        os << r.model << "," << r.cohort << "," << (r.trial < 0 ? std::string("mean") : std::to_string(r.trial))
           << "," << cell_str(r.accuracy) << "," << cell_str(r.precision) << "," << cell_str(r.recall) << ","
           << cell_str(r.f1) << "," << cell_str(r.auc) << "\n";
    }
}

std::vector<double> fractional_ranks_desc(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mean_rank = static_cast<double>(i + 1 + j + 1) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

std::map<std::string, std::map<std::string, MetricsReport>> aggregate_by_cohort(const MetricTable& table) {
    struct Acc {
        double sums[5] = {0, 0, 0, 0, 0};
        int counts[5] = {0, 0, 0, 0, 0};
        int rows = 0;
        bool undefined = false;
    };
    std::map<std::string, std::map<std::string, Acc>> acc;
    for (const auto& r : table.rows) {
        Acc& a = acc[r.cohort][r.model];
        ++a.rows;
        const std::optional<double> vals[5] = {r.accuracy, r.precision, r.recall, r.f1, r.auc};
        for (int m = 0; m < 5; ++m) {
            if (vals[m]) {
                a.sums[m] += *vals[m];
                ++a.counts[m];
            } else {
                a.undefined = true;
            }
        }
    }
    std::map<std::string, std::map<std::string, MetricsReport>> out;
    for (auto& [cohort, models] : acc) {
        for (auto& [model, a] : models) {
            if (a.undefined) {
                throw ContractError("metric table has undefined metrics for model '" + model + "' in cohort '" +
                                    cohort + "'; ranking refuses partial input");
            }
            MetricsReport r;
            for (int m = 0; m < 5; ++m) {
                r.*kMetricFields[m] = a.sums[m] / static_cast<double>(a.counts[m]);
            }
            out[cohort][model] = r;
        }
    }
    return out;
}

RankTable avgr_cohort(const std::map<std::string, MetricsReport>& per_model, const std::string& cohort) {
    if (per_model.empty()) throw ContractError("avgr_cohort: no models for cohort '" + cohort + "'");
    RankTable table;
    table.group = cohort;
    std::vector<std::string> models;
    for (const auto& [m, rep] : per_model) {
        if (!rep.fully_defined()) {
            throw ContractError("avgr_cohort: undefined metric for model '" + m + "' in cohort '" + cohort + "'");
        }
        models.push_back(m);
        table.rows.push_back(RankRow{m, 0, 0, 0, 0, 0, 0});
    }
    for (int metric = 0; metric < 5; ++metric) {
        std::vector<double> vals;
        vals.reserve(models.size());
        for (const auto& m : models) vals.push_back(*(per_model.at(m).*kMetricFields[metric]));
        auto ranks = fractional_ranks_desc(vals);
        for (std::size_t i = 0; i < models.size(); ++i) {
            *rank_slot(table.rows[i], metric) = ranks[i];
            table.rows[i].avg_rank += ranks[i] / 5.0;
        }
    }
    return table;
}

RankTable avgr_year(const std::map<std::string, std::map<std::string, MetricsReport>>& per_quarter,
                    const std::string& year) {
    if (per_quarter.size() != 4) {
        throw ContractError("avgr_year: year '" + year + "' needs exactly 4 quarters, got " +
                            std::to_string(per_quarter.size()));
    }
    std::set<std::string> model_set;
    for (const auto& [q, models] : per_quarter) {
        for (const auto& [m, rep] : models) {
            if (!rep.fully_defined()) {
                throw ContractError("avgr_year: undefined metric for model '" + m + "' in '" + q + "'");
            }
            model_set.insert(m);
        }
    }
    for (const auto& [q, models] : per_quarter) {
        if (models.size() != model_set.size()) {
            throw ContractError("avgr_year: quarter '" + q + "' is missing models");
        }
    }

    RankTable table;
    table.group = year;
    std::vector<std::string> models(model_set.begin(), model_set.end());
    for (const auto& m : models) table.rows.push_back(RankRow{m, 0, 0, 0, 0, 0, 0});

    for (int metric = 0; metric < 5; ++metric) {
        // pool all (model, quarter) entries, rank inside the pool
        std::vector<double> vals;
        std::vector<std::size_t> model_of;
        for (const auto& [q, reps] : per_quarter) {
            for (std::size_t i = 0; i < models.size(); ++i) {
                vals.push_back(*(reps.at(models[i]).*kMetricFields[metric]));
                model_of.push_back(i);
            }
        }
        auto ranks = fractional_ranks_desc(vals);
        for (std::size_t k = 0; k < ranks.size(); ++k) {
            // per-metric slot keeps the mean over the 4 quarterly pooled ranks
            *rank_slot(table.rows[model_of[k]], metric) += ranks[k] / 4.0;
            table.rows[model_of[k]].avg_rank += ranks[k] / 20.0;
        }
    }
    return table;
}

std::vector<RankTable> rank_tables(const MetricTable& table, const std::string& group) {
    auto per_cohort = aggregate_by_cohort(table);
    std::vector<RankTable> out;
    if (group == "cohort") {
        for (const auto& [cohort, models] : per_cohort) {
            out.push_back(avgr_cohort(models, cohort));
        }
        return out;
    }
    if (group == "year") {
        std::map<std::string, std::map<std::string, std::map<std::string, MetricsReport>>> by_year;
        for (auto& [cohort, models] : per_cohort) {
            const auto qpos = cohort.find('Q');
            if (qpos == std::string::npos) {
                throw ContractError("cohort id '" + cohort + "' has no quarter marker; cannot group by year");
            }
            by_year[cohort.substr(0, qpos)][cohort] = models;
        }
        for (const auto& [year, quarters] : by_year) {
            out.push_back(avgr_year(quarters, year));
        }
        return out;
    }
    throw ConfigError("unknown rank grouping '" + group + "' (expected cohort|year)");
}

void save_rank_tables(const std::string& path, const std::vector<RankTable>& tables) {
    std::ofstream os(path);
    if (!os) throw ContractError("cannot write rank table '" + path + "'");
    os << "group,model,acc_rank,pre_rank,rec_rank,f1_rank,auc_rank,avg_rank\n";
    os.precision(10);
    for (const auto& t : tables) {
        for (const auto& r : t.rows) {
            os << t.group << "," << r.model << "," << r.acc_rank << "," << r.pre_rank << "," << r.rec_rank << ","
               << r.f1_rank << "," << r.auc_rank << "," << r.avg_rank << "\n";
        }
    }
}

} // namespace reseb
