#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reseb/metrics.hpp"

namespace reseb {

// One metric-table row: per (model, cohort, trial) results. trial < 0 marks
// an already-aggregated mean row.
struct MetricRow {
    std::string model;
    std::string cohort;
    int trial = -1;
    std::optional<double> accuracy, precision, recall, f1, auc;
};

struct MetricTable {
    std::vector<MetricRow> rows;
};

// Delimited text with the one-line header
// model,cohort,trial,accuracy,precision,recall,f1,auc
MetricTable load_metric_table(const std::string& path);
void save_metric_table(const std::string& path, const MetricTable& table);

// Fractional (mean-of-span) ranks, rank 1 for the largest value. Ties share
// the mean of the ranks they cover, so ranks always sum to k(k+1)/2.
std::vector<double> fractional_ranks_desc(const std::vector<double>& values);

struct RankRow {
    std::string model;
    double acc_rank = 0, pre_rank = 0, rec_rank = 0, f1_rank = 0, auc_rank = 0;
    double avg_rank = 0;
};

struct RankTable {
    std::string group; // cohort id or year
    std::vector<RankRow> rows;
};

// Mean over trials per (model, cohort); refuses tables where any metric is
// undefined for a (model, cohort) pair.
std::map<std::string, std::map<std::string, MetricsReport>> aggregate_by_cohort(const MetricTable& table);

// Rank the models inside one cohort on each of the five metrics and average.
RankTable avgr_cohort(const std::map<std::string, MetricsReport>& per_model, const std::string& cohort);

// Pool the 4 quarters x models entries per metric, rank inside the pool, and
// average each model's 20 pooled ranks. Requires exactly 4 quarters.
RankTable avgr_year(const std::map<std::string, std::map<std::string, MetricsReport>>& per_quarter,
                    const std::string& year);

// group = "cohort" or "year" over an arbitrary metric table
std::vector<RankTable> rank_tables(const MetricTable& table, const std::string& group);

void save_rank_tables(const std::string& path, const std::vector<RankTable>& tables);

} // namespace reseb
