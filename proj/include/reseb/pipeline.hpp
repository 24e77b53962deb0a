#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reseb/array.hpp"
#include "reseb/records.hpp"

namespace reseb {

// 19-month sliding window: 14 input months, a 2-month blank period, and a
// 3-month label window.
constexpr std::int64_t kInputMonths = 14;
constexpr std::int64_t kBlankMonths = 2;
constexpr std::int64_t kLabelMonths = 3;
constexpr std::int64_t kWindowMonths = kInputMonths + kBlankMonths + kLabelMonths;
constexpr int kDefaultClds = 3;

// One contiguous run of monthly records for one loan, already encoded.
struct LoanSeries {
    std::string loan_id;
    Period start;
    NumArray features; // L x F
    std::vector<std::optional<int>> clds;

    std::int64_t months() const { return features.extent(0); }
};

struct WindowSample {
    std::string loan_id;
    Period start_period; // period of the first input month
    NumArray inputs;     // kInputMonths x F
    int label = 0;
};

struct PipelineDiagnostics {
    std::int64_t loans = 0;
    std::int64_t series_runs = 0;       // contiguous runs after gap splitting
    std::int64_t contiguity_gaps = 0;
    std::int64_t duplicate_periods = 0;
    std::int64_t unknown_categories = 0;
    std::int64_t candidates = 0;
    std::int64_t removed_nonzero_clds = 0;    // leakage filter
    std::int64_t removed_unavailable_clds = 0;
    std::int64_t kept = 0;
    std::int64_t positives = 0;
    std::int64_t zero_variance_features = 0;
};

// Feature engineering for one loan's records, sorted ascending by period:
// numeric features in layout order (missing imputed as 0), month-over-month
// deltas seeded with 0 at the first month, then the one-hot groups.
NumArray engineer_features(const std::vector<MonthlyRecord>& loan_records, const ColumnLayout& layout,
                           PipelineDiagnostics* diag = nullptr);

// Group by loan, sort by period, split at calendar gaps (gaps are counted,
// never bridged), and encode each run.
std::vector<LoanSeries> build_series(std::vector<MonthlyRecord> records, const ColumnLayout& layout,
                                     PipelineDiagnostics& diag);

// Start offsets (0-based) of every 19-month slice at the given stride.
std::vector<std::int64_t> slice_windows(const LoanSeries& series, std::int64_t stride = 1);

// Label = 1 iff any label-window month has CLDS >= 3. Candidates with any
// nonzero or unavailable CLDS inside the 14 input months are removed.
std::vector<WindowSample> label_and_filter(const LoanSeries& series, const std::vector<std::int64_t>& starts,
                                           PipelineDiagnostics& diag);

// Loan-level split, stratified by whether the loan carries any positive
// sample. No loan id ever appears on both sides.
std::pair<std::vector<WindowSample>, std::vector<WindowSample>>
split_train_test(std::vector<WindowSample> samples, double ratio, std::uint64_t seed);

// Keep every minority-class sample and a uniform random subset of the
// majority class of equal size.
std::vector<WindowSample> undersample(std::vector<WindowSample> train, std::uint64_t seed);

struct ScalingStats {
    std::int64_t numeric_count = 0;
    std::vector<double> mean;   // per numeric feature
    std::vector<double> stddev; // 1.0 where the train column had zero variance
};

ScalingStats fit_scaling(std::span<const WindowSample> train, const ColumnLayout& layout,
                         PipelineDiagnostics* diag = nullptr);
void apply_scaling(std::vector<WindowSample>& samples, const ScalingStats& stats);
void unapply_scaling(std::vector<WindowSample>& samples, const ScalingStats& stats);

struct CohortSummary {
    std::int64_t loan_count = 0;
    double mean_length = 0.0;
    double median_length = 0.0;
    double default_rate = 0.0; // defaulting loans / loans, CLDS >= 3 definition
};

CohortSummary cohort_summary(const std::vector<MonthlyRecord>& records);

struct CohortDataset {
    std::string cohort_id;
    std::int64_t feature_width = 0;
    std::vector<WindowSample> train; // unbalanced; trials undersample per seed
    std::vector<WindowSample> test;
    ScalingStats stats;
};

struct DatasetBuildOptions {
    std::string cohort_id = "synthetic";
    std::int64_t stride = 1;
    double train_ratio = 0.70;
    std::uint64_t seed = 1;
    bool standardize = true;
    bool balanced_test = false; // undersample the test side too (off per default)
};

CohortDataset build_dataset(std::vector<MonthlyRecord> records, const ColumnLayout& layout,
                            const DatasetBuildOptions& opts, PipelineDiagnostics& diag);

// Cohort archive: samples in the RESEB1 container plus a JSON manifest with
// layout, seeds, counts, scaling statistics, and provenance ids.
void save_dataset(const std::string& dir, const CohortDataset& dataset, const ColumnLayout& layout,
                  const DatasetBuildOptions& opts, const PipelineDiagnostics& diag);
CohortDataset load_dataset(const std::string& dir);

} // namespace reseb
