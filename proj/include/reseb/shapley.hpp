#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "reseb/model.hpp"
#include "reseb/pipeline.hpp"

namespace reseb {

using PredictFn = std::function<double(std::span<const double>)>;
using BatchPredictFn = std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

// Exact Shapley values over at most 12 active columns (full coalition
// enumeration). Inactive columns stay pinned at the background values. The
// value function replaces out-of-coalition columns with the background.
struct ExactShapley {
    std::vector<double> values; // one per active column
    double base = 0.0;          // value of the empty coalition
};
ExactShapley exact_shapley(const PredictFn& f, std::span<const double> x, std::span<const double> background,
                           std::span<const std::size_t> active);

// Permutation-sampling estimate over all columns with per-column standard
// errors. Deterministic per seed. base + sum(values) telescopes to f(x).
struct SampledShapley {
    std::vector<double> values;
    std::vector<double> std_error;
    double base = 0.0;
    int n_permutations = 0;
};
SampledShapley sampled_shapley(const BatchPredictFn& f, std::span<const double> x,
                               std::span<const double> background, int n_permutations, std::uint64_t seed);

// Column-wise mean over `count` training samples drawn with the given seed.
std::vector<double> background_mean(std::span<const WindowSample> train, int count, std::uint64_t seed);

struct SampleAttribution {
    std::string loan_id;
    Period start_period;
    int label = 0;
    double prediction = 0.0;
    double base = 0.0;
    std::vector<double> values;    // flattened months x features
    std::vector<double> std_error;
    std::vector<double> raw;       // the explained inputs, same flattening
};

// Explains each sample against the model; parallel across samples.
std::vector<SampleAttribution> explain_model(const Model& model, std::span<const WindowSample> samples,
                                             std::span<const double> background, int n_permutations,
                                             std::uint64_t seed, int workers = 1);

struct ImportanceReport {
    std::vector<double> mean_abs;                   // per flattened column
    std::vector<int> rank;                          // 1 = most important; ties break to the lower column index
    std::map<std::string, int> top_month_counts;    // per base feature: months inside the top-k
    int top_k = 50;
};
ImportanceReport importance_report(const std::vector<SampleAttribution>& attributions,
                                   const std::vector<std::string>& feature_names, int top_k = 50);

// The point cloud a summary plot renders: one row per (sample, column) with
// the shapley value and the raw feature value.
void write_summary_plot_data(const std::string& path, const std::vector<SampleAttribution>& attributions,
                             const std::vector<std::string>& feature_names);

void write_attributions(const std::string& path, const std::vector<SampleAttribution>& attributions,
                        const std::vector<std::string>& feature_names);

} // namespace reseb
