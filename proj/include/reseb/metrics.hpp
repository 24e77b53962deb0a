#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "reseb/array.hpp"

namespace reseb {

struct ConfusionCounts {
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::int64_t total() const { return tp + tn + fp + fn; }
};

// Five-metric report. Division-by-zero cases are explicit empty optionals,
// never a silent zero.
struct MetricsReport {
    ConfusionCounts counts;
    std::optional<double> accuracy, precision, recall, f1, auc;
    bool fully_defined() const { return accuracy && precision && recall && f1 && auc; }
};

// prediction = score >= threshold
ConfusionCounts confusion(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

// accuracy/precision/recall/f1 from counts; auc left unset
MetricsReport metrics_from_counts(const ConfusionCounts& c);

// Mann-Whitney statistic with half credit for score ties; empty when only
// one class is present.
std::optional<double> auc(std::span<const double> scores, std::span<const double> labels);

// confusion + metrics + auc in one pass
MetricsReport evaluate_scores(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

} // namespace reseb
