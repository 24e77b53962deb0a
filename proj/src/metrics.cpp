#include "reseb/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace reseb {

ConfusionCounts confusion(std::span<const double> scores, std::span<const double> labels, double threshold) {
    if (scores.size() != labels.size()) {
        throw DimensionError("confusion: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool pos = labels[i] >= 0.5;
        if (pred && pos) ++c.tp;
        else if (pred && !pos) ++c.fp;
        else if (!pred && pos) ++c.fn;
        else ++c.tn;
    }
    return c;
}

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
    MetricsReport r;
    r.counts = c;
    const std::int64_t n = c.total();
    if (n > 0) r.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (r.precision && r.recall && (*r.precision + *r.recall) > 0.0) {
        r.f1 = 2.0 * (*r.precision) * (*r.recall) / (*r.precision + *r.recall);
    }
    return r;
}

std::optional<double> auc(std::span<const double> scores, std::span<const double> labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = scores.size();
    std::int64_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) pos += labels[i] >= 0.5 ? 1 : 0;
    const std::int64_t neg = static_cast<std::int64_t>(n) - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // rank-sum with mean ranks over ties
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mean_rank = static_cast<double>(i + 1 + j + 1) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] >= 0.5) pos_rank_sum += mean_rank;
        }
        i = j + 1;
    }
    const double u = pos_rank_sum - static_cast<double>(pos) * (static_cast<double>(pos) + 1.0) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

MetricsReport evaluate_scores(std::span<const double> scores, std::span<const double> labels, double threshold) {
    MetricsReport r = metrics_from_counts(confusion(scores, labels, threshold));
    r.auc = auc(scores, labels);
    return r;
}

} // namespace reseb
