#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "reseb/metrics.hpp"
#include "reseb/model.hpp"
#include "reseb/pipeline.hpp"

namespace reseb {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 1e-3;
    std::string optimizer = "adam"; // adaptive moments: 0.9/0.999, eps 1e-8
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;
    std::optional<int> patience; // early stop after this many epochs without improvement
    double threshold = 0.5;      // classification threshold for confusion metrics
};

struct TrainResult {
    Model model;
    std::vector<double> epoch_losses;
};

// Deterministic mini-batch training with binary cross-entropy. The seed fixes
// initialization, shuffling, and dropout masks. Log lines are
// "epoch=E step=S loss=L seed=X".
TrainResult train(const ModelSpec& spec, std::span<const WindowSample> train_samples, const TrainConfig& config,
                  std::ostream* log = nullptr);

MetricsReport evaluate_model(const Model& model, std::span<const WindowSample> samples, double threshold = 0.5);

struct MetricMeans {
    std::optional<double> accuracy, precision, recall, f1, auc;
};

struct TrialSet {
    std::vector<MetricsReport> trials;
    std::vector<std::vector<double>> loss_histories; // per trial
    std::vector<Model> models;                       // per trial
    MetricMeans mean;
};

// Trial k runs with seed = config.seed + k for initialization, shuffling,
// dropout, and its own undersampling draw from the train pool. Trials are
// independent and may run on parallel workers without changing any result.
TrialSet run_trials(const ModelSpec& spec, const CohortDataset& dataset, const TrainConfig& config, int n = 10,
                    int workers = 1, std::ostream* log = nullptr);

MetricMeans metric_means(const std::vector<MetricsReport>& trials);

} // namespace reseb
