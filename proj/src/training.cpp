#include "reseb/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace reseb {

namespace {

class AdamOptimizer {
public:
    AdamOptimizer(double lr, double b1, double b2, double eps) : lr_(lr), b1_(b1), b2_(b2), eps_(eps) {}

    void step(ParameterSet& params, const std::map<std::string, NumArray>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (auto& [name, value] : params.items()) {
            auto git = grads.find(name);
            if (git == grads.end()) continue;
            const NumArray& g = git->second;
            NumArray& m = moment(m_, name, value);
            NumArray& v = moment(v_, name, value);
            for (std::int64_t i = 0; i < value.size(); ++i) {
                m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
                v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    NumArray& moment(std::map<std::string, NumArray>& store, const std::string& name, const NumArray& like) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, NumArray::zeros(like.shape())).first;
        return it->second;
    }

    double lr_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, NumArray> m_, v_;
};

void fill_batch(std::span<const WindowSample> samples, std::span<const std::size_t> idx, NumArray& x, NumArray& y) {
    const std::int64_t T = samples[idx[0]].inputs.extent(0);
    const std::int64_t F = samples[idx[0]].inputs.extent(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const WindowSample& s = samples[idx[b]];
        std::copy(s.inputs.data(), s.inputs.data() + T * F, x.data() + static_cast<std::int64_t>(b) * T * F);
        y[static_cast<std::int64_t>(b)] = s.label;
    }
}

} // namespace

TrainResult train(const ModelSpec& spec, std::span<const WindowSample> train_samples, const TrainConfig& config,
                  std::ostream* log) {
    if (train_samples.empty()) throw ContractError("train: no samples");
    if (config.epochs < 1 || config.batch_size < 1 || config.learning_rate < 0.0) {
        throw ConfigError("train: epochs and batch size must be positive, learning rate nonnegative");
    }
    if (config.optimizer != "adam") {
        throw ConfigError("train: unknown optimizer '" + config.optimizer + "'");
    }

    Model model = build(spec);
    AdamOptimizer adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps);
    Rng shuffle_rng(hash_mix(config.seed, "shuffle"));
    Rng dropout_rng(hash_mix(config.seed, "dropout"));

    std::vector<std::size_t> order(train_samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    double best_loss = std::numeric_limits<double>::infinity();
    int stall = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int steps = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size),
                                                           order.size() - at);
            NumArray x = NumArray::zeros({static_cast<std::int64_t>(take), spec.months, spec.features});
            NumArray y = NumArray::zeros({static_cast<std::int64_t>(take)});
            fill_batch(train_samples, std::span<const std::size_t>(order.data() + at, take), x, y);

            double loss = 0.0;
            try {
                Tape tape;
                NodeId logits = forward_logits(tape, model, tape.constant(x), true, &dropout_rng);
                NodeId loss_node = tape.bce_with_logits(logits, y);
                loss = tape.scalar_value(loss_node);
                tape.backward(loss_node);
                adam.step(model.params, tape.gradients());
            } catch (const NumericError& e) {
                throw NumericError("train aborted at epoch " + std::to_string(epoch) + " step " +
                                   std::to_string(steps + 1) + ": " + e.what());
            }
            ++steps;
            epoch_loss += loss;
            if (log) {
                (*log) << "epoch=" << epoch << " step=" << steps << " loss=" << loss << " seed=" << config.seed
                       << "\n";
            }
        }
        epoch_loss /= static_cast<double>(steps);
        result.epoch_losses.push_back(epoch_loss);

        if (config.patience) {
            if (epoch_loss < best_loss - 1e-12) {
                best_loss = epoch_loss;
                stall = 0;
            } else if (++stall >= *config.patience) {
                break;
            }
        }
    }
    result.model = std::move(model);
    return result;
}

MetricsReport evaluate_model(const Model& model, std::span<const WindowSample> samples, double threshold) {
    if (samples.empty()) throw ContractError("evaluate: no samples");
    const std::int64_t T = model.spec.months, F = model.spec.features;
    std::vector<double> scores, labels;
    scores.reserve(samples.size());
    labels.reserve(samples.size());
    constexpr std::size_t kChunk = 256;
    for (std::size_t at = 0; at < samples.size(); at += kChunk) {
        const std::size_t take = std::min(kChunk, samples.size() - at);
        NumArray x = NumArray::zeros({static_cast<std::int64_t>(take), T, F});
        for (std::size_t b = 0; b < take; ++b) {
            const auto& s = samples[at + b];
            std::copy(s.inputs.data(), s.inputs.data() + T * F, x.data() + static_cast<std::int64_t>(b) * T * F);
        }
        NumArray p = forward(model, x);
        for (std::size_t b = 0; b < take; ++b) {
            scores.push_back(p[static_cast<std::int64_t>(b)]);
            labels.push_back(samples[at + b].label);
        }
    }
    return evaluate_scores(scores, labels, threshold);
}

MetricMeans metric_means(const std::vector<MetricsReport>& trials) {
    MetricMeans mean;
    auto fold = [&](std::optional<double> MetricsReport::* field) -> std::optional<double> {
        double sum = 0.0;
        for (const auto& t : trials) {
            if (!(t.*field)) return std::nullopt;
            sum += *(t.*field);
        }
        return trials.empty() ? std::nullopt : std::optional<double>(sum / static_cast<double>(trials.size()));
    };
    mean.accuracy = fold(&MetricsReport::accuracy);
    mean.precision = fold(&MetricsReport::precision);
    mean.recall = fold(&MetricsReport::recall);
    mean.f1 = fold(&MetricsReport::f1);
    mean.auc = fold(&MetricsReport::auc);
    return mean;
}

TrialSet run_trials(const ModelSpec& spec, const CohortDataset& dataset, const TrainConfig& config, int n,
                    int workers, std::ostream* log) {
    if (n < 1) throw ContractError("run_trials: n must be >= 1");
    if (workers < 1) workers = 1;

    TrialSet set;
    set.trials.resize(static_cast<std::size_t>(n));
    set.loss_histories.resize(static_cast<std::size_t>(n));
    set.models.resize(static_cast<std::size_t>(n));
    std::vector<std::string> logs(static_cast<std::size_t>(n));
    std::vector<std::string> errors(static_cast<std::size_t>(n));

    std::mutex next_mutex;
    int next = 0;
    auto worker_fn = [&]() {
        for (;;) {
            int k;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= n) return;
                k = next++;
            }
            try {
                const std::uint64_t trial_seed = config.seed + static_cast<std::uint64_t>(k);
                ModelSpec trial_spec = spec;
                trial_spec.seed = trial_seed;
                TrainConfig trial_config = config;
                trial_config.seed = trial_seed;
                auto balanced = undersample(dataset.train, trial_seed);
                std::ostringstream trial_log;
                TrainResult res = train(trial_spec, balanced, trial_config, log ? &trial_log : nullptr);
                set.trials[static_cast<std::size_t>(k)] =
                    evaluate_model(res.model, dataset.test, config.threshold);
                set.loss_histories[static_cast<std::size_t>(k)] = std::move(res.epoch_losses);
                set.models[static_cast<std::size_t>(k)] = std::move(res.model);
                logs[static_cast<std::size_t>(k)] = trial_log.str();
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(k)] = e.what();
            }
        }
    };

    if (workers == 1) {
        worker_fn();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker_fn);
        for (auto& t : pool) t.join();
    }

    for (int k = 0; k < n; ++k) {
        if (!errors[static_cast<std::size_t>(k)].empty()) {
            throw ContractError("trial " + std::to_string(k) + " failed: " + errors[static_cast<std::size_t>(k)]);
        }
    }
    if (log) {
        for (const auto& l : logs) (*log) << l;
    }
    set.mean = metric_means(set.trials);
    return set;
}

} // namespace reseb
